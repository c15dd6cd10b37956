import math

import numpy as np
import pytest

from fewbench import freqtests
from fewbench.freqtests import (
    ConfigurationError,
    PairedDiffs,
    UndefinedCorrelationError,
    bh_adjust,
    observed_correlations,
    permuted_correlation_nulls,
    signflip_test,
    spearman,
)

# ------------------------------------------------------- sign-flip test


def test_exhaustive_small_vector():
    # [2, 1, 3, -1]: observed sum 5; flipping a subset F keeps the sum at
    # or above 5 iff sum(F) <= 0, which holds for {}, {-1}, {1, -1}.
    result = signflip_test([2.0, 1.0, 3.0, -1.0])
    assert result.exhaustive
    assert result.n_permutations == 16
    assert result.p_raw == 3.0 / 16.0
    assert result.statistic == pytest.approx(1.25)


def test_exhaustive_floor_is_two_to_minus_k():
    result = signflip_test([1.0] * 5)
    assert result.p_raw == 1.0 / 32.0


def test_ties_count_toward_rejection():
    # [1, -1]: sign patterns (+,+), (+,-), (-,-) give sums 0, 2, 0; with
    # observed sum 0 the two ties are counted, so p = 3/4.
    result = signflip_test([1.0, -1.0])
    assert result.p_raw == 3.0 / 4.0


def test_accepts_paired_diffs_wrapper():
    as_list = signflip_test([2.0, 1.0, 3.0, -1.0])
    as_obj = signflip_test(PairedDiffs((2.0, 1.0, 3.0, -1.0)))
    assert as_obj.p_raw == as_list.p_raw


def test_monte_carlo_used_above_enumeration_limit():
    diffs = np.random.default_rng(0).normal(0.2, 1.0, size=20)
    result = signflip_test(diffs, n_permutations=5000, seed=1)
    assert not result.exhaustive
    assert result.n_permutations == 5000
    assert 0.0 < result.p_raw <= 1.0


def test_monte_carlo_never_returns_zero():
    result = signflip_test([10.0] * 20, n_permutations=1000, seed=0)
    assert result.p_raw == 1.0 / 1001.0


def test_monte_carlo_agrees_with_exhaustive():
    rng = np.random.default_rng(4)
    for case in range(3):
        diffs = rng.normal(0.3, 1.0, size=10)
        exact = signflip_test(diffs)
        mc = signflip_test(diffs, method="monte-carlo", n_permutations=20000,
                           seed=case)
        se = math.sqrt(exact.p_raw * (1.0 - exact.p_raw) / 20000)
        assert abs(mc.p_raw - exact.p_raw) < 3.0 * se + 1e-4
        assert exact.exhaustive and not mc.exhaustive


def test_monte_carlo_deterministic_per_seed():
    diffs = list(np.random.default_rng(2).normal(size=15))
    a = signflip_test(diffs, n_permutations=5000, seed=3)
    b = signflip_test(diffs, n_permutations=5000, seed=3)
    c = signflip_test(diffs, n_permutations=5000, seed=4)
    assert a.p_raw == b.p_raw
    assert a.p_raw != c.p_raw


def test_method_and_input_validation():
    with pytest.raises(ConfigurationError):
        signflip_test([1.0], method="bootstrap")
    with pytest.raises(ConfigurationError):
        signflip_test([1.0] * 13, method="exhaustive")
    with pytest.raises(ConfigurationError):
        signflip_test([1.0] * 20, n_permutations=50)
    with pytest.raises(ValueError):
        signflip_test([])
    with pytest.raises(ValueError):
        signflip_test([1.0, math.nan])
    with pytest.raises(ValueError):
        PairedDiffs(())
    with pytest.raises(ValueError):
        PairedDiffs((math.inf,))


def test_result_validation():
    with pytest.raises(ValueError):
        freqtests.TestResult(statistic=0.0, p_raw=1.5, n_permutations=10,
                             exhaustive=True)
    with pytest.raises(ValueError):
        freqtests.TestResult(statistic=0.0, p_raw=0.5, n_permutations=10,
                             exhaustive=True, p_adjusted=-0.1)


# ------------------------------------------------ Benjamini-Hochberg


def test_bh_adjust_worked_example():
    assert bh_adjust([0.01, 0.02, 0.04]) == pytest.approx([0.03, 0.03, 0.04])


def test_bh_adjust_preserves_input_order():
    adjusted = bh_adjust([0.04, 0.01, 0.02])
    assert adjusted == pytest.approx([0.04, 0.03, 0.03])


def test_bh_adjust_caps_at_one_and_keeps_order():
    adjusted = bh_adjust([0.5, 0.6])
    assert adjusted == pytest.approx([0.6, 0.6])
    rng = np.random.default_rng(1)
    p = rng.uniform(size=30)
    adj = np.asarray(bh_adjust(p))
    assert np.all(adj <= 1.0)
    assert np.all(adj >= p - 1e-15)
    # Adjustment is monotone: sorting by raw p sorts adjusted p too.
    order = np.argsort(p)
    assert np.all(np.diff(adj[order]) >= -1e-15)


def test_bh_adjust_edges():
    assert bh_adjust([]) == []
    assert bh_adjust([0.2]) == pytest.approx([0.2])
    with pytest.raises(ValueError):
        bh_adjust([0.5, 1.2])


# ---------------------------------------------------------- Spearman


def test_spearman_perfect_monotone():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert spearman([1, 2, 3, 4], [5, 3, 2, 1]) == -1.0


def test_spearman_with_ties_fixed_value():
    # ranks [1, 2.5, 2.5, 4] vs [1, 3, 2, 4]
    value = spearman([1, 2, 2, 3], [1, 3, 2, 4])
    assert value == pytest.approx(0.9486832980505138, rel=1e-12)


def test_spearman_errors():
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1], [2])
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 1, 1], [1, 2, 3])


def test_observed_correlations_skips_degenerate_tasks():
    pairs = {
        "good": ([1, 2, 3, 4], [2, 1, 4, 3]),
        "flat": ([1, 1, 1], [1, 2, 3]),
        "short": ([1], [2]),
    }
    with pytest.warns(UserWarning):
        out = observed_correlations(pairs)
    assert set(out) == {"good"}
    assert out["good"] == pytest.approx(spearman([1, 2, 3, 4], [2, 1, 4, 3]))


def test_permuted_nulls_shape_and_determinism():
    pairs = {
        "a": (list(range(8)), list(np.random.default_rng(0).normal(size=8))),
        "b": (list(range(8)), list(np.random.default_rng(1).normal(size=8))),
    }
    draws1 = permuted_correlation_nulls(pairs, n_draws=20, seed=5)
    draws2 = permuted_correlation_nulls(pairs, n_draws=20, seed=5)
    other = permuted_correlation_nulls(pairs, n_draws=20, seed=6)
    assert len(draws1) == 20
    assert all(d.shape == (2,) for d in draws1)
    assert all(np.array_equal(x, y) for x, y in zip(draws1, draws2))
    assert any(not np.array_equal(x, y) for x, y in zip(draws1, other))
    # Shuffling breaks the pairing, so null correlations center near zero.
    pooled = np.concatenate(draws1)
    assert abs(pooled.mean()) < 0.25


def test_permuted_nulls_skip_degenerate_tasks_once():
    pairs = {
        "ok": (list(range(6)), [3, 1, 2, 6, 5, 4]),
        "flat": ([2, 2, 2], [1, 2, 3]),
    }
    with pytest.warns(UserWarning):
        draws = permuted_correlation_nulls(pairs, n_draws=4, seed=0)
    assert all(d.shape == (1,) for d in draws)
