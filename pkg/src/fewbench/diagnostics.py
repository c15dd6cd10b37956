"""Convergence diagnostics for multi-chain MCMC output.

``split_rhat`` is the rank-free split potential scale reduction factor:
each chain is halved and the classic between/within variance ratio is
computed on the 2C half-chains, which also flags within-chain drift.

``effective_sample_size`` combines per-chain FFT autocovariances with
Geyer's initial-positive-sequence truncation (paired autocorrelations
summed until a pair goes negative, then forced monotone non-increasing),
with the usual between-chain correction through the pooled variance.
Chains are used as given, not split.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.fft import next_fast_len


def _as_chain_matrix(chains: np.ndarray) -> np.ndarray:
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :]
    if chains.ndim != 2:
        raise ValueError(f"expected (chains, draws) array, got shape {chains.shape}")
    return chains


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased (divide-by-N) autocovariance of one sequence via FFT."""
    n = x.shape[0]
    centered = x - x.mean()
    size = next_fast_len(2 * n)
    freq = np.fft.rfft(centered, size)
    acov = np.fft.irfft(freq * np.conj(freq), size)[:n]
    return acov / n


def split_rhat(chains: np.ndarray) -> float:
    """Split potential scale reduction factor across chains.

    Returns NaN when fewer than two draws per half-chain are available or
    the draws are not finite; returns 1.0 for exactly constant input.
    """
    chains = _as_chain_matrix(chains)
    n_draws = chains.shape[1]
    half = n_draws // 2
    if half < 2 or not np.all(np.isfinite(chains)):
        return math.nan
    halves = np.concatenate([chains[:, :half], chains[:, n_draws - half:]], axis=0)
    within = halves.var(axis=1, ddof=1).mean()
    between = half * halves.mean(axis=1).var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else math.inf
    var_plus = (half - 1) / half * within + between / half
    return math.sqrt(var_plus / within)


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain effective sample size with Geyer truncation.

    Capped at ``total * log10(total)`` for antithetic chains; NaN for
    constant or non-finite input or fewer than four draws per chain.
    """
    chains = _as_chain_matrix(chains)
    n_chains, n_draws = chains.shape
    if n_draws < 4 or not np.all(np.isfinite(chains)):
        return math.nan
    if np.all(chains == chains.flat[0]):
        return math.nan

    acov = np.stack([_autocovariance(chain) for chain in chains])
    chain_vars = acov[:, 0] * n_draws / (n_draws - 1)
    within = chain_vars.mean()
    var_plus = within * (n_draws - 1) / n_draws
    if n_chains > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus == 0.0 or not math.isfinite(var_plus):
        return math.nan
    mean_acov = acov.mean(axis=0)

    rho = np.zeros(n_draws)
    rho[0] = 1.0
    rho[1] = 1.0 - (within - mean_acov[1]) / var_plus
    rho_even = rho[0]
    rho_odd = rho[1]
    s = 1
    while s < n_draws - 4 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (within - mean_acov[s + 1]) / var_plus
        rho_odd = 1.0 - (within - mean_acov[s + 2]) / var_plus
        if rho_even + rho_odd >= 0.0:
            rho[s + 1] = rho_even
            rho[s + 2] = rho_odd
        s += 2
    max_s = s
    # Keep one extra positive term as a bias correction for antithetic chains.
    if rho_even > 0.0:
        rho[max_s + 1] = rho_even

    for t in range(1, max_s - 2, 2):
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]

    total = float(n_chains * n_draws)
    tau = -1.0 + 2.0 * rho[:max_s].sum() + rho[max_s + 1]
    return min(total / tau, total * math.log10(total))
