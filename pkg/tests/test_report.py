from fractions import Fraction

from fewbench.dataio import AccuracyRecord
from fewbench.report import (
    REPORT_HEADER,
    format_percentage_points,
    report_means,
    write_report_csv,
)


def rec(lm="bert", task="sst2", k=0, m=50, n=400, base=100, extra=100, test=100):
    return AccuracyRecord(lm_type=lm, task_id=task, subsample_index=k, m=m, n=n,
                          correct_base=base, correct_extra=extra, correct_test=test)


def test_format_rounds_half_to_even():
    assert format_percentage_points(Fraction(1, 800)) == "0.12"   # 0.125 -> even
    assert format_percentage_points(Fraction(3, 800)) == "0.38"   # 0.375 -> even
    assert format_percentage_points(Fraction(1, 20000)) == "0.00"  # 0.005 -> even
    assert format_percentage_points(Fraction(41, 1000)) == "4.10"
    assert format_percentage_points(Fraction(-19, 1000)) == "-1.90"
    assert format_percentage_points(Fraction(0)) == "0.00"


def test_report_means_exact_cell():
    records = [
        rec(base=100, extra=101, test=102),  # boost 1, bias 1
        rec(k=1, base=100, extra=100, test=102),  # boost 0, bias 2
    ]
    rows, notes = report_means(records)
    assert notes == []
    assert len(rows) == 1
    row = rows[0]
    assert (row.m, row.n, row.lm_type, row.record_count) == (50, 400, "bert", 2)
    # boost mean 1/800 = 0.125pp, bias mean 3/800 = 0.375pp, both half-even
    assert row.mean_boost_pp == "0.12"
    assert row.mean_bias_pp == "0.38"


def test_report_groups_and_sorts_cells():
    records = [
        rec(lm="gpt", n=100, base=50, extra=60, test=60),
        rec(lm="bert", n=100, base=50, extra=55, test=58),
        rec(lm="bert", n=200, base=100, extra=110, test=111),
        rec(lm="bert", m=20, n=100, base=40, extra=44, test=45),
    ]
    rows, notes = report_means(records)
    assert notes == []
    keys = [(r.m, r.n, r.lm_type) for r in rows]
    assert keys == sorted(keys)
    assert keys == [(20, 100, "bert"), (50, 100, "bert"), (50, 100, "gpt"),
                    (50, 200, "bert")]
    by_key = {k: r for k, r in zip(keys, rows)}
    assert by_key[(50, 100, "gpt")].mean_boost_pp == "10.00"
    assert by_key[(50, 100, "gpt")].mean_bias_pp == "0.00"
    assert by_key[(50, 200, "bert")].mean_bias_pp == "0.50"


def test_report_empty_and_degenerate_cells():
    rows, notes = report_means([])
    assert rows == []
    assert notes == ["no records: empty report"]
    rows, notes = report_means([rec(n=0, base=0, extra=0, test=0)])
    assert rows == []
    assert len(notes) == 1 and "n is zero" in notes[0]


def test_write_report_csv_bytes(tmp_path):
    records = [rec(base=100, extra=101, test=103)]
    rows, _ = report_means(records)
    out = tmp_path / "report.csv"
    write_report_csv(rows, out)
    content = out.read_bytes()
    assert content == (
        REPORT_HEADER + "\n" + "50,400,bert,0.25,0.50,1\n"
    ).encode()
    write_report_csv(rows, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == content
