"""Per-configuration summary table of mean accuracy differences.

For every (m, n, lm_type) cell the table reports the mean pretraining
boost (acc_extra - acc_base) and the mean test-text bias
(acc_test - acc_extra) in percentage points. Means are computed as
exact rationals from the integer counts and rounded once to two
decimals with banker's (half-even) rounding, so the emitted strings are
reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .dataio import AccuracyRecord

REPORT_HEADER = "m,n,lm_type,mean_boost_pp,mean_bias_pp,record_count"


@dataclass(frozen=True)
class ReportRow:
    m: int
    n: int
    lm_type: str
    mean_boost_pp: str
    mean_bias_pp: str
    record_count: int


def format_percentage_points(value: Fraction) -> str:
    """Exact fraction of accuracy -> percentage points, 2dp half-even."""
    scaled = value * 100
    with localcontext() as ctx:
        ctx.prec = 60
        decimal_value = Decimal(scaled.numerator) / Decimal(scaled.denominator)
        return str(decimal_value.quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


def report_means(records: Iterable[AccuracyRecord]) -> tuple[list[ReportRow], list[str]]:
    """Mean boost/bias per (m, n, lm_type), plus notes on omitted cells."""
    cells: dict[tuple[int, int, str], list[AccuracyRecord]] = {}
    for record in records:
        cells.setdefault((record.m, record.n, record.lm_type), []).append(record)
    notes: list[str] = []
    if not cells:
        notes.append("no records: empty report")
    rows: list[ReportRow] = []
    for (m, n, lm_type), cell in sorted(cells.items()):
        if n == 0:
            notes.append(f"cell (m={m}, n=0, lm_type={lm_type}) omitted: n is zero")
            continue
        boost = Fraction(
            sum(r.correct_extra - r.correct_base for r in cell), n * len(cell)
        )
        bias = Fraction(
            sum(r.correct_test - r.correct_extra for r in cell), n * len(cell)
        )
        rows.append(
            ReportRow(
                m=m,
                n=n,
                lm_type=lm_type,
                mean_boost_pp=format_percentage_points(boost),
                mean_bias_pp=format_percentage_points(bias),
                record_count=len(cell),
            )
        )
    return rows, notes


def write_report_csv(rows: list[ReportRow], path: str | Path) -> None:
    lines = [REPORT_HEADER]
    for row in rows:
        lines.append(
            f"{row.m},{row.n},{row.lm_type},{row.mean_boost_pp},"
            f"{row.mean_bias_pp},{row.record_count}"
        )
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
