"""Record pruning: flagged rows, incomplete component groups, sum checks, IQR outliers.

The four stages run in a fixed order; counts are tracked per stage so
input_count == retained + sum(removed) always holds. Arrival-delay summary
stats are captured before and after the outlier stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .schema import COMPONENT_FIELDS, FlightRecord

DEFAULT_SUM_TOLERANCE = 0.5  # minutes; absorbs float ingestion noise
IQR_MULTIPLIER = 1.5

STAGE_NAMES = ("cancelled_or_diverted", "missing_components", "sum_mismatch", "outlier")


def drop_cancelled_diverted(records):
    """Remove rows with either flag set. Returns (retained, removed_count)."""
    retained = [r for r in records if r.cancelled == 0 and r.diverted == 0]
    return retained, len(records) - len(retained)


def drop_missing_components(records):
    """Keep only rows where all five delay components are present."""
    retained = [r for r in records if r.delay_components() is not None]
    return retained, len(records) - len(retained)


def verify_component_sum(records, tolerance: float = DEFAULT_SUM_TOLERANCE):
    """Drop rows whose component sum disagrees with ARR_DELAY beyond tolerance.

    Inputs must already have the full component group. A missing ARR_DELAY
    also counts as removed (there is nothing to verify against). Returns
    (retained, removed_count, worst_residual) where worst_residual is the
    largest |sum - arr_delay| seen across all rows that had ARR_DELAY.
    """
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    retained = []
    removed = 0
    worst = 0.0
    for r in records:
        vec = r.delay_components()
        if vec is None:
            raise ValueError("verify_component_sum requires the full component group")
        if r.arr_delay is None:
            removed += 1
            continue
        residual = abs(vec.total() - r.arr_delay)
        worst = max(worst, residual)
        if residual <= tolerance:
            retained.append(r)
        else:
            removed += 1
    return retained, removed, worst


def _quantile(sorted_values, q: float) -> float:
    # linear interpolation on order statistics: position q*(n-1)
    n = len(sorted_values)
    pos = q * (n - 1)
    lo = math.floor(pos)
    frac = pos - lo
    if lo + 1 < n:
        return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo])
    return float(sorted_values[lo])


def iqr_bounds(values, multiplier: float = IQR_MULTIPLIER):
    """Tukey fences (Q1 - k*IQR, Q3 + k*IQR) with linear-interpolation quartiles.

    Quartile rule: sorted x(0..n-1), position p = q*(n-1), value
    x(floor(p)) + frac(p) * (x(floor(p)+1) - x(floor(p))). Single-element
    input yields a degenerate zero-width fence around that value.
    """
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("iqr_bounds of empty input")
    q1 = _quantile(vals, 0.25)
    q3 = _quantile(vals, 0.75)
    iqr = q3 - q1
    return q1 - multiplier * iqr, q3 + multiplier * iqr


def filter_outliers(records, multiplier: float = IQR_MULTIPLIER):
    """Drop rows whose ARR_DELAY falls outside the IQR fence (bounds inclusive).

    Bounds are computed from the input rows themselves. Returns
    (retained, removed_count, (lower, upper)).
    """
    delays = []
    for r in records:
        if r.arr_delay is None:
            raise ValueError("filter_outliers requires ARR_DELAY on every row")
        delays.append(r.arr_delay)
    lower, upper = iqr_bounds(delays, multiplier)
    retained = [r for r in records if lower <= r.arr_delay <= upper]
    return retained, len(records) - len(retained), (lower, upper)


@dataclass(frozen=True)
class DelayStats:
    count: int
    mean: float
    std: float  # sample std (ddof=1); 0.0 when count < 2
    minimum: float
    maximum: float


def _delay_stats(records) -> DelayStats:
    vals = [r.arr_delay for r in records]
    n = len(vals)
    mean = sum(vals) / n
    if n > 1:
        var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    else:
        var = 0.0
    return DelayStats(n, mean, math.sqrt(var), min(vals), max(vals))


@dataclass(frozen=True)
class PruneReport:
    """Per-stage removal accounting plus arrival-delay summaries."""

    input_count: int
    removed: dict  # stage name -> count
    retained_count: int
    sum_tolerance: float
    worst_sum_residual: float
    iqr_lower: float
    iqr_upper: float
    stats_before_outliers: DelayStats
    stats_after_outliers: DelayStats

    def __post_init__(self):
        total = self.retained_count + sum(self.removed.values())
        if total != self.input_count:
            raise ValueError(
                f"prune accounting broken: input {self.input_count} != "
                f"retained {self.retained_count} + removed {sum(self.removed.values())}")

    def stage_rows(self):
        """(stage, removed, pct_of_input, pct_of_entering) per stage, in order."""
        rows = []
        entering = self.input_count
        for stage in STAGE_NAMES:
            n = self.removed[stage]
            pct_input = 100.0 * n / self.input_count if self.input_count else 0.0
            pct_entering = 100.0 * n / entering if entering else 0.0
            rows.append((stage, n, pct_input, pct_entering))
            entering -= n
        return rows

    def to_text(self) -> str:
        lines = [f"input_count={self.input_count}"]
        for stage, n, pct_in, pct_step in self.stage_rows():
            lines.append(f"removed_{stage}={n}")
            lines.append(f"removed_{stage}_pct_of_input={pct_in:.3f}")
            lines.append(f"removed_{stage}_pct_of_entering={pct_step:.3f}")
        lines.append(f"retained_count={self.retained_count}")
        lines.append(f"sum_tolerance={self.sum_tolerance}")
        lines.append(f"worst_sum_residual={self.worst_sum_residual}")
        lines.append(f"iqr_lower={self.iqr_lower}")
        lines.append(f"iqr_upper={self.iqr_upper}")
        for tag, s in (("pre_outlier", self.stats_before_outliers),
                       ("post_outlier", self.stats_after_outliers)):
            lines.append(f"arr_delay_{tag}_count={s.count}")
            lines.append(f"arr_delay_{tag}_mean={s.mean:.3f}")
            lines.append(f"arr_delay_{tag}_std={s.std:.3f}")
            lines.append(f"arr_delay_{tag}_min={s.minimum}")
            lines.append(f"arr_delay_{tag}_max={s.maximum}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["stage,removed,pct_of_input,pct_of_entering"]
        for stage, n, pct_in, pct_step in self.stage_rows():
            lines.append(f"{stage},{n},{pct_in:.3f},{pct_step:.3f}")
        return "\n".join(lines) + "\n"


def run_pipeline(records, sum_tolerance: float = DEFAULT_SUM_TOLERANCE,
                 iqr_multiplier: float = IQR_MULTIPLIER):
    """All four stages in order. Returns (retained_records, PruneReport).

    Raises if any stage empties the survivor set: downstream stages and the
    report stats are meaningless without survivors.
    """
    input_count = len(records)
    stage1, n_flagged = drop_cancelled_diverted(records)
    if not stage1:
        raise ValueError("no records survive the cancelled/diverted stage")
    stage2, n_missing = drop_missing_components(stage1)
    if not stage2:
        raise ValueError("no records survive the component-presence stage")
    stage3, n_mismatch, worst = verify_component_sum(stage2, sum_tolerance)
    if not stage3:
        raise ValueError("no records survive the component-sum stage")
    stats_before = _delay_stats(stage3)
    stage4, n_outlier, (lower, upper) = filter_outliers(stage3, iqr_multiplier)
    if not stage4:
        raise ValueError("no records survive the outlier stage")
    report = PruneReport(
        input_count=input_count,
        removed={
            "cancelled_or_diverted": n_flagged,
            "missing_components": n_missing,
            "sum_mismatch": n_mismatch,
            "outlier": n_outlier,
        },
        retained_count=len(stage4),
        sum_tolerance=sum_tolerance,
        worst_sum_residual=worst,
        iqr_lower=lower,
        iqr_upper=upper,
        stats_before_outliers=stats_before,
        stats_after_outliers=_delay_stats(stage4),
    )
    return stage4, report
