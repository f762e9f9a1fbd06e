"""Batch statistics over seeded trials.

One batch runs a scenario's episodes in index order and reduces them to the
benchmark-table row for that setup: hit and success rates, lateral spread of
the interception point, time-to-intercept and travel distributions. Each
summary carries the published reference row for the matching physical
experiment so reports always show simulated and measured values side by
side. All writers emit deterministic text: same scenario and seed, same
bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .episode import EpisodeResult, run_episode
from .scenario import Scenario


@dataclass(frozen=True)
class ReferenceRow:
    """Published benchmark row: the physical robot's measured outcomes."""

    plane_distance: float        # launcher to interception plane, meters
    launch_speed: float          # average, m/s
    y_iqr: float                 # lateral interception spread, IQR meters
    y_stddev: float              # lateral interception spread, stddev meters
    hit_rate: float
    success_rate: float


# Measured over 15 consecutive physical trials per setup.
REFERENCE_RESULTS = {
    "court": ReferenceRow(7.9, 8.01, 0.31, 0.23, 0.73, 0.66),
    "court_fast": ReferenceRow(12.8, 12.64, 0.26, 0.29, 0.60, 0.53),
    "lab_launcher": ReferenceRow(7.5, 6.79, 0.28, 0.20, 0.93, 0.80),
    "lab_human": ReferenceRow(7.5, 6.56, 0.54, 0.52, 0.40, 0.33),
}


@dataclass(frozen=True)
class Metrics:
    scenario: str
    n_trials: int
    n_hit: int
    n_success: int
    launch_speed_mean: float
    intercept_y_iqr: float       # nan when no trial was observed crossing
    intercept_y_stddev: float
    time_to_intercept_mean: float
    chair_travel_mean: float
    max_accel: float             # worst over the batch
    max_decel: float
    reference: Optional[ReferenceRow]

    @property
    def hit_rate(self) -> float:
        return self.n_hit / self.n_trials

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_trials


def run_batch(s: Scenario, n_trials: Optional[int] = None,
              scheduler: str = "serial",
              record_traces: bool = False) -> list[EpisodeResult]:
    """Episodes 0..n-1 of a scenario, in order. n_trials falls back to the
    scenario's own trial count."""
    n = s.n_trials if n_trials is None else int(n_trials)
    if n < 1:
        raise ValueError("need at least one trial")
    return [run_episode(s, i, record_trace=record_traces,
                        scheduler=scheduler) for i in range(n)]


def summarize(s: Scenario, results: Sequence[EpisodeResult]) -> Metrics:
    if not results:
        raise ValueError("no episodes to summarize")
    crossings = np.array([r.observed.point[1] for r in results
                          if r.observed is not None])
    if crossings.size:
        q1, q3 = np.percentile(crossings, [25.0, 75.0])
        y_iqr = float(q3 - q1)
        y_std = float(np.std(crossings))
    else:
        y_iqr = y_std = math.nan
    tti = np.array([r.time_to_intercept for r in results
                    if not math.isnan(r.time_to_intercept)])
    return Metrics(
        scenario=s.name,
        n_trials=len(results),
        n_hit=sum(r.hit for r in results),
        n_success=sum(r.success for r in results),
        launch_speed_mean=float(np.mean([r.launch_speed for r in results])),
        intercept_y_iqr=y_iqr,
        intercept_y_stddev=y_std,
        time_to_intercept_mean=float(np.mean(tti)) if tti.size else math.nan,
        chair_travel_mean=float(np.mean([r.chair_travel for r in results])),
        max_accel=max(r.max_accel for r in results),
        max_decel=max(r.max_decel for r in results),
        reference=REFERENCE_RESULTS.get(s.name),
    )


def pooled_convergence(results: Sequence[EpisodeResult],
                       n_bins: int = 20) -> np.ndarray:
    """Forecast error vs flight fraction pooled over a batch.

    Rows are (fraction_mid, mean|err_x|, mean|err_y|, mean|err_z|,
    std|err_y|, std|err_z|, count) for each occupied fraction bin; the
    per-episode series use the timing-scaled x error convention."""
    series = [r.convergence for r in results if r.convergence.size]
    if not series:
        return np.empty((0, 7))
    allrows = np.vstack(series)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.digitize(allrows[:, 0], edges) - 1, 0, n_bins - 1)
    out = []
    for b in range(n_bins):
        rows = allrows[idx == b]
        if not rows.size:
            continue
        out.append((0.5 * (edges[b] + edges[b + 1]),
                    float(np.mean(rows[:, 1])), float(np.mean(rows[:, 2])),
                    float(np.mean(rows[:, 3])), float(np.std(rows[:, 2])),
                    float(np.std(rows[:, 3])), float(len(rows))))
    return np.array(out).reshape(-1, 7)


def travel_outcome_bins(results: Sequence[EpisodeResult],
                        width: float = 0.3,
                        n_bins: int = 8) -> np.ndarray:
    """Reachability table: rows (bin_lo, bin_hi, trials, hits, successes)
    over chair travel distance."""
    out = []
    for b in range(n_bins):
        lo, hi = b * width, (b + 1) * width
        rows = [r for r in results if lo <= r.chair_travel < hi]
        out.append((lo, hi, len(rows), sum(r.hit for r in rows),
                    sum(r.success for r in rows)))
    return np.array(out, dtype=float)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


_METRIC_FIELDS = (
    ("n_trials", None),
    ("hit_rate", "hit_rate"),
    ("success_rate", "success_rate"),
    ("launch_speed_mean", "launch_speed"),
    ("intercept_y_iqr", "y_iqr"),
    ("intercept_y_stddev", "y_stddev"),
    ("time_to_intercept_mean", None),
    ("chair_travel_mean", None),
    ("max_accel", None),
    ("max_decel", None),
)


def write_metrics_csv(path, metrics: Sequence[Metrics]) -> None:
    """One row per scenario; every simulated column is paired with the
    published reference value (empty when the table has no such row)."""
    lines = ["scenario," + ",".join(
        name + ("," + name + "_reference" if ref else "")
        for name, ref in _METRIC_FIELDS)]
    for m in metrics:
        cells = [m.scenario]
        for name, ref in _METRIC_FIELDS:
            cells.append(_fmt(getattr(m, name)))
            if ref:
                cells.append(_fmt(getattr(m.reference, ref))
                             if m.reference is not None else "")
        lines.append(",".join(cells))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def format_report(metrics: Sequence[Metrics]) -> str:
    """Human-readable table, simulated beside published reference."""
    lines = [
        f"{'scenario':14s} {'trials':>6s} {'hit':>12s} {'success':>12s} "
        f"{'speed':>12s} {'y iqr':>12s} {'y std':>12s}",
        "-" * 84,
    ]

    def pair(val, ref, pct=False):
        if pct:
            shown = f"{100.0 * val:.0f}%"
            r = "" if ref is None else f"({100.0 * ref:.0f}%)"
        else:
            shown = f"{val:.2f}"
            r = "" if ref is None else f"({ref:.2f})"
        return f"{shown:>5s} {r:>6s}"

    for m in metrics:
        ref = m.reference
        lines.append(
            f"{m.scenario:14s} {m.n_trials:6d} "
            f"{pair(m.hit_rate, ref and ref.hit_rate, pct=True)} "
            f"{pair(m.success_rate, ref and ref.success_rate, pct=True)} "
            f"{pair(m.launch_speed_mean, ref and ref.launch_speed)} "
            f"{pair(m.intercept_y_iqr, ref and ref.y_iqr)} "
            f"{pair(m.intercept_y_stddev, ref and ref.y_stddev)}")
    lines.append("(reference values in parentheses: physical trials)")
    return "\n".join(lines)


def write_episodes_csv(path, results: Sequence[EpisodeResult]) -> None:
    header = ("index,outcome,launch_speed,observed_y,observed_z,"
              "t_cross,t_first_detection,time_to_intercept,committed,"
              "trigger_time,t_contact,chair_travel,max_accel,max_decel,"
              "n_measurements,n_predictions")
    lines = [header]
    for r in results:
        obs = r.observed
        lines.append(",".join([
            str(r.index), r.outcome.value, _fmt(r.launch_speed),
            _fmt(float(obs.point[1])) if obs else "",
            _fmt(float(obs.point[2])) if obs else "",
            _fmt(obs.t_cross) if obs else "",
            _fmt(r.t_first_detection), _fmt(r.time_to_intercept),
            str(int(r.committed)), _fmt(r.trigger_time), _fmt(r.t_contact),
            _fmt(r.chair_travel), _fmt(r.max_accel), _fmt(r.max_decel),
            str(r.n_measurements), str(r.n_predictions)]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_pooled_convergence_csv(path,
                                 results: Sequence[EpisodeResult]) -> None:
    pooled = pooled_convergence(results)
    lines = ["fraction,err_x_mean,err_y_mean,err_z_mean,"
             "err_y_std,err_z_std,count"]
    for row in pooled:
        lines.append(",".join(_fmt(float(v)) for v in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_trace_csvs(out_dir, results: Sequence[EpisodeResult]) -> list:
    """Per-episode closed-loop traces (ball, chair, racket head at the
    planner tick) for episodes recorded with tracing on."""
    written = []
    for r in results:
        if r.trace is None:
            continue
        path = out_dir / f"episode_{r.index:04d}.csv"
        np.savetxt(path, r.trace, fmt="%.10g", delimiter=",",
                   header="t,ball_x,ball_y,ball_z,chair_x,chair_y,"
                          "chair_heading,head_x,head_y,head_z",
                   comments="")
        written.append(path)
    return written
