"""Figure rendering for batch results.

Every figure is written straight to a file through the Agg backend so
reports work headless, and savefig metadata is pinned so rerunning the same
seed yields byte-identical images. Figures show the batch the way the
bench notebooks do: forecast convergence, travel vs outcome, interception
timing and scatter, and one representative swing profile.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dynamics import PlaneCrossing, simulate_flight  # noqa: E402
from .episode import EpisodeResult, Outcome  # noqa: E402
from .metrics import pooled_convergence, travel_outcome_bins  # noqa: E402
from .predictor import InterceptPrediction  # noqa: E402
from .scenario import Scenario, launch  # noqa: E402
from .stroke import MIN_CONTACT_HEIGHT, StrokePlanner  # noqa: E402
from .world import WheelchairState  # noqa: E402

_META = {"Software": "courtsim"}
_DPI = 120

_OUTCOME_STYLE = {
    Outcome.RETURNED: ("returned", "#2a9d3a"),
    Outcome.OUT: ("hit, not returned", "#e8a33d"),
    Outcome.MISS: ("miss", "#c8443c"),
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=_DPI, metadata=_META, bbox_inches="tight")
    plt.close(fig)
    return path


def convergence_figure(results: Sequence[EpisodeResult], path) -> Path:
    """Mean forecast error against flight fraction, one band per axis."""
    pooled = pooled_convergence(results)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    if pooled.size:
        f = pooled[:, 0]
        for col, scol, label, color in (
                (2, 4, "lateral (y)", "#1f77b4"),
                (3, 5, "height (z)", "#9467bd")):
            ax.plot(f, pooled[:, col], color=color, label=label)
            ax.fill_between(f, np.maximum(pooled[:, col] - pooled[:, scol],
                                          0.0),
                            pooled[:, col] + pooled[:, scol],
                            color=color, alpha=0.2, linewidth=0)
        ax.plot(f, pooled[:, 1], color="#7f7f7f", linestyle=":",
                label="along-track (timing)")
    ax.axhline(0.2, color="#555555", linestyle="--", linewidth=1,
               label="racket margin")
    ax.set_xlabel("fraction of flight since first detection")
    ax.set_ylabel("interception forecast error (m)")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper right")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def travel_figure(results: Sequence[EpisodeResult], path) -> Path:
    """Chair travel distance binned by trial outcome."""
    bins = travel_outcome_bins(results)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    centers = 0.5 * (bins[:, 0] + bins[:, 1])
    width = 0.8 * (bins[0, 1] - bins[0, 0])
    returned = bins[:, 4]
    out = bins[:, 3] - bins[:, 4]
    miss = bins[:, 2] - bins[:, 3]
    bottom = np.zeros(len(bins))
    for counts, outcome in ((returned, Outcome.RETURNED),
                            (out, Outcome.OUT), (miss, Outcome.MISS)):
        label, color = _OUTCOME_STYLE[outcome]
        ax.bar(centers, counts, width=width, bottom=bottom,
               color=color, label=label)
        bottom += counts
    ax.set_xlabel("chair travel (m)")
    ax.set_ylabel("trials")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)


def intercept_time_figure(results: Sequence[EpisodeResult], path) -> Path:
    """Histogram of time from first detection to plane crossing."""
    tti = [r.time_to_intercept for r in results
           if not math.isnan(r.time_to_intercept)]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    if tti:
        lo = math.floor(min(tti) * 10.0) / 10.0
        hi = math.ceil(max(tti) * 10.0) / 10.0
        ax.hist(tti, bins=np.arange(lo, hi + 0.05, 0.05),
                color="#1f77b4", edgecolor="white")
    ax.set_xlabel("time to intercept (s)")
    ax.set_ylabel("trials")
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)


def intercept_scatter_figure(results: Sequence[EpisodeResult], path) -> Path:
    """Crossing point in the interception plane, colored by outcome."""
    fig, ax = plt.subplots(figsize=(6.0, 4.8))
    for outcome, (label, color) in _OUTCOME_STYLE.items():
        pts = np.array([[r.observed.point[1], r.observed.point[2]]
                        for r in results
                        if r.observed is not None and r.outcome is outcome])
        if pts.size:
            ax.scatter(pts[:, 0], pts[:, 1], s=18, color=color, label=label)
    ax.axhline(MIN_CONTACT_HEIGHT, color="#555555", linestyle="--",
               linewidth=1, label="stroke floor")
    ax.set_xlabel("crossing y (m)")
    ax.set_ylabel("crossing z (m)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def _nominal_plan(s: Scenario):
    """Stroke against the jitter-free launch of a scenario."""
    from dataclasses import replace
    quiet = replace(s.launcher, speed_stddev=0.0, elevation_jitter=0.0,
                    azimuth_jitter=0.0, target_y_stddev=0.0)
    ball = launch(quiet, np.random.default_rng(0))
    res = simulate_flight(ball, s.world,
                          PlaneCrossing(s.plane_x, -1.0, horizon=4.0))
    if res.crossing is None:
        return None
    cs = res.crossing
    pred = InterceptPrediction(
        plane_x=s.plane_x, point=cs.p.copy(), t_cross=float(cs.t),
        pos_cov=1e-4 * np.eye(3), valid=True)
    chair = WheelchairState(x=s.robot_home[0], y=s.robot_home[1],
                            heading=s.robot_home[2])
    return StrokePlanner(model=s.arm, court=s.court).plan(pred, chair)


def stroke_figure(s: Scenario, path) -> Optional[Path]:
    """Joint speed trapezoids of the nominal swing, contact marked."""
    plan = _nominal_plan(s)
    if plan is None:
        return None
    stroke = plan.stroke
    ts = np.linspace(0.0, stroke.t_total, 400)
    rates = np.array([stroke.joint_rates(t) for t in ts])
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for j, (label, color) in enumerate((
            ("base yaw", "#1f77b4"), ("shoulder pitch", "#2a9d3a"),
            ("elbow pitch", "#c8443c"))):
        ax.plot(ts, np.abs(rates[:, j]), color=color, label=label)
    ax.axvline(stroke.t_to_contact, color="#555555", linestyle="--",
               linewidth=1, label="contact")
    ax.set_xlabel("time since trigger (s)")
    ax.set_ylabel("joint speed (rad/s)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def render_report(out_dir, s: Scenario,
                  results: Sequence[EpisodeResult]) -> list:
    """All batch figures into a directory; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        convergence_figure(results, out_dir / "convergence.png"),
        travel_figure(results, out_dir / "travel_outcomes.png"),
        intercept_time_figure(results, out_dir / "intercept_times.png"),
        intercept_scatter_figure(results, out_dir / "intercept_scatter.png"),
    ]
    stroke = stroke_figure(s, out_dir / "stroke_profile.png")
    if stroke is not None:
        written.append(stroke)
    return written
