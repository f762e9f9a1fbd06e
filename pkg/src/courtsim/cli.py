"""Command line front end.

simulate runs a scenario batch and writes the delimited outputs (and
figures on request), sweep repeats a batch across one parameter range,
calibrate-noise fits the distance-dependent sigma model to logged samples,
and replay feeds recorded wire-format measurements through the tracker.
Identical arguments produce byte-identical outputs.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .metrics import (format_report, run_batch, summarize,
                      write_episodes_csv, write_metrics_csv,
                      write_pooled_convergence_csv, write_trace_csvs)
from .scenario import (resolve_scenario, set_scenario_param,
                       write_scenario_reference)
from .tracker import BallTracker, TrackMode, confidence
from .vision import fit_noise_model, read_measurement_file


def _add_common(p):
    p.add_argument("--scenario", default="court",
                   help="preset name or scenario file path")
    p.add_argument("--trials", type=int, default=None,
                   help="override the scenario's episode count")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario's root seed")
    p.add_argument("--scheduler", choices=("serial", "threads"),
                   default="serial", help="rig stream generation mode")


def _load(args):
    s = resolve_scenario(args.scenario)
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    if args.trials is not None:
        s = replace(s, n_trials=args.trials)
    return s


def _simulate(args) -> int:
    s = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_batch(s, scheduler=args.scheduler, record_traces=True)
    metrics = summarize(s, results)
    write_metrics_csv(out / "metrics.csv", [metrics])
    write_episodes_csv(out / "episodes.csv", results)
    write_pooled_convergence_csv(out / "convergence.csv", results)
    traces = out / "trajectories"
    traces.mkdir(exist_ok=True)
    write_trace_csvs(traces, results)
    if args.figures:
        from .report import render_report
        render_report(out / "figures", s, results)
    print(format_report([metrics]))
    print(f"outputs in {out}")
    return 0


def _parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) == 1:
        return np.array([float(parts[0])])
    if len(parts) == 3:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("range needs at least one point")
        return np.linspace(lo, hi, n)
    raise ValueError(f"range is value or lo:hi:n, got {text!r}")


def _sweep(args) -> int:
    base = _load(args)
    name, _, rng = args.param.partition("=")
    if not _:
        raise SystemExit(f"--param needs path=range, got {args.param!r}")
    values = _parse_range(rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["param,value,n_trials,hit_rate,success_rate"]
    print(f"{'value':>10s} {'hit':>6s} {'success':>8s}")
    for v in values:
        s = set_scenario_param(base, name, float(v))
        m = summarize(s, run_batch(s, scheduler=args.scheduler))
        lines.append(f"{name},{float(v)!r},{m.n_trials},"
                     f"{m.hit_rate!r},{m.success_rate!r}")
        print(f"{v:10.4g} {m.hit_rate:6.0%} {m.success_rate:8.0%}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    print(f"outputs in {out}")
    return 0


def _calibrate(args) -> int:
    raw = np.loadtxt(args.samples, delimiter=",", ndmin=2)
    if raw.shape[1] != 3:
        raise SystemExit("samples must have columns distance,measured,true")
    model = fit_noise_model([tuple(row) for row in raw])
    print(f"noise_a = {model.a!r}")
    print(f"noise_b = {model.b!r}")
    print(f"noise_c = {model.c!r}")
    return 0


def _replay(args) -> int:
    ms = read_measurement_file(args.measurements)
    ms.sort(key=lambda m: (m.t_arrival, m.t_capture, m.rig_id))
    tracker = BallTracker(resolve_scenario(args.scenario).world)
    ts = tracker.idle()
    lines = ["t,px,py,pz,vx,vy,vz,confidence,n_measurements"]
    for n, m in enumerate(ms, start=1):
        ts = tracker.ingest(ts, m, now=m.t_arrival)
        conf = (confidence(ts)
                if ts.mode is TrackMode.TRACKING else float("nan"))
        cells = [repr(float(ts.t))]
        cells += [repr(float(x)) for x in ts.mean]
        cells += [repr(float(conf)), str(n)]
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"{len(ms)} measurements -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _reference(args) -> int:
    write_scenario_reference(args.out)
    print(f"scenario reference written to {args.out}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="courtsim",
        description="wheelchair tennis interception simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario batch")
    _add_common(p)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--figures", action="store_true",
                   help="render figures next to the delimited outputs")
    p.set_defaults(fn=_simulate)

    p = sub.add_parser("sweep", help="batch per value of one parameter")
    _add_common(p)
    p.add_argument("--param", required=True,
                   help="section.field=value or section.field=lo:hi:n")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(fn=_sweep)

    p = sub.add_parser("calibrate-noise",
                       help="fit sigma(distance) to logged samples")
    p.add_argument("--samples", required=True,
                   help="CSV with columns distance,measured,true")
    p.set_defaults(fn=_calibrate)

    p = sub.add_parser("replay",
                       help="run recorded measurements through the tracker")
    p.add_argument("--measurements", required=True,
                   help="wire-format measurement file")
    p.add_argument("--scenario", default="court",
                   help="preset or file supplying the world model")
    p.add_argument("--out", default=None, help="state log CSV (else stdout)")
    p.set_defaults(fn=_replay)

    p = sub.add_parser("reference",
                       help="write the documented scenario file template")
    p.add_argument("--out", default="scenario_reference.ini",
                   help="where to write the template")
    p.set_defaults(fn=_reference)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
