"""Command-line interface: simulate, estimate, benchmark, inspect.

Exit codes: 0 on success, 1 on validation/usage errors, 2 on numeric
failures. Configuration comes from built-in case-study defaults, overlaid
by an optional JSON config file, overlaid by command-line flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .domain import SamplingConfig, load_dataset, save_dataset, dumps_json
from .errors import NumericError, ValidationError
from .harness import (
    ESTIMATORS,
    EstimateConfig,
    ExperimentConfig,
    emit_results,
    estimate_baseline,
    estimate_lebesgue,
    make_run_dataset,
    run_case_study,
)
from .lebesgue import event_compression_ratio
from .lti_sim import SecondOrderPlant

__all__ = ["main", "build_experiment_config"]

# flat key -> default; mirrors ExperimentConfig with the plant and sampling
# dataclasses unrolled so a JSON config file stays a single flat object
CONFIG_DEFAULTS = {
    "m": 0.05,
    "d": 0.2,
    "k": 1.0,
    "total_time": 30.0,
    "delta": 0.1,
    "h": 1.0,
    "sim_substeps": 20,
    "delta_u": 3.0,
    "noise_std": 0.05,
    "n_runs": 20,
    "seed": 0,
    "input_scale": 3.5,
    "em_iters": 40,
    "q_samples": 1000,
    "estimators": list(ESTIMATORS),
    "record_timing": False,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; here that code means a
    numeric failure, so usage problems are remapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_experiment_config(doc: dict) -> ExperimentConfig:
    """Turn a flat config mapping (CONFIG_DEFAULTS schema) into a config."""
    unknown = set(doc) - set(CONFIG_DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(CONFIG_DEFAULTS)
    merged.update(doc)
    return ExperimentConfig(
        plant=SecondOrderPlant(m=merged["m"], d=merged["d"], k=merged["k"]),
        total_time=merged["total_time"],
        sampling=SamplingConfig(
            delta=merged["delta"], h=merged["h"], sim_substeps=merged["sim_substeps"]
        ),
        delta_u=merged["delta_u"],
        noise_std=merged["noise_std"],
        n_runs=merged["n_runs"],
        seed=merged["seed"],
        input_scale=merged["input_scale"],
        em_iters=merged["em_iters"],
        q_samples=merged["q_samples"],
        estimators=tuple(merged["estimators"]),
        record_timing=bool(merged["record_timing"]),
    )


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as err:
        raise ValidationError(f"cannot read config file {path!r}: {err}") from err
    except json.JSONDecodeError as err:
        raise ValidationError(f"invalid JSON in config file {path!r}: {err}") from err
    if not isinstance(doc, dict):
        raise ValidationError(f"config file {path!r} must hold a JSON object")
    return doc


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flat keys, see README)")
    p.add_argument("--m", type=float, help="plant mass")
    p.add_argument("--d", type=float, help="plant damping")
    p.add_argument("--k", type=float, help="plant stiffness")
    p.add_argument("--total-time", type=float, dest="total_time", help="record length [s]")
    p.add_argument("--delta", type=float, help="fast sampling period [s]")
    p.add_argument("--h", type=float, help="threshold spacing")
    p.add_argument("--sim-substeps", type=int, dest="sim_substeps", help="crossing-grid refinement")
    p.add_argument("--delta-u", type=float, dest="delta_u", help="input hold period [s]")
    p.add_argument("--noise-std", type=float, dest="noise_std", help="output noise std")
    p.add_argument("--n-runs", type=int, dest="n_runs", help="Monte Carlo runs")
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--input-scale", type=float, dest="input_scale", help="input amplitude std")
    p.add_argument("--em-iters", type=int, dest="em_iters", help="EB iterations")
    p.add_argument("--q-samples", type=int, dest="q_samples", help="Monte Carlo draws per EB iteration")
    p.add_argument("--estimators", help="comma-separated subset of leb,rie,or")
    p.add_argument(
        "--record-timing",
        action="store_true",
        dest="record_timing",
        default=None,
        help="measure wall time per estimator (breaks byte-determinism of runs.csv)",
    )


def _config_from_args(args) -> ExperimentConfig:
    doc = _load_config_file(args.config) if args.config else {}
    for key in CONFIG_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if isinstance(doc.get("estimators"), str):
        doc["estimators"] = [s for s in doc["estimators"].split(",") if s]
    return build_experiment_config(doc)


def _impulse_grid(ds, t_end_cap: float = 10.0) -> np.ndarray:
    delta = ds.bands.delta
    t_end = min(ds.bands.n * delta, t_end_cap)
    return np.arange(int(round(t_end / delta)) + 1) * delta


def _cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    ds = make_run_dataset(cfg, args.run_id)
    save_dataset(ds, args.out)
    print(f"wrote {args.out}")
    print(f"bands: {ds.bands.n}  events: {len(ds.events)}  h: {ds.bands.h}  delta: {ds.bands.delta}")
    return 0


def _cmd_estimate(args) -> int:
    ds = load_dataset(args.data)
    ecfg = EstimateConfig(
        em_iters=args.em_iters,
        q_samples=args.q_samples,
        seed=args.seed,
        burn_in=args.burn_in,
        mstep_budget=args.mstep_budget,
    )
    if args.estimator == "leb":
        est, trace, sol = estimate_lebesgue(ds, ecfg)
        extras = {
            "em_iterations": len(trace.mstep_objective_per_iter),
            "weight_iterations": sol.iterations_run,
            "weights_converged": sol.converged,
        }
    else:
        source = "midpoint" if args.estimator == "rie" else "oracle"
        est = estimate_baseline(ds, ecfg, source=source)
        extras = {}

    t_grid = _impulse_grid(ds)
    g_hat = est.evaluate(t_grid)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ValidationError(f"cannot create output directory {str(out)!r}: {err}") from err
    doc = {
        "estimator": args.estimator,
        "rho_hat": {"gamma": est.rho.gamma, "beta": est.rho.beta, "sigma2": est.rho.sigma2},
        "n_bands": ds.bands.n,
        "n_events": len(ds.events) if ds.events is not None else None,
        "t_grid": [float(t) for t in t_grid],
        "g_hat": [float(g) for g in g_hat],
        "weights": [float(c) for c in est.c],
        **extras,
    }
    est_path = out / "estimate.json"
    est_path.write_text(dumps_json(doc), encoding="utf-8")
    written = [str(est_path)]
    if not args.no_figures:
        from .plots import impulse_figure

        (out / "figures").mkdir(exist_ok=True)
        written.append(
            impulse_figure(
                t_grid,
                {args.estimator: g_hat},
                out / "figures" / "impulse.png",
                title=f"impulse response ({args.estimator})",
            )
        )
    print(
        f"estimator: {args.estimator}  gamma_hat: {est.rho.gamma:.6g}  "
        f"beta_hat: {est.rho.beta:.6g}  sigma2_hat: {est.rho.sigma2:.6g}"
    )
    for p in written:
        print(f"wrote {p}")
    return 0


def _cmd_benchmark(args) -> int:
    cfg = _config_from_args(args)
    study = run_case_study(cfg)
    written = emit_results(study, args.out_dir)
    if not args.no_figures:
        from .plots import render_report

        written.extend(render_report(study, args.out_dir))
    s = study.summary
    print(f"runs completed: {s['n_runs_completed']}/{s['n_runs_requested']}")
    if s["mean_n_events"] is not None:
        print(f"mean events: {s['mean_n_events']:.2f} of {s['n_grid']} grid samples")
    for name, stats in s["estimators"].items():
        if stats["n_runs"]:
            print(f"  {name}: mean fit {stats['mean_fit']:.2f}  median {stats['median_fit']:.2f}")
    if s["failures"]:
        print(f"failures: {len(s['failures'])} (see summary.json)")
    for p in written:
        print(f"wrote {p}")
    return 0


def _cmd_inspect(args) -> int:
    ds = load_dataset(args.data)
    n = ds.bands.n
    eta = np.asarray(ds.bands.eta)
    print(f"bands: {n}  delta: {ds.bands.delta}  h: {ds.bands.h}")
    print(f"record length: {n * ds.bands.delta} s")
    print(f"band range: [{eta.min()}, {eta.max() + ds.bands.h})")
    print(f"input holds: {ds.input.n_holds}  delta_u: {ds.input.delta_u}")
    if ds.events is not None:
        ratio = event_compression_ratio(ds.events, n)
        print(f"events: {len(ds.events)}  compression: {ratio:.3f} of grid samples")
    print(f"oracle output: {'present' if ds.oracle_z is not None else 'absent'}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="lebid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate one dataset as JSON")
    _add_config_flags(p_sim)
    p_sim.add_argument("--run-id", type=int, dest="run_id", default=0, help="run index for seeding")
    p_sim.add_argument("--out", required=True, help="output dataset path (.json)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate an impulse response from a dataset")
    p_est.add_argument("--data", required=True, help="dataset JSON path")
    p_est.add_argument("--out-dir", required=True, dest="out_dir", help="output directory")
    p_est.add_argument("--estimator", choices=ESTIMATORS, default="leb")
    p_est.add_argument("--em-iters", type=int, dest="em_iters", default=40)
    p_est.add_argument("--q-samples", type=int, dest="q_samples", default=1000)
    p_est.add_argument("--burn-in", type=int, dest="burn_in", default=200)
    p_est.add_argument("--mstep-budget", type=int, dest="mstep_budget", default=200)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--no-figures", action="store_true", dest="no_figures")
    p_est.set_defaults(func=_cmd_estimate)

    p_bench = sub.add_parser("benchmark", help="run the Monte Carlo case study")
    _add_config_flags(p_bench)
    p_bench.add_argument("--out-dir", required=True, dest="out_dir", help="output directory")
    p_bench.add_argument("--no-figures", action="store_true", dest="no_figures")
    p_bench.set_defaults(func=_cmd_benchmark)

    p_ins = sub.add_parser("inspect", help="print dataset statistics")
    p_ins.add_argument("--data", required=True, help="dataset JSON path")
    p_ins.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
