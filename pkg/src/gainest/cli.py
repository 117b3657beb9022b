"""Command-line front end for the Monte-Carlo experiments.

Subcommands: ``sweep-t0``, ``sweep-alpha``, ``coverage``, ``nondiff``,
``theory``.  Options can be preloaded from a flat ``key=value`` config file
(``--config``) and overridden by flags.  Exit codes: 0 on success, 2 on a
configuration error, 3 on an I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import ExperimentConfig, emit_csv, emit_svg_plot, run_experiment
from .optimize import EstimatorConfig

_EXPERIMENT_BY_COMMAND = {
    "sweep-t0": "sweep_t0",
    "sweep-alpha": "sweep_alpha",
    "coverage": "interval_coverage",
    "nondiff": "nondiff_scaling",
    "theory": "theory_table",
}


def parse_grid(text: str) -> tuple:
    """start:step:stop (stop inclusive up to rounding) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid range {text!r}")
        count = int(round((stop - start) / step)) + 1
        vals = [start + i * step for i in range(count)]
        return tuple(v for v in vals if v <= stop + 1e-12 * max(abs(stop), 1.0))
    return tuple(float(v) for v in text.split(","))


def read_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (need key=value): {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gainest",
                                     description="gain-estimation Monte-Carlo experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in _EXPERIMENT_BY_COMMAND:
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="key=value defaults file")
        p.add_argument("--dwr", type=float, default=40.0, help="document-to-watermark ratio, dB")
        p.add_argument("--wnr", type=float, default=3.0, help="watermark-to-noise ratio, dB")
        p.add_argument("--n", type=int, default=100, help="block length")
        p.add_argument("--lattice", default="scalar",
                       choices=["scalar", "hex", "d4", "convcoset"])
        p.add_argument("--alpha", default="costa",
                       help="costa, opt, or a fixed numeric value")
        p.add_argument("--t0", type=float, default=0.8,
                       help="true gain for alpha sweeps / coverage / kink counts")
        p.add_argument("--t0-grid", default="0.6:0.2:1.2", dest="t0_grid",
                       help="start:step:stop or comma list (grid for the sweep)")
        p.add_argument("--alpha-grid", default=None, dest="alpha_grid")
        p.add_argument("--pe1-grid", default="0.001", dest="pe1_grid")
        p.add_argument("--n-grid", default="100,400,1600,6400", dest="n_grid")
        p.add_argument("--trials", type=int, default=200)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--estimator", default="ml", choices=["ml", "pwda", "var", "t1"])
        p.add_argument("--refiner", default="da", choices=["da", "da_polish", "derivative"])
        p.add_argument("--bounds", default="partprob", choices=["det", "partprob", "var"])
        p.add_argument("--sampler", default="lowdim", choices=["lowdim", "hybrid"])
        p.add_argument("--k1", type=float, default=0.5)
        p.add_argument("--pe1", type=float, default=1e-3)
        p.add_argument("--pe2", type=float, default=1e-3)
        p.add_argument("--pe3", type=float, default=1e-3)
        p.add_argument("--t1-method", default="variance", dest="t1_method",
                       choices=["variance", "surrogate"])
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None, help="CSV output path")
        p.add_argument("--svg", default=None, help="optional SVG plot path")
    return parser


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not args.config:
        return
    defaults = read_config_file(args.config)
    casts = {"dwr": float, "wnr": float, "n": int, "trials": int, "seed": int,
             "k1": float, "pe1": float, "pe2": float, "pe3": float, "t0": float,
             "threads": int}
    for key, val in defaults.items():
        if not hasattr(args, key):
            raise ValueError(f"unknown config key {key!r}")
        # flags given on the command line win; detect by comparing to parser defaults
        if getattr(args, key) == parser.get_default(key):
            setattr(args, key, casts.get(key, str)(val))


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    experiment = _EXPERIMENT_BY_COMMAND[args.command]
    if args.alpha in ("costa", "opt"):
        alpha_rule, alpha_fixed = args.alpha, None
    else:
        alpha_rule, alpha_fixed = "fixed", float(args.alpha)
    if experiment == "sweep_alpha":
        if args.alpha_grid is None:
            raise ValueError("sweep-alpha needs --alpha-grid")
        grid = parse_grid(args.alpha_grid)
    elif experiment == "interval_coverage":
        grid = parse_grid(args.pe1_grid)
    elif experiment == "nondiff_scaling":
        grid = parse_grid(args.n_grid)
    else:
        grid = parse_grid(args.t0_grid)
    est_cfg = EstimatorConfig(t1_method=args.t1_method, bounds_method=args.bounds,
                              sampler_rule=args.sampler, k1=args.k1,
                              refiner=args.refiner, pe1=args.pe1, pe2=args.pe2,
                              pe3=args.pe3)
    return ExperimentConfig(experiment=experiment, dwr_db=args.dwr, wnr_db=args.wnr,
                            n=args.n, lattice_kind=args.lattice, alpha_rule=alpha_rule,
                            alpha_fixed=alpha_fixed, grid=grid, t0_fixed=args.t0,
                            trials=args.trials, master_seed=args.seed,
                            estimator=args.estimator, estimator_config=est_cfg,
                            threads=args.threads)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        _apply_config_file(args, parser)
        cfg = config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    rows = run_experiment(cfg)
    try:
        if args.out:
            emit_csv(rows, args.out)
        if args.svg:
            emit_svg_plot(rows, args.svg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    if not args.out:
        from .experiments import CSV_HEADER, _fmt
        print(CSV_HEADER)
        for r in rows:
            print(",".join(_fmt(v) for v in (r.grid_value, r.empirical_mse, r.mc_stderr,
                                             r.mse_bound, r.crb_component, r.bias_component,
                                             r.mean_candidates, r.mean_runtime_ms)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
