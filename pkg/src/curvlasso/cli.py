"""Command-line harness.

Subcommands: fetch, sketch, diagnose, spectrum, tune, bench. Datasets are
cached in $CURVLASSO_DATA (default ./data). ``bench`` reads a TOML config;
see the README for the schema.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

import numpy as np

from . import bench
from .datasets import (
    DATASET_URLS,
    SyntheticSpec,
    data_dir,
    fetch_dataset,
    generate_synthetic,
    load_dataset,
)
from .hessian import build_hessian, condition_report, smoothness_profile
from .sketch import SketchConfig, block_lanczos, save_factors


def _add_problem_args(p: argparse.ArgumentParser):
    p.add_argument("--dataset", help=f"named dataset, one of {sorted(DATASET_URLS)}")
    p.add_argument(
        "--synthetic",
        help="synthetic spec 'n=2000,d=200,decay=1.0[,noise=0.0][,seed=0]' "
        "(singular values of A/sqrt(n) follow i^-decay)",
    )
    p.add_argument("--gamma1", type=float, default=None)
    p.add_argument("--gamma2", type=float, default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--force-d", type=int, default=None, help="pad the feature count")
    p.add_argument("--fetch", action="store_true", help="download the dataset if missing")


def _parse_synthetic(text: str) -> SyntheticSpec:
    kv = dict(part.split("=", 1) for part in text.split(","))
    n = int(kv["n"])
    d = int(kv["d"])
    decay = float(kv.get("decay", 1.0))
    spectrum = np.arange(1, d + 1, dtype=float) ** (-decay)
    return SyntheticSpec(
        n=n, d=d, spectrum=spectrum,
        noise_sigma=float(kv.get("noise", 0.0)), seed=int(kv.get("seed", 0)),
    )


def _problem_from_args(args):
    table = bench.TABLE_PARAMS.get(args.dataset or "", {})
    gamma1 = args.gamma1 if args.gamma1 is not None else table.get("gamma1", 1e-3)
    gamma2 = args.gamma2 if args.gamma2 is not None else gamma1
    if args.synthetic:
        return generate_synthetic(_parse_synthetic(args.synthetic), gamma1, gamma2)
    if not args.dataset:
        raise SystemExit("need --dataset or --synthetic")
    return load_dataset(
        args.dataset, gamma1, gamma2,
        directory=args.data_dir, force_d=args.force_d, fetch=args.fetch,
    )


def _write(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_fetch(args) -> int:
    names = args.names or [n for n in DATASET_URLS if n != "cina0"]
    status = 0
    for name in names:
        try:
            path = fetch_dataset(name, args.data_dir)
            print(f"{name}: {path}")
        except Exception as exc:  # keep going; report per-dataset outcome
            print(f"{name}: FAILED ({exc})", file=sys.stderr)
            status = 1
    return status


def cmd_sketch(args) -> int:
    problem = _problem_from_args(args)
    scaled = problem.A.scale(1.0 / math.sqrt(problem.n))
    cfg = SketchConfig(r=args.r, eps_prime=args.eps_prime, q_override=args.q, seed=args.seed)
    factors = block_lanczos(scaled, cfg)
    if args.out:
        save_factors(factors, args.out)
        print(f"factors written to {args.out}")
    head = ", ".join(f"{s * s:.6g}" for s in factors.Sigma)
    print(f"spectrum head (eigenvalues of C): {head}")
    if factors.deficient:
        print("warning: Krylov space was rank deficient; fewer directions returned")
    return 0


def cmd_diagnose(args) -> int:
    problem = _problem_from_args(args)
    scaled = problem.A.scale(1.0 / math.sqrt(problem.n))
    factors = block_lanczos(scaled, SketchConfig(r=args.r, seed=args.seed))
    H = build_hessian(factors, problem.gamma2)
    mu_mode = args.mu_mode
    if mu_mode == "auto":
        mu_mode = "exact" if problem.d <= 2000 else "bound"
    profile = smoothness_profile(problem, H, mu_mode=mu_mode)
    report = condition_report(problem, H, profile)
    _write(report.to_json(indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_spectrum(args) -> int:
    problem = _problem_from_args(args)
    lambdas = bench.emit_spectrum(problem, args.r_probe, seed=args.seed)
    _write(bench.spectrum_csv(lambdas), args.out)
    return 0


def cmd_tune(args) -> int:
    problem = _problem_from_args(args)
    H = profile = None
    if "ours" in args.methods:
        scaled = problem.A.scale(1.0 / math.sqrt(problem.n))
        factors = block_lanczos(scaled, SketchConfig(r=args.r, seed=args.seed))
        H = build_hessian(factors, problem.gamma2)
        profile = smoothness_profile(
            problem, H, mu_mode="exact" if problem.d <= 2000 else "bound"
        )
    steps = {
        m: bench.tune_step(problem, m, short_budget=args.epochs, seed=args.seed,
                           H=H, profile=profile)
        for m in args.methods
    }
    _write(json.dumps(steps, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_bench(args) -> int:
    with open(args.config, "rb") as fh:
        doc = tomllib.load(fh)
    exp = doc.get("experiment", {})
    if "synthetic" in exp:
        syn = exp["synthetic"]
        d = int(syn["d"])
        decay = float(syn.get("decay", 1.0))
        spectrum = syn.get("spectrum") or (np.arange(1, d + 1, dtype=float) ** (-decay)).tolist()
        dataset = SyntheticSpec(
            n=int(syn["n"]), d=d, spectrum=np.asarray(spectrum, dtype=float),
            noise_sigma=float(syn.get("noise", 0.0)), seed=int(syn.get("seed", 0)),
        )
    else:
        dataset = exp["dataset"]
    table = bench.TABLE_PARAMS.get(dataset if isinstance(dataset, str) else "", {})
    gamma1 = float(exp.get("gamma1", table.get("gamma1", 1e-3)))
    gamma2s = exp.get("gamma2", [gamma1, 0.1 * gamma1])
    if not isinstance(gamma2s, list):
        gamma2s = [gamma2s]
    r = int(exp.get("r", table.get("r", 10)))
    for gamma2 in gamma2s:
        cfg = bench.ExperimentConfig(
            dataset=dataset,
            gamma1=gamma1,
            gamma2=float(gamma2),
            r=r,
            methods=tuple(exp.get("methods", ["ours", "fista", "prox_svrg", "katyusha1"])),
            epochs=float(exp.get("epochs", 100)),
            tune=bool(exp.get("tune", True)),
            tune_epochs=float(exp.get("tune_epochs", 20)),
            seeds=tuple(exp.get("seeds", [0])),
            output_dir=args.output_dir or exp.get("output_dir", "results"),
            sketch_seed=int(exp.get("sketch_seed", 0)),
            data_dir=exp.get("data_dir"),
            jobs=args.jobs or int(exp.get("jobs", 1)),
        )
        summary = bench.run_experiment(cfg)
        print(f"[{cfg.label()} gamma2={gamma2:g}] f_star={summary['f_star']:.9e}")
        for rec in summary["runs"]:
            final = rec["suboptimality"].get(str(int(cfg.epochs)), None)
            tail = f"subopt@{int(cfg.epochs)}={final:.3e}" if final is not None else ""
            print(f"  {rec['method']:10s} seed={rec['seed']}  {tail}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="curvlasso", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download datasets into the cache")
    p.add_argument("names", nargs="*", help="dataset names (default: all fetchable)")
    p.add_argument("--data-dir", default=None)
    p.set_defaults(fn=cmd_fetch)

    p = sub.add_parser("sketch", help="run the one-shot low-rank factorization")
    _add_problem_args(p)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--eps-prime", type=float, default=0.5)
    p.add_argument("--q", type=int, default=None, help="override the Krylov depth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write factors (CLRF1 binary) here")
    p.set_defaults(fn=cmd_sketch)

    p = sub.add_parser("diagnose", help="condition-number diagnostics JSON")
    _add_problem_args(p)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu-mode", default="auto", choices=["auto", "exact", "bound"])
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("spectrum", help="emit the eigenvalue head of C as CSV")
    _add_problem_args(p)
    p.add_argument("--r-probe", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_spectrum)

    p = sub.add_parser("tune", help="grid-tune step sizes")
    _add_problem_args(p)
    p.add_argument("--methods", nargs="+", default=["ours", "fista", "prox_svrg", "katyusha1"])
    p.add_argument("--r", type=int, default=10)
    p.add_argument("--epochs", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("bench", help="run a TOML-configured benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
