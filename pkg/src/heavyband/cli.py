"""Command-line entry point.

Exit codes: 0 success, 1 validation or usage error, 2 selftest gate failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import SpectralDomain, SpectralParameter
from .models import ClosedFormContext, beta_limit_matrix, laplacian_1d, laplacian_trace
from .noise import FAMILIES, NoiseSpec, build_noise
from .resolvent import SingularShiftError, green_report
from .spectrum import (
    SpectralDecomposition,
    cluster_basis,
    delocalization_report,
    eigenvalues,
    empirical_vs_arcsine,
    rigidity_report,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_matrix_args(p):
    p.add_argument("--model", choices=("laplacian", "beta_limit"), default="laplacian")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--family", choices=FAMILIES, default="zero")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--K", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)


def _matrix(args):
    if args.N < 1:
        raise ValueError("N must be positive")
    base = laplacian_1d(args.N) if args.model == "laplacian" else beta_limit_matrix(args.N)
    spec = NoiseSpec(args.family, args.alpha, args.sigma, args.K, args.delta, args.seed)
    return base + build_noise(args.N, spec), spec


def _parse_pair(text: str) -> tuple[int, int]:
    try:
        i, j = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"pair must be 'i,j', got {text!r}") from None
    return i, j


def build_parser() -> _Parser:
    parser = _Parser(prog="heavyband", description="Banded heavy-tailed random matrix lab")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("green", help="Green-function entries and trace at one z")
    _add_matrix_args(g)
    g.add_argument("--E", type=float, required=True)
    g.add_argument("--eta", type=float, required=True)
    g.add_argument("--pair", type=_parse_pair, action="append", default=[], help="0-based 'i,j'; repeatable")
    g.add_argument("--output", type=Path)

    s = sub.add_parser("spectrum", help="eigenvalues (CSV) and spectral statistics (JSON)")
    _add_matrix_args(s)
    s.add_argument("--kappa", type=float, default=0.5)
    s.add_argument("--epsilon", type=float, default=0.4)
    s.add_argument("--vectors", action="store_true", help="also write eigenvectors to a .f64 sidecar")
    s.add_argument("--out-dir", type=Path, default=Path("."))

    e = sub.add_parser("experiment", help="Monte Carlo experiments")
    esub = e.add_subparsers(dest="action", parser_class=_Parser)
    run = esub.add_parser("run")
    run.add_argument("name")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--output-dir", type=Path)
    esub.add_parser("list")

    st = sub.add_parser("selftest", help="deterministic invariant suite")
    st.add_argument("--instances", type=int, default=50)
    return parser


def _cmd_green(args) -> int:
    H, spec = _matrix(args)
    z = SpectralParameter(args.E, args.eta)
    for i, j in args.pair:
        if not (0 <= i < H.n and 0 <= j < H.n):
            raise ValueError(f"pair ({i}, {j}) outside 0..{H.n - 1}")
    reference = trace_ref = None
    if args.model == "laplacian":
        ctx = ClosedFormContext(args.N, z.z)
        reference = lambda i, j: complex(ctx.entries(i, j))  # noqa: E731
        trace_ref = laplacian_trace(args.N, z.z)
    rep = green_report(H, z, args.pair, reference=reference, trace_reference=trace_ref)
    text = rep.to_json()
    if args.output:
        args.output.write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_spectrum(args) -> int:
    H, spec = _matrix(args)
    eigs = eigenvalues(H)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    dec = SpectralDecomposition(eigs)
    dec.to_csv(args.out_dir / "eigenvalues.csv")
    stats = {
        "N": H.n,
        "bandwidth": H.bandwidth,
        "noise": spec.to_dict(),
        "min": float(eigs[0]),
        "max": float(eigs[-1]),
        "arcsine_dev": empirical_vs_arcsine(eigs, H.n, args.kappa),
        "rigidity_dev": rigidity_report(eigs, H.n, args.kappa).deviation,
    }
    dom = SpectralDomain(args.epsilon, args.kappa, args.sigma, args.alpha, args.K)
    rep = delocalization_report(H, args.kappa, dom.removal(), eigs=eigs)
    stats["max_sup_norm"] = rep.max_sup_norm
    stats["bulk_vectors"] = rep.n_vectors
    if args.vectors:
        V = cluster_basis(H, eigs)
        dec.eigenvectors = {k: V[:, k] for k in range(H.n)}
        dec.write_vectors(args.out_dir / "eigenvectors.f64")
        stats["eigenvectors"] = {"file": "eigenvectors.f64", "dtype": "<f8", "shape": [H.n, H.n], "order": "C"}
    (args.out_dir / "spectrum.json").write_text(json.dumps(stats, indent=2, allow_nan=False) + "\n")
    print(json.dumps(stats, allow_nan=False))
    return 0


def _cmd_experiment(args) -> int:
    from .harness.config import load_config
    from .harness.experiments import REGISTRY, get_experiment
    from .harness.runner import run_experiment

    if args.action == "list":
        for name, exp in sorted(REGISTRY.items()):
            print(f"{name}\t{exp.summary}")
        return 0
    if args.action != "run":
        raise UsageError("experiment: expected 'run' or 'list'")
    get_experiment(args.name)
    cfg = load_config(args.config)
    if cfg.experiment != args.name:
        raise ValueError(f"config is for experiment {cfg.experiment!r}, not {args.name!r}")
    if args.output_dir is not None:
        cfg = cfg.with_(output_dir=str(args.output_dir))
    report = run_experiment(cfg)
    for k, v in sorted(report.verdicts.items()):
        print(f"{'PASS' if v else 'FAIL'} {k}")
    return 0


def _cmd_selftest(args) -> int:
    from .harness.selftest import run_selftest

    results = run_selftest(instances=args.instances, echo=print)
    return 0 if all(r.passed for r in results) else 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        handler = {
            "green": _cmd_green,
            "spectrum": _cmd_spectrum,
            "experiment": _cmd_experiment,
            "selftest": _cmd_selftest,
        }[args.command]
        if args.command == "experiment" and args.action is None:
            raise UsageError("experiment: expected 'run' or 'list'")
        return handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ValueError, OSError, SingularShiftError, np.linalg.LinAlgError) as exc:
        print(f"heavyband: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
