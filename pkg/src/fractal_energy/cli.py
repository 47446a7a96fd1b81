"""Command line front end.

Exit codes: 0 ok, 1 validation error, 2 solver failure, 3 hypothesis violation.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .audit import AuditBudget, audit_a2, audit_axioms, audit_Q5
from .cascade import CascadeEngine
from .config import ExperimentConfig, build_energy, load_config
from .energy import make_dirichlet
from .diagnostics import (
    ContractionReport,
    cascade_bound,
    convergence_certificate,
    estimate_alpha,
    estimate_small_osc_decay,
)
from .errors import FractalEnergyError, InsufficientDepth
from .fractal import get_fractal
from .renorm import Renormalizer, quadratic_eigen


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML experiment file; flags override it")
    common.add_argument("--fractal", help="built-in fractal: interval, gasket, vicsek")
    common.add_argument("--spec", help="fractal spec file (JSON or YAML)")
    common.add_argument("--energy", help='energy spec, e.g. "dirichlet", "p_edge p=4", "perturbed bump_p=4"')
    common.add_argument("--sigma", type=float)
    common.add_argument("--depth", type=int)
    common.add_argument("--u", type=_floats, help="boundary values, comma separated")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol-coord", type=float)
    common.add_argument("--tol-theta", type=float)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output directory for CSV and summary files")
    common.add_argument("--unsafe-sigma", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="fractal-energy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a fractal spec")
    sub.add_parser("extend", parents=[common], help="minimal extension of boundary data")
    theta = sub.add_parser("theta", parents=[common], help="scaling root table")
    theta.add_argument("--scales", type=_floats, default=(1.0,), help="multipliers t applied to u")
    sub.add_parser("eigen", parents=[common], help="eigenvalue of a Dirichlet form")
    axioms = sub.add_parser("axioms", parents=[common], help="sampling audit of the axioms")
    axioms.add_argument("--samples", type=int, default=200)
    diag = sub.add_parser("diagnose", parents=[common], help="contraction report")
    diag.add_argument("--window", type=_floats, default=(1.0, 1.0), help="a,b window for alpha")
    diag.add_argument("--samples", type=int, default=50)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config(args.config) if args.config else {}
    for key in ("fractal", "spec", "energy", "sigma", "depth", "u", "seed", "threads", "out", "unsafe_sigma"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.spec and not args.fractal:
        data["fractal"] = Path(args.spec).stem
    solver = dict(data.get("solver", {}))
    if args.tol_coord is not None:
        solver["tol_coord"] = args.tol_coord
    if args.tol_theta is not None:
        solver["tol_theta"] = args.tol_theta
    data["solver"] = solver
    # sigma outside (0, 1] only matters for the extension
    if args.command != "extend" and "sigma" in data:
        data.setdefault("unsafe_sigma", True)
    return ExperimentConfig.from_dict(data)


def _header(config: ExperimentConfig) -> str:
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return f"# generated_at: {stamp}\n# config: {config.to_json()}\n"


def _write(config: ExperimentConfig, name: str, body: str) -> None:
    if config.out is None:
        return
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(_header(config) + body)


def _boundary(config: ExperimentConfig, n: int) -> np.ndarray:
    if config.u is None:
        u = np.zeros(n)
        u[0] = 1.0
        return u
    if len(config.u) != n:
        raise ValueError(f"--u needs {n} values, got {len(config.u)}")
    return np.array(config.u, dtype=float)


def _fractal(config: ExperimentConfig):
    return get_fractal(None, config.spec) if config.spec else get_fractal(config.fractal)


def cmd_validate(config: ExperimentConfig) -> str:
    fractal = _fractal(config)
    counts = ",".join(str(fractal.level(m).n_vertices) for m in range(4))
    return (
        f"OK {fractal.name}: N={fractal.N} k={fractal.k} n̄={fractal.chain_constant} "
        f"|V(0..3)|={counts}"
    )


def cmd_extend(config: ExperimentConfig) -> str:
    fractal = _fractal(config)
    energy = build_energy(fractal, config.energy)
    engine = CascadeEngine(fractal, energy, config.sigma, config.solver)
    u = _boundary(config, fractal.N)
    trace = engine.minimal_extension(u, config.depth, unsafe_sigma=config.unsafe_sigma)
    lines = [
        f"E(u)            {trace.boundary_energy:.15g}",
        *(f"level {r.level:<2d} energy {r.energy:.15g}  max_osc {r.max_oscillation:.6e}" for r in trace.levels),
        f"final energy    {trace.energies[-1]:.15g}",
        f"vertices        {trace.final.vertices.n_vertices}",
    ]
    try:
        rate, r2 = convergence_certificate(trace)
        lines.append(f"fitted rate     {rate:.12g}  (R^2={r2:.6f})")
    except InsufficientDepth:
        lines.append("fitted rate     n/a (depth < 3)")
    summary = "\n".join(lines)
    _write(config, "trace.csv", trace.to_csv())
    _write(config, "values.csv", trace.values_csv())
    _write(config, "summary.txt", summary + "\n")
    return summary


def cmd_theta(config: ExperimentConfig, scales) -> str:
    fractal = _fractal(config)
    energy = build_energy(fractal, config.energy)
    renorm = Renormalizer(fractal, energy, config.solver)
    u = _boundary(config, fractal.N)
    rows = ["t,theta_bar,residual"]
    for t in scales:
        solve = renorm.theta_bar(config.sigma, t * u)
        rows.append(f"{t!r},{solve.theta!r},{solve.residual!r}")
    body = "\n".join(rows) + "\n"
    _write(config, "theta.csv", body)
    return body.rstrip("\n")


def cmd_eigen(config: ExperimentConfig) -> str:
    fractal = _fractal(config)
    spec = config.energy
    if spec.family not in ("dirichlet", "eigen"):
        raise ValueError("eigen works on Dirichlet forms")
    result = quadratic_eigen(fractal, make_dirichlet(spec.coeffs, fractal.N))
    coeffs = ",".join(f"{c:.15g}" for c in result.form.terms[0].coeffs)
    body = (
        f"rho             {result.rho:.15g}\n"
        f"coefficients    {coeffs}\n"
        f"iterations      {result.iterations}\n"
        f"residual        {result.residual:.3e}\n"
    )
    _write(config, "eigen.txt", body)
    return body.rstrip("\n")


def cmd_axioms(config: ExperimentConfig, samples: int) -> tuple[str, bool]:
    fractal = _fractal(config)
    energy = build_energy(fractal, config.energy)
    budget = AuditBudget(samples=samples)
    report = audit_axioms(energy, budget, config.seed)
    q5 = audit_Q5(energy, budget, config.seed)
    lines = report.lines() + q5.lines()
    passed = report.passed and q5.passed
    if energy.a2 is not None:
        a2 = audit_a2(energy, fractal, seed=config.seed)
        lines.append(
            f"{'A2':<12} {'PASS' if a2.passed else 'FAIL'}  homogeneity={a2.homogeneity:.3e} "
            f"eigen_residual={a2.eigen_residual:.3e}"
        )
        passed = passed and a2.passed
    body = "\n".join(lines)
    _write(config, "axioms.txt", body + "\n")
    return body, passed


def cmd_diagnose(config: ExperimentConfig, window, samples: int) -> str:
    fractal = _fractal(config)
    energy = build_energy(fractal, config.energy)
    report = ContractionReport(tuple(window))
    report.alpha = estimate_alpha(fractal, energy, window, samples, config.seed, config.solver)
    if energy.a2 is not None:
        report.small_osc = estimate_small_osc_decay(
            fractal, energy, config.sigma, samples=samples, seed=config.seed, config=config.solver
        )
    else:
        report.notes.append("no A2 metadata: small-oscillation decay skipped")
    engine = CascadeEngine(fractal, energy, config.sigma, config.solver)
    depth = max(config.depth, 3)
    trace = engine.minimal_extension(_boundary(config, fractal.N), depth, unsafe_sigma=config.unsafe_sigma)
    report.cascade_bound = cascade_bound(trace)
    report.rate, report.r2 = convergence_certificate(trace)
    _write(config, "diagnose.csv", report.to_csv())
    _write(config, "summary.txt", report.summary() + "\n")
    return report.summary()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        if args.command == "validate":
            print(cmd_validate(config))
        elif args.command == "extend":
            print(cmd_extend(config))
        elif args.command == "theta":
            print(cmd_theta(config, args.scales))
        elif args.command == "eigen":
            print(cmd_eigen(config))
        elif args.command == "axioms":
            body, passed = cmd_axioms(config, args.samples)
            print(body)
            if not passed:
                return 1
        elif args.command == "diagnose":
            print(cmd_diagnose(config, args.window, args.samples))
    except FractalEnergyError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
