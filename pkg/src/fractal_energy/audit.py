"""Sampling audits of the admissibility axioms for an energy.

Failures are reported, never raised: every check records its worst sample and
a witness that reproduces it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from .energy import A2Metadata, EnergyModel
from .fractal import ValidatedFractal

# clamping must lower the energy by this relative amount when it moves u by STRICT_MOVE
STRICT_DROP = 1e-12
STRICT_MOVE = 1e-6
FD_STEPS = (1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class AuditBudget:
    samples: int = 200
    scale: float = 1.0


@dataclass
class AxiomCheck:
    name: str
    passed: bool = True
    worst: float = 0.0
    witness: dict | None = None
    samples: int = 0
    note: str = ""

    def record(self, excess: float, witness: dict) -> None:
        """Track the largest violation amount; positive means the check failed."""
        self.samples += 1
        if self.witness is None or excess > self.worst:
            self.worst = excess
            self.witness = witness
        if excess > 0:
            self.passed = False


@dataclass
class AxiomReport:
    checks: dict[str, AxiomCheck] = field(default_factory=dict)
    coercivity_constant: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def lines(self) -> list[str]:
        out = []
        for c in self.checks.values():
            status = "PASS" if c.passed else "FAIL"
            line = f"{c.name:<12} {status}  samples={c.samples:<5d} worst={c.worst:.3e}"
            if not c.passed and c.witness is not None:
                line += f"  witness={_fmt(c.witness)}"
            if c.note:
                line += f"  ({c.note})"
            out.append(line)
        out.append(f"{'coercivity':<12} {self.coercivity_constant:.12g}")
        return out


def _fmt(witness: dict) -> str:
    parts = []
    for key, value in witness.items():
        if isinstance(value, np.ndarray):
            value = np.array2string(value, precision=6, separator=",")
        elif isinstance(value, float):
            value = f"{value:.6g}"
        parts.append(f"{key}={value}")
    return " ".join(parts)


def _sample_u(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    u = rng.normal(size=n) * scale
    # occasionally create ties, which is where clamping and Q5 are delicate
    if rng.random() < 0.3:
        a, b = rng.choice(n, size=2, replace=False)
        u[a] = u[b]
    return u


def audit_axioms(energy: EnergyModel, budget: AuditBudget = AuditBudget(), seed: int = 0) -> AxiomReport:
    """Sample convexity, symmetry, zero set, clamping, superadditivity and coercivity."""
    rng = np.random.default_rng(seed)
    n = energy.size
    s = budget.scale
    report = AxiomReport()
    q1 = report.checks.setdefault("Q1", AxiomCheck("Q1", note="midpoint convexity"))
    q2 = report.checks.setdefault("Q2", AxiomCheck("Q2", note="E(+-u + c) = E(u)"))
    q3 = report.checks.setdefault("Q3", AxiomCheck("Q3", note="zero exactly at constants"))
    q4 = report.checks.setdefault("Q4", AxiomCheck("Q4", note="clamping, strict when it moves u"))
    l32 = report.checks.setdefault("superadd", AxiomCheck("superadd", note="E(tu) >= tE(u), t >= 1"))

    for _ in range(budget.samples):
        u = _sample_u(rng, n, s)
        w = _sample_u(rng, n, s)
        eu, ew = energy(u), energy(w)
        mid = energy(0.5 * (u + w))
        q1.record(mid - 0.5 * (eu + ew) - 1e-12 * max(abs(eu), abs(ew), 1.0), {"u": u, "w": w})

        c = float(rng.normal() * s)
        drift = max(abs(energy(u + c) - eu), abs(energy(-u + c) - eu))
        q2.record(drift - 1e-9 * max(abs(eu), 1.0), {"u": u, "c": c})

        const = np.full(n, c)
        q3.record(abs(energy(const)) - 1e-12, {"u": const, "E": energy(const)})
        if np.ptp(u) > 0:
            q3.record(1.0 if eu <= 0 else -1.0, {"u": u, "E": eu})

        a, b = sorted(rng.uniform(u.min(), u.max(), size=2), reverse=True)
        clamped = np.clip(u, b, a)
        ec = energy(clamped)
        excess = ec - eu - 1e-12 * max(abs(eu), 1.0)
        if np.abs(clamped - u).max() >= STRICT_MOVE:
            excess = ec - eu + STRICT_DROP * max(abs(eu), np.finfo(float).tiny)
        q4.record(excess, {"u": u, "a": float(a), "b": float(b), "E(u)": eu, "E(clamped)": ec})

        t = 1.0 + float(rng.exponential(1.0))
        l32.record(t * eu - energy(t * u) - 1e-12 * max(abs(eu), 1.0) * t, {"u": u, "t": t})

    report.coercivity_constant = coercivity_constant(energy, budget.samples, seed)
    return report


def coercivity_constant(energy: EnergyModel, samples: int = 200, seed: int = 0) -> float:
    """Empirical min of E over the slice ``u(P1) = 0, Osc(u) = 1``.

    Random points of the slice seed a Nelder-Mead descent; by superadditivity
    this constant bounds ``E(u) / Osc(u)`` below whenever ``Osc(u) >= 1``.
    """
    n = energy.size
    rng = np.random.default_rng(seed + 1)

    def on_slice(x: np.ndarray) -> np.ndarray:
        u = np.concatenate([[0.0], x])
        osc = np.ptp(u)
        return u / osc if osc > 0 else u

    def objective(x):
        u = on_slice(np.asarray(x))
        return energy(u) if np.ptp(u) > 0 else np.inf

    starts = [rng.uniform(-1, 1, size=n - 1) for _ in range(samples)]
    # vertices of the slice: each point either at 0 or at +-1
    for signs in combinations(range(n - 1), 1):
        e = np.zeros(n - 1)
        e[list(signs)] = 1.0
        starts.append(e)
    values = sorted((objective(x), i) for i, x in enumerate(starts))
    best = values[0][0]
    for _, i in values[:5]:
        res = minimize(objective, starts[i], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        best = min(best, float(res.fun))
    return float(best)


@dataclass
class Q5Report:
    passed: bool
    worst: float
    witness: dict | None
    samples: int
    vacuous: int
    unstable: int = 0

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        line = (
            f"{'Q5':<12} {status}  samples={self.samples:<5d} worst={self.worst:.3e} "
            f"vacuous={self.vacuous} unstable={self.unstable}"
        )
        if not self.passed and self.witness is not None:
            line += f"  witness={_fmt(self.witness)}"
        return [line]


def directional_derivative(energy: EnergyModel, u, v, steps=FD_STEPS) -> tuple[float, list[float]]:
    """Right derivative of ``t -> E(u + t v)`` at 0 from forward differences.

    For convex E every forward quotient bounds the right derivative from
    above, so the smallest quotient is the estimate.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    base = energy(u)
    quotients = [(energy(u + h * v) - base) / h for h in steps]
    return min(quotients), quotients


def richardson_consistent(quotients, steps=FD_STEPS, rtol: float = 1e-3) -> bool:
    """First-order extrapolation from the two largest steps agrees with the smallest quotient."""
    h1, h2 = steps[0], steps[1]
    q1, q2 = quotients[0], quotients[1]
    extrapolated = (h1 * q2 - h2 * q1) / (h1 - h2)
    return abs(extrapolated - min(quotients)) <= rtol * max(1.0, abs(extrapolated))


def audit_Q5(energy: EnergyModel, budget: AuditBudget = AuditBudget(), seed: int = 0) -> Q5Report:
    """Raising a function on its argmin never increases the energy to first order."""
    rng = np.random.default_rng(seed)
    n = energy.size
    worst = -np.inf
    witness = None
    vacuous = unstable = 0
    for _ in range(budget.samples):
        u = _sample_u(rng, n, budget.scale)
        if rng.random() < 0.1:
            u = np.full(n, u[0])
        if np.ptp(u) == 0:
            vacuous += 1
            continue
        at_min = u == u.min()
        v = np.where(at_min, rng.uniform(0.0, 1.0, size=n), 0.0)
        if not v.any():
            v[np.argmax(at_min)] = 1.0
        d, quotients = directional_derivative(energy, u, v)
        unstable += not richardson_consistent(quotients)
        allowance = 1e-7 * max(abs(energy(u)), 1.0)
        excess = d - allowance
        if excess > worst:
            worst = excess
            witness = {"u": u, "v": v, "derivative": d, "quotients": np.array(quotients)}
    passed = worst <= 0 if np.isfinite(worst) else True
    return Q5Report(passed, float(worst), witness, budget.samples, vacuous, unstable)


@dataclass
class A2Audit:
    homogeneity: float
    eigen_residual: float
    ratio_deviation: list[tuple[float, float]]

    @property
    def passed(self) -> bool:
        devs = [d for _, d in self.ratio_deviation]
        shrinking = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(devs, devs[1:]))
        return self.homogeneity <= 1e-10 and self.eigen_residual <= 1e-8 and shrinking


def audit_a2(
    energy: EnergyModel,
    fractal: ValidatedFractal,
    samples: int = 100,
    seed: int = 0,
    scales=(1e-1, 1e-2, 1e-3, 1e-4),
) -> A2Audit:
    """Check the small-oscillation metadata: homogeneity, eigenform, ratio -> 1."""
    from .renorm import eigen_residual

    meta: A2Metadata | None = energy.a2
    if meta is None:
        raise ValueError("energy carries no A2 metadata")
    rng = np.random.default_rng(seed)
    ref = meta.reference
    hom = 0.0
    for _ in range(samples):
        u = rng.normal(size=energy.size)
        t = float(rng.uniform(0.1, 10.0))
        hom = max(hom, abs(ref(t * u) - t**meta.p * ref(u)) / (t**meta.p * ref(u)))
    resid = eigen_residual(fractal, meta, samples, seed)
    deviations = []
    for t in scales:
        worst = 0.0
        for _ in range(20):
            u = t * rng.normal(size=energy.size)
            worst = max(worst, abs(energy(u) / ref(u) - 1.0))
        deviations.append((t, worst))
    return A2Audit(hom, resid, deviations)
