"""Empirical contraction constants and convergence evidence.

The contraction estimates only assert that suitable constants exist.  Everything
here is a seeded empirical supremum over samples, never a proven bound.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .cascade import ExtensionTrace
from .energy import EnergyModel
from .errors import InsufficientDepth, MissingA2Metadata
from .fractal import ValidatedFractal
from .renorm import Renormalizer, SolverConfig

DEFAULT_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)


def sphere_sample(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform point of ``{u : u(P1) = 0, |u| = 1}``."""
    x = rng.normal(size=n - 1)
    x /= np.linalg.norm(x)
    return np.concatenate([[0.0], x])


def _indicators(n: int) -> list[np.ndarray]:
    out = []
    for r in range(1, n):
        for subset in combinations(range(n), r):
            e = np.zeros(n)
            e[list(subset)] = 1.0
            out.append(e)
    return out


def _cell_oscillations(renorm: Renormalizer, v1: np.ndarray) -> np.ndarray:
    traces = v1[renorm.cells]
    return traces.max(axis=1) - traces.min(axis=1)


@dataclass(frozen=True)
class AlphaEstimate:
    window: tuple[float, float]
    alpha: float
    witness_u: np.ndarray
    witness_theta: float
    samples: int


def estimate_alpha(
    fractal: ValidatedFractal,
    energy: EnergyModel,
    window: tuple[float, float] = (1.0, 1.0),
    samples: int = 100,
    seed: int = 0,
    config: SolverConfig | None = None,
) -> AlphaEstimate:
    """Worst ``max_i Osc(v o psi_i) / Osc(u)`` at the minimizer of ``Lambda_theta``.

    Candidates are the indicator functions of proper subsets of ``V(0)`` plus
    ``samples`` random sphere points; each gets an oscillation and a ``theta``
    drawn from ``window``.
    """
    a, b = map(float, window)
    if not 0 < a <= b:
        raise ValueError(f"window must satisfy 0 < a <= b, got {window}")
    rng = np.random.default_rng(seed)
    renorm = Renormalizer(fractal, energy, config)
    n = fractal.N
    shapes = _indicators(n) + [sphere_sample(rng, n) for _ in range(samples)]
    worst, witness_u, witness_theta = -1.0, shapes[0], a
    for shape in shapes:
        osc_target = a + (b - a) * rng.random()
        theta = a + (b - a) * rng.random()
        u = shape * (osc_target / np.ptp(shape))
        result = renorm.lambda_theta(theta, u)
        ratio = float(_cell_oscillations(renorm, result.clamped).max() / np.ptp(u))
        if ratio > worst:
            worst, witness_u, witness_theta = ratio, u, theta
    return AlphaEstimate((a, b), worst, witness_u, witness_theta, len(shapes))


@dataclass(frozen=True)
class DecayRow:
    scale: float
    ratio: float
    scaled_ratio: float
    bound: float


@dataclass(frozen=True)
class SmallOscDecay:
    sigma: float
    delta_probe: float
    alpha_bar: float
    rows: tuple[DecayRow, ...]


def estimate_small_osc_decay(
    fractal: ValidatedFractal,
    energy: EnergyModel,
    sigma: float = 1.0,
    schedule=DEFAULT_SCHEDULE,
    samples: int = 20,
    seed: int = 0,
    config: SolverConfig | None = None,
) -> SmallOscDecay:
    """Energy decay from ``u`` to its level-1 cells for small oscillations.

    Each row holds three suprema over the samples at one oscillation scale,
    all measured with the reference form ``Ẽ``:

    * ``ratio``: ``max_i Ẽ(v o psi_i) / Ẽ(u)`` at ``v`` in ``H'(u)``;
    * ``scaled_ratio``: the same with the cell traces scaled by ``theta_bar(u)``;
    * ``bound``: ``sigma / theta_bar(u)**p``, the decay factor used to bound the cells.

    ``alpha_bar`` is the largest ``bound`` over scales inside ``delta_probe``,
    the largest scale below which every ``ratio`` stays under 1.
    """
    meta = energy.a2
    if meta is None:
        raise MissingA2Metadata("small-oscillation decay needs a reference form")
    if not meta.rho < 1:
        warnings.warn(f"eigenvalue rho = {meta.rho} is not < 1; the decay estimate has no backing", stacklevel=2)
    rng = np.random.default_rng(seed)
    renorm = Renormalizer(fractal, energy, config)
    ref = meta.reference
    n = fractal.N
    shapes = _indicators(n) + [sphere_sample(rng, n) for _ in range(samples)]
    shapes = [s / np.ptp(s) for s in shapes]
    rows = []
    for scale in schedule:
        ratio = scaled = bound = 0.0
        for shape in shapes:
            u = scale * shape
            v, solve, _ = renorm.h_prime(sigma, u)
            cells = v[renorm.cells]
            eu = ref(u)
            per_cell = np.asarray(ref(cells))
            ratio = max(ratio, float(per_cell.max() / eu))
            scaled = max(scaled, float(np.asarray(ref(solve.theta * cells)).max() / eu))
            bound = max(bound, sigma / solve.theta**meta.p)
        rows.append(DecayRow(float(scale), ratio, scaled, bound))
    ordered = sorted(rows, key=lambda r: r.scale)
    delta, alpha_bar = 0.0, float("nan")
    for row in ordered:
        if row.ratio >= 1:
            break
        delta = row.scale
        alpha_bar = row.bound if math.isnan(alpha_bar) else max(alpha_bar, row.bound)
    return SmallOscDecay(float(sigma), delta, alpha_bar, tuple(rows))


def cascade_bound(trace: ExtensionTrace) -> float:
    """Largest oscillation of a scaled cell trace ``f_w * v o psi_w | V(0)``."""
    return max(
        (cell.factor * cell.oscillation for rec in trace.levels for cell in rec.cells),
        default=0.0,
    )


def convergence_certificate(trace: ExtensionTrace) -> tuple[float, float]:
    """Geometric fit ``max_osc(m) ~ C * rate**m``; returns ``(rate, R^2)``."""
    if trace.depth < 3:
        raise InsufficientDepth(f"need depth >= 3 for a rate fit, got {trace.depth}")
    osc = np.array(trace.max_oscillations)
    if osc[0] == 0:
        return 0.0, 1.0
    positive = np.flatnonzero(osc > 0)
    # a cell oscillation hitting zero means exact flatness from there on
    upto = positive[-1] + 1 if len(positive) == len(osc) else int(np.argmin(osc > 0))
    levels = np.arange(upto, dtype=float)
    logs = np.log(osc[:upto])
    if upto < 2:
        return 0.0, 1.0
    slope, intercept = np.polyfit(levels, logs, 1)
    fitted = slope * levels + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(math.exp(slope)), r2


@dataclass
class ContractionReport:
    window: tuple[float, float]
    alpha: AlphaEstimate | None = None
    small_osc: SmallOscDecay | None = None
    cascade_bound: float | None = None
    rate: float | None = None
    r2: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "scale", "value"])
        if self.alpha is not None:
            w.writerow(["alpha", f"{self.window[0]!r}:{self.window[1]!r}", repr(self.alpha.alpha)])
        if self.small_osc is not None:
            for row in self.small_osc.rows:
                w.writerow(["small_osc_ratio", repr(row.scale), repr(row.ratio)])
                w.writerow(["small_osc_scaled_ratio", repr(row.scale), repr(row.scaled_ratio)])
                w.writerow(["small_osc_bound", repr(row.scale), repr(row.bound)])
            w.writerow(["delta_probe", "", repr(self.small_osc.delta_probe)])
            w.writerow(["alpha_bar", "", repr(self.small_osc.alpha_bar)])
        if self.cascade_bound is not None:
            w.writerow(["cascade_bound", "", repr(self.cascade_bound)])
        if self.rate is not None:
            w.writerow(["rate", "", repr(self.rate)])
            w.writerow(["r2", "", repr(self.r2)])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"window          [{self.window[0]:g}, {self.window[1]:g}]"]
        if self.alpha is not None:
            lines.append(f"alpha           {self.alpha.alpha:.12g}  (theta={self.alpha.witness_theta:.6g})")
        if self.small_osc is not None:
            lines.append(f"delta probe     {self.small_osc.delta_probe:g}")
            lines.append(f"alpha bar       {self.small_osc.alpha_bar:.12g}")
        if self.cascade_bound is not None:
            lines.append(f"cascade bound   {self.cascade_bound:.12g}")
        if self.rate is not None:
            lines.append(f"rate            {self.rate:.12g}  (R^2={self.r2:.6f})")
        lines.extend(f"note            {n}" for n in self.notes)
        return "\n".join(lines)
