"""Cascaded scaling factors, level energies and the minimal extension.

For a function ``v`` on ``V(n)`` the factor attached to a word ``w`` is the
product of the scaling roots of the rescaled traces along the prefixes of
``w``:

    g_()      = v
    g_(w i)   = theta_bar(g_w | V(0)) * g_w o psi_i
    f_(w i)   = f_w * theta_bar(g_w | V(0)),   f_() = 1

and the level-``n`` energy is ``sigma**-n * sum_{|w| = n} E(f_w * v o psi_w | V(0))``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energy import EnergyModel
from .errors import ConservationDrift, HypothesisViolation
from .fractal import LevelFunction, ValidatedFractal, cell_trace
from .renorm import Renormalizer, SolverConfig


@dataclass(frozen=True)
class ThetaCascade:
    """Per-word factors ``f_w`` for every word of length ``<= depth``.

    ``factors[m]`` is indexed by the base-k index of the word; ``traces[m]``
    holds the rescaled boundary traces ``g_w | V(0)`` where ``v`` reaches
    level ``m``; ``roots[m]`` holds ``theta_bar(g_w | V(0))``.
    """

    sigma: float
    depth: int
    k: int
    factors: tuple[np.ndarray, ...]
    traces: tuple[np.ndarray, ...]
    roots: tuple[np.ndarray, ...]

    def factor(self, word: Sequence[int]) -> float:
        idx = 0
        for i in word:
            idx = idx * self.k + i
        return float(self.factors[len(word)][idx])


@dataclass(frozen=True)
class CellRecord:
    word: tuple[int, ...]
    oscillation: float
    factor: float
    cell_energy: float


@dataclass(frozen=True)
class LevelRecord:
    level: int
    values: LevelFunction
    energy: float
    max_oscillation: float
    cells: tuple[CellRecord, ...] = field(repr=False)
    residuals: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class ExtensionTrace:
    u: np.ndarray
    boundary_energy: float
    sigma: float
    levels: tuple[LevelRecord, ...]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def final(self) -> LevelFunction:
        return self.levels[-1].values

    @property
    def energies(self) -> list[float]:
        return [rec.energy for rec in self.levels]

    @property
    def max_oscillations(self) -> list[float]:
        return [rec.max_oscillation for rec in self.levels]

    def to_csv(self) -> str:
        """Per-cell rows followed by one summary row per level."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "level", "word", "oscillation", "factor", "cell_energy", "level_energy"])
        for rec in self.levels:
            for cell in rec.cells:
                writer.writerow(
                    [
                        "cell",
                        rec.level,
                        ".".join(str(i + 1) for i in cell.word) or "-",
                        repr(cell.oscillation),
                        repr(cell.factor),
                        repr(cell.cell_energy),
                        "",
                    ]
                )
        for rec in self.levels:
            writer.writerow(["level", rec.level, "", repr(rec.max_oscillation), "", "", repr(rec.energy)])
        return buf.getvalue()

    def values_csv(self) -> str:
        final = self.final
        vertices = final.vertices
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["vertex", "level_born", "word", "point", "value"])
        born = np.searchsorted(np.array(vertices.level_counts), np.arange(vertices.n_vertices), side="right")
        for x in range(vertices.n_vertices):
            word = vertices.word_of(int(vertices.canonical_word[x]), vertices.level)
            writer.writerow(
                [
                    x,
                    int(born[x]),
                    ".".join(str(i + 1) for i in word) or "-",
                    f"P{int(vertices.canonical_point[x]) + 1}",
                    repr(float(final.values[x])),
                ]
            )
        return buf.getvalue()


class CascadeEngine:
    """Cascade computations for one (fractal, energy, sigma) with shared caches."""

    def __init__(
        self,
        fractal: ValidatedFractal,
        energy: EnergyModel,
        sigma: float,
        config: SolverConfig | None = None,
    ):
        if not sigma > 0:
            raise HypothesisViolation(f"sigma must be positive, got {sigma}")
        self.fractal = fractal
        self.energy = energy
        self.sigma = float(sigma)
        self.renorm = Renormalizer(fractal, energy, config)

    @property
    def config(self) -> SolverConfig:
        return self.renorm.config

    def theta_bar(self, u) -> float:
        return self.renorm.theta_bar(self.sigma, u).theta

    def cascade(self, v: LevelFunction, depth: int | None = None) -> ThetaCascade:
        """Factors for words of length ``<= depth``; needs ``v`` on ``V(depth - 1)``."""
        depth = v.level if depth is None else depth
        if depth > v.level + 1:
            raise ValueError(f"depth {depth} needs v on V({depth - 1}), got level {v.level}")
        k = self.fractal.k
        vertices = v.vertices
        factors = [np.ones(1)]
        traces, roots = [], []
        for m in range(min(depth, v.level) + 1):
            g = factors[m][:, None] * v.values[vertices.all_cell_ids(m)]
            traces.append(g)
            if m == depth:
                break
            theta = np.array([self.theta_bar(row) for row in g])
            roots.append(theta)
            factors.append(np.repeat(factors[m] * theta, k))
        return ThetaCascade(self.sigma, depth, k, tuple(factors), tuple(traces), tuple(roots))

    def energy_at_level(self, v: LevelFunction, n: int) -> float:
        if n > v.level:
            raise ValueError(f"level-{n} energy needs v on V({n}), got level {v.level}")
        if n == 0:
            return float(self.energy(v.boundary))
        cascade = self.cascade(v, n)
        return float(np.sum(self.energy(cascade.traces[n]))) / self.sigma**n

    def cell_energies(self, v: LevelFunction, n: int) -> np.ndarray:
        """Per-cell contributions ``sigma**-n E(f_w v o psi_w)`` at depth ``n``."""
        cascade = self.cascade(v, n)
        return np.asarray(self.energy(cascade.traces[n]), dtype=float).reshape(-1) / self.sigma**n

    def minimal_extension(self, u, depth: int, *, unsafe_sigma: bool = False) -> ExtensionTrace:
        """Energy-preserving refinement of ``u`` down to ``V(depth)``."""
        if not (0 < self.sigma <= 1) and not unsafe_sigma:
            raise HypothesisViolation(
                f"the minimal extension requires sigma in (0, 1], got {self.sigma}"
            )
        if depth < 0:
            raise ValueError("depth must be >= 0")
        u = np.asarray(u, dtype=float)
        if u.shape != (self.fractal.N,):
            raise ValueError(f"boundary data must have {self.fractal.N} values")
        e_u = float(self.energy(u))
        k = self.fractal.k
        level1 = self.fractal.level(1)

        v = LevelFunction(self.fractal, 0, u)
        factors = np.ones(1)
        records = [self._record(v, 0, factors, ())]
        budget_scale = max(abs(e_u), np.finfo(float).tiny)
        for m in range(depth):
            target = self.fractal.level(m + 1)
            cell_ids = target.all_cell_ids(m)
            g = factors[:, None] * v.values[cell_ids]
            new_values = np.empty(target.n_vertices)
            new_values[: target.count(m)] = v.values
            thetas = np.empty(len(g))
            residuals = []
            for w in range(len(g)):
                hv, solve, result = self.renorm.h_prime(self.sigma, g[w])
                thetas[w] = solve.theta
                residuals.append(result.residual)
                ids = target.trace_ids(target.word_of(w, m), level1)
                raw = v.values[cell_ids[w]]
                fresh = ids >= target.count(m)
                new_values[ids[fresh]] = np.clip(hv[fresh] / factors[w], raw.min(), raw.max())
            v = LevelFunction(self.fractal, m + 1, new_values)
            factors = np.repeat(factors * thetas, k)
            record = self._record(v, m + 1, factors, tuple(residuals))
            budget = 10 * self.config.tol_coord * (m + 1) * budget_scale
            drift = abs(record.energy - e_u)
            if drift > 100 * budget and drift > 100 * self.config.tol_theta * budget_scale:
                raise ConservationDrift(
                    f"level {m + 1}: energy {record.energy:.15g} vs E(u) = {e_u:.15g}"
                )
            records.append(record)
        return ExtensionTrace(u, e_u, self.sigma, tuple(records))

    def _record(self, v: LevelFunction, m: int, factors: np.ndarray, residuals) -> LevelRecord:
        traces = v.values[v.vertices.all_cell_ids(m)]
        osc = traces.max(axis=1) - traces.min(axis=1)
        # factors are recomputed from scratch so the recorded energy is an
        # independent check of the construction
        energy = self.energy_at_level(v, m)
        per_cell = self.cell_energies(v, m) if m > 0 else np.array([energy])
        cells = tuple(
            CellRecord(v.vertices.word_of(w, m), float(osc[w]), float(factors[w]), float(per_cell[w]))
            for w in range(len(traces))
        )
        return LevelRecord(m, v, energy, float(osc.max()), cells, residuals)

    def monotone_energy_check(self, v: LevelFunction, n: int | None = None, tol: float = 1e-9):
        n = v.level - 1 if n is None else n
        lower = self.energy_at_level(v, n)
        upper = self.energy_at_level(v, n + 1)
        return lower, upper, upper >= lower - tol * max(1.0, abs(lower))

    def self_similarity_residual(self, v: LevelFunction) -> float:
        """``|E_{n+1}(v) - (1/sigma) sum_i E_n(theta_bar(v|V0) v o psi_i)|``."""
        n = v.level - 1
        if n < 0:
            raise ValueError("self-similarity needs v on V(1) or finer")
        whole = self.energy_at_level(v, n + 1)
        theta0 = self.theta_bar(v.boundary)
        parts = sum(
            self.energy_at_level(cell_trace(v, (i,)).scaled(theta0), n) for i in range(self.fractal.k)
        )
        return abs(whole - parts / self.sigma)


def build_cascade(energy, sigma, v: LevelFunction, depth=None, config=None) -> ThetaCascade:
    return CascadeEngine(v.fractal, energy, sigma, config).cascade(v, depth)


def energy_at_level(energy, sigma, v: LevelFunction, n: int, config=None) -> float:
    return CascadeEngine(v.fractal, energy, sigma, config).energy_at_level(v, n)


def minimal_extension(
    fractal: ValidatedFractal, energy, sigma, u, depth: int, config=None, *, unsafe_sigma=False
) -> ExtensionTrace:
    return CascadeEngine(fractal, energy, sigma, config).minimal_extension(u, depth, unsafe_sigma=unsafe_sigma)


def monotone_energy_check(energy, sigma, v: LevelFunction, n=None, config=None):
    return CascadeEngine(v.fractal, energy, sigma, config).monotone_energy_check(v, n)


def self_similarity_residual(energy, sigma, v: LevelFunction, config=None) -> float:
    return CascadeEngine(v.fractal, energy, sigma, config).self_similarity_residual(v)
