"""One-level renormalization: ``S_theta``, ``Lambda_theta``, the scaling root and H'.

For a boundary function ``u`` the renormalized energy is

    Lambda_theta(E)(u) = min { sum_i E(theta * v o psi_i) : v on V(1), v = u on V(0) }

Quadratic energies are minimized exactly by eliminating the free vertices.
Edge forms use cyclic coordinate descent with a safeguarded Newton search on
each coordinate; black-box energies use golden-section line searches.
Coordinate searches are confined to ``[min u, max u]``, which the clamping
(Markov) property makes harmless for admissible energies.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .energy import A2Metadata, EdgeForm, EdgeTerm, EnergyModel, boundary_pairs
from .errors import (
    MissingA2Metadata,
    MonotonicityViolation,
    NoConvergence,
    SolverDivergence,
    ToleranceUnreached,
)
from .fractal import LevelFunction, ValidatedFractal

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolverConfig:
    tol_coord: float = 1e-10
    tol_theta: float = 1e-8
    max_iters: int = 1_000_000
    bracket_growth: float = 2.0
    bracket_width: float = 1e-12
    max_bracket_steps: int = 200

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RenormResult:
    value: float
    minimizer: np.ndarray
    clamped: np.ndarray
    clamped_value: float
    iterations: int
    residual: float
    theta: float
    method: str


@dataclass(frozen=True)
class ThetaSolve:
    sigma: float
    theta: float
    residual: float
    target: float
    brackets: tuple[tuple[float, float], ...] = field(default=(), repr=False)
    evaluations: int = 0


def solve_scaling_root(
    lam: Callable[[float], float], target: float, config: SolverConfig = SolverConfig()
) -> tuple[float, float, list[tuple[float, float]], int]:
    """Find ``theta > 0`` with ``lam(theta) = target`` for increasing ``lam``.

    The bracket grows from ``theta = 1`` by ``bracket_growth`` (or shrinks by its
    inverse) until the sign flips, then bisects.  Returns
    ``(theta, residual, bracket_history, evaluations)``.
    """
    slack = 1e-9 * abs(target)
    calls = 0

    def f(theta: float) -> float:
        nonlocal calls
        calls += 1
        return lam(theta) - target

    history: list[tuple[float, float]] = []
    growth = config.bracket_growth
    f1 = f(1.0)
    if f1 == 0.0:
        return 1.0, 0.0, history, calls
    if f1 < 0:
        lo, flo, hi = 1.0, f1, growth
        for _ in range(config.max_bracket_steps):
            fhi = f(hi)
            history.append((lo, hi))
            if fhi < flo - slack:
                raise MonotonicityViolation(
                    f"Lambda decreased from {flo + target:.6g} at theta={lo:.6g} "
                    f"to {fhi + target:.6g} at theta={hi:.6g}"
                )
            if fhi >= 0:
                break
            lo, flo, hi = hi, fhi, hi * growth
        else:
            raise ToleranceUnreached("could not bracket the scaling root from above")
    else:
        hi, fhi, lo = 1.0, f1, 1.0 / growth
        for _ in range(config.max_bracket_steps):
            flo = f(lo)
            history.append((lo, hi))
            if flo > fhi + slack:
                raise MonotonicityViolation(
                    f"Lambda decreased from {flo + target:.6g} at theta={lo:.6g} "
                    f"to {fhi + target:.6g} at theta={hi:.6g}"
                )
            if flo <= 0:
                break
            hi, fhi, lo = lo, flo, lo / growth
        else:
            raise ToleranceUnreached("could not bracket the scaling root from below")

    if flo == 0.0:
        return lo, 0.0, history, calls
    if fhi == 0.0:
        return hi, 0.0, history, calls

    best, fbest = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    tol = config.tol_theta * abs(target)
    while abs(fbest) > tol and hi - lo > config.bracket_width * hi:
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        history.append((lo, hi))
        if not (flo - slack <= fmid <= fhi + slack):
            raise MonotonicityViolation(
                f"Lambda({mid:.6g}) = {fmid + target:.6g} lies outside "
                f"[{flo + target:.6g}, {fhi + target:.6g}]"
            )
        if abs(fmid) < abs(fbest):
            best, fbest = mid, fmid
        if fmid < 0:
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid

    # one interpolation step on the final bracket
    if fhi != flo:
        guess = lo - flo * (hi - lo) / (fhi - flo)
        if lo < guess < hi:
            fguess = f(guess)
            if abs(fguess) < abs(fbest):
                best, fbest = guess, fguess
    return best, abs(fbest), history, calls


class Renormalizer:
    """Level-1 solvers for one (fractal, energy, config) triple, with caches."""

    def __init__(
        self,
        fractal: ValidatedFractal,
        energy: EnergyModel,
        config: SolverConfig | None = None,
    ):
        if energy.size != fractal.N:
            raise ValueError(
                f"energy acts on {energy.size} points but the fractal has N={fractal.N}"
            )
        self.fractal = fractal
        self.energy = energy
        self.config = config or SolverConfig()
        self.cells = fractal.level1_cells()
        self.n1 = fractal.level(1).n_vertices
        self.N = fractal.N
        self.free = np.arange(self.N, self.n1)
        self.homogeneous = energy.degree is not None
        self._minimizer_cache: dict = {}
        self._theta_cache: dict = {}
        self._setup_exact()
        self._setup_local()

    # ------------------------------------------------------------------ setup
    def _setup_exact(self) -> None:
        self._harmonic = None
        q = self.energy.matrix
        if q is None:
            return
        n1, N = self.n1, self.N
        big = np.zeros((n1, n1))
        for ids in self.cells:
            big[np.ix_(ids, ids)] += q
        self._level1_matrix = big
        kff = big[N:, N:]
        kf0 = big[N:, :N]
        try:
            harmonic = -np.linalg.solve(kff, kf0) if n1 > N else np.zeros((0, N))
        except np.linalg.LinAlgError:
            return
        self._harmonic = harmonic
        self._schur = big[:N, :N] + big[:N, N:] @ harmonic

    def _setup_local(self) -> None:
        # per free vertex: edges (p, coeff, neighbour) for edge forms,
        # (cell, position) pairs for black-box energies
        self._edges: dict[int, list[tuple[float, float, int]]] = {}
        self._memberships: dict[int, list[tuple[int, int]]] = {}
        for q in self.free:
            self._edges[int(q)] = []
            self._memberships[int(q)] = []
        for i, ids in enumerate(self.cells):
            for pos, x in enumerate(ids):
                if x >= self.N:
                    self._memberships[int(x)].append((i, pos))
        if isinstance(self.energy, EdgeForm):
            pairs = boundary_pairs(self.N)
            for term in self.energy.terms:
                for (a, b), c in zip(pairs, term.coeffs):
                    if c == 0:
                        continue
                    for ids in self.cells:
                        x, y = int(ids[a]), int(ids[b])
                        if x >= self.N:
                            self._edges[x].append((term.p, c, y))
                        if y >= self.N:
                            self._edges[y].append((term.p, c, x))

    # -------------------------------------------------------------- functionals
    def s_theta(self, theta: float, v1) -> float:
        """``sum_i E(theta * v o psi_i)`` for ``v`` on ``V(1)``."""
        v1 = np.asarray(v1.values if isinstance(v1, LevelFunction) else v1, dtype=float)
        return float(np.sum(self.energy(theta * v1[self.cells])))

    def lambda_theta(self, theta: float, u, start: np.ndarray | None = None) -> RenormResult:
        if not theta > 0:
            raise ValueError("theta must be positive")
        u = np.asarray(u, dtype=float)
        if self.homogeneous:
            base = self._minimize(1.0, u, start)
            scale = theta ** self.energy.degree
            return RenormResult(
                value=base.value * scale,
                minimizer=base.minimizer,
                clamped=base.clamped,
                clamped_value=base.clamped_value * scale,
                iterations=base.iterations,
                residual=base.residual,
                theta=theta,
                method=base.method,
            )
        return self._minimize(theta, u, start)

    def _minimize(self, theta: float, u: np.ndarray, start) -> RenormResult:
        key = (theta, u.tobytes(), None if start is None else start.tobytes())
        cached = self._minimizer_cache.get(key)
        if cached is not None:
            return cached
        lo, hi = float(u.min()), float(u.max())
        if hi == lo:
            v = np.full(self.n1, lo)
            result = RenormResult(0.0, v, v, 0.0, 0, 0.0, theta, "constant")
        elif self._harmonic is not None:
            result = self._exact(theta, u)
        else:
            result = self._coordinate_descent(theta, u, start)
        self._minimizer_cache[key] = result
        return result

    def _exact(self, theta: float, u: np.ndarray) -> RenormResult:
        v = np.concatenate([u, self._harmonic @ u])
        clamped = np.clip(v, u.min(), u.max())
        residual = float(np.abs(self._level1_matrix[self.N :] @ v).max()) if self.n1 > self.N else 0.0
        return RenormResult(
            value=self.s_theta(theta, v),
            minimizer=v,
            clamped=clamped,
            clamped_value=self.s_theta(theta, clamped),
            iterations=1,
            residual=residual,
            theta=theta,
            method="exact",
        )

    def _coordinate_descent(self, theta: float, u: np.ndarray, start) -> RenormResult:
        cfg = self.config
        lo, hi = float(u.min()), float(u.max())
        tol = cfg.tol_coord * (hi - lo)
        v = np.empty(self.n1)
        v[: self.N] = u
        v[self.N :] = float(np.mean(u)) if start is None else np.clip(start[self.N :], lo, hi)
        use_edges = isinstance(self.energy, EdgeForm) and self.energy.has_gradient
        values = v.tolist()
        previous = self.s_theta(theta, v)
        # rounding floor: S of a function whose oscillation is a few ulps of |u|
        ulps = 8 * np.finfo(float).eps * max(abs(lo), abs(hi))
        floor = self.s_theta(theta, np.where(np.arange(self.n1) % 2, ulps, 0.0))
        updates = 0
        while True:
            max_move = 0.0
            for q in self.free:
                q = int(q)
                if use_edges:
                    new = self._edge_coordinate(q, values, theta, lo, hi, tol)
                else:
                    new = self._golden_coordinate(q, values, theta, lo, hi, tol)
                max_move = max(max_move, abs(new - values[q]))
                values[q] = new
                updates += 1
                if updates >= cfg.max_iters:
                    raise ToleranceUnreached(
                        f"coordinate descent hit {cfg.max_iters} updates (last move {max_move:.3e})"
                    )
            current = self.s_theta(theta, np.asarray(values))
            if current > previous + 1e-9 * abs(previous) + floor:
                raise SolverDivergence(
                    f"S_theta increased from {previous:.12g} to {current:.12g} during a sweep"
                )
            previous = current
            if max_move <= tol:
                break
        v = np.asarray(values)
        return RenormResult(
            value=previous,
            minimizer=v,
            clamped=v.copy(),
            clamped_value=previous,
            iterations=updates,
            residual=max_move,
            theta=theta,
            method="coordinate_descent" if use_edges else "coordinate_golden",
        )

    def _edge_coordinate(self, q: int, values: list, theta: float, lo: float, hi: float, tol: float) -> float:
        edges = [(p, c * theta**p, values[r]) for p, c, r in self._edges[q]]

        def slope(t: float) -> tuple[float, float]:
            d1 = d2 = 0.0
            for p, c, y in edges:
                x = t - y
                ax = abs(x)
                if ax == 0.0:
                    if p < 2:
                        d2 = math.inf
                    elif p == 2:
                        d2 += 2.0 * c
                    continue
                d1 += c * p * math.copysign(ax ** (p - 1), x)
                d2 += c * p * (p - 1) * ax ** (p - 2)
            return d1, d2

        # endpoints are only probed when the bracket collapses onto one of them
        a, b = lo, hi
        t = min(max(values[q], lo), hi)
        step_tol = 0.1 * tol if tol > 0 else 0.0
        for _ in range(200):
            g, h = slope(t)
            if g == 0.0:
                return t
            if g < 0:
                a = t
            else:
                b = t
            if b - a <= step_tol:
                break
            if a == lo and t - lo <= step_tol and slope(lo)[0] >= 0:
                return lo
            if b == hi and hi - t <= step_tol and slope(hi)[0] <= 0:
                return hi
            if h > 0 and math.isfinite(h):
                nxt = t - g / h
                if not a < nxt < b:
                    nxt = 0.5 * (a + b)
            else:
                nxt = 0.5 * (a + b)
            if abs(nxt - t) <= step_tol:
                t = nxt
                break
            t = nxt
        return min(max(t, lo), hi)

    def _golden_coordinate(self, q: int, values: list, theta: float, lo: float, hi: float, tol: float) -> float:
        members = self._memberships[q]
        rows = [np.array([values[x] for x in self.cells[i]]) for i, _ in members]

        def local(t: float) -> float:
            total = 0.0
            for (i, pos), row in zip(members, rows):
                row[pos] = t
                total += self.energy(theta * row)
            return total

        a, b = lo, hi
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc, fd = local(c), local(d)
        while b - a > max(tol, 1e-15 * max(abs(a), abs(b), 1.0)):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = local(c)
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = local(d)
        best = 0.5 * (a + b)
        candidates = [(local(values[q]), values[q]), (local(best), best)]
        return min(candidates)[1]

    # ---------------------------------------------------------------- theta bar
    def theta_bar(self, sigma: float, u) -> ThetaSolve:
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        u = np.asarray(u, dtype=float)
        osc = float(u.max() - u.min())
        if osc == 0.0:
            meta = self.energy.a2
            if meta is None:
                raise MissingA2Metadata(
                    "theta_bar at a constant function needs the eigenvalue and homogeneity degree"
                )
            return ThetaSolve(sigma, (sigma / meta.rho) ** (1.0 / meta.p), 0.0, 0.0)
        key_u = (u - u.min()) / osc if self.homogeneous else u
        key = (sigma, key_u.tobytes())
        cached = self._theta_cache.get(key)
        if cached is not None:
            return cached
        target = sigma * self.energy(key_u)
        warm = {"start": None}

        def lam(theta: float) -> float:
            result = self.lambda_theta(theta, key_u, warm["start"])
            if not self.homogeneous:
                warm["start"] = result.clamped
            return result.clamped_value

        theta, residual, history, calls = solve_scaling_root(lam, target, self.config)
        solve = ThetaSolve(sigma, theta, residual, target, tuple(history), calls)
        self._theta_cache[key] = solve
        return solve

    def h_prime(self, sigma: float, u) -> tuple[np.ndarray, ThetaSolve, RenormResult]:
        """Deterministic element of H'_{sigma,E}(u) as values on ``V(1)``."""
        u = np.asarray(u, dtype=float)
        lo, hi = float(u.min()), float(u.max())
        solve = self.theta_bar(sigma, u)
        if hi == lo:
            v = np.full(self.n1, lo)
            return v, solve, RenormResult(0.0, v, v, 0.0, 0, 0.0, solve.theta, "constant")
        if self.homogeneous:
            norm = (u - lo) / (hi - lo)
            result = self.lambda_theta(solve.theta, norm)
            v = lo + (hi - lo) * result.clamped
            v[: self.N] = u
        else:
            result = self.lambda_theta(solve.theta, u)
            v = result.clamped.copy()
        return np.clip(v, lo, hi), solve, result


# ---------------------------------------------------------------- module API
def s_theta(fractal: ValidatedFractal, energy: EnergyModel, theta: float, v) -> float:
    return Renormalizer(fractal, energy).s_theta(theta, v)


def lambda_theta(
    fractal: ValidatedFractal, energy: EnergyModel, theta: float, u, config: SolverConfig | None = None
) -> RenormResult:
    return Renormalizer(fractal, energy, config).lambda_theta(theta, u)


def theta_bar(
    fractal: ValidatedFractal, energy: EnergyModel, sigma: float, u, config: SolverConfig | None = None
) -> ThetaSolve:
    return Renormalizer(fractal, energy, config).theta_bar(sigma, u)


def choose_H_prime(
    fractal: ValidatedFractal, energy: EnergyModel, sigma: float, u, config: SolverConfig | None = None
) -> LevelFunction:
    v, _, _ = Renormalizer(fractal, energy, config).h_prime(sigma, u)
    return LevelFunction(fractal, 1, v)


@dataclass(frozen=True)
class EigenResult:
    rho: float
    form: EdgeForm
    iterations: int
    residual: float
    proportional: bool
    trace_coefficients: tuple[float, ...]


def renormalized_form(fractal: ValidatedFractal, form: EdgeForm) -> EdgeForm:
    """``Lambda_(1)(D)`` of a Dirichlet form, as a Dirichlet form (Schur complement)."""
    renorm = Renormalizer(fractal, form)
    if renorm._harmonic is None:
        raise ValueError("renormalized_form needs an irreducible quadratic form")
    schur = renorm._schur
    coeffs = tuple(max(-schur[a, b], 0.0) for a, b in boundary_pairs(fractal.N))
    return EdgeForm(fractal.N, (EdgeTerm(2.0, coeffs),), name=f"trace({form.name})")


def quadratic_eigen(
    fractal: ValidatedFractal,
    form: EdgeForm,
    *,
    max_iter: int = 10_000,
    tol: float = 1e-14,
) -> EigenResult:
    """Eigenvalue of the renormalization map on Dirichlet forms.

    Returns directly if ``Lambda(D)`` is proportional to ``D``; otherwise runs
    the normalized iteration ``D -> Lambda(D) / |Lambda(D)|`` to a fixed point.
    """
    if form.matrix is None:
        raise ValueError("quadratic_eigen needs a quadratic form")
    current = np.array(form.terms[0].coeffs, dtype=float) if len(form.terms) == 1 else np.array(
        list(form.coefficients(2).values())
    )
    start_image = _trace_coefficients(fractal, current)
    ratio, resid = _proportionality(current, start_image)
    if resid <= 1e-12:
        fixed = EdgeForm(fractal.N, form.terms, name=form.name)
        fixed = fixed.with_a2(A2Metadata(fixed, 2.0, ratio))
        return EigenResult(ratio, fixed, 0, resid, True, tuple(start_image))

    current = current / current.sum()
    for it in range(1, max_iter + 1):
        image = _trace_coefficients(fractal, current)
        nxt = image / image.sum()
        if np.abs(nxt - current).max() <= tol:
            current = nxt
            break
        current = nxt
    else:
        raise NoConvergence(f"normalized renormalization did not converge in {max_iter} steps")
    image = _trace_coefficients(fractal, current)
    ratio, resid = _proportionality(current, image)
    fixed = EdgeForm(fractal.N, (EdgeTerm(2.0, tuple(current.tolist())),), name=f"eigen({form.name})")
    fixed = fixed.with_a2(A2Metadata(fixed, 2.0, ratio))
    return EigenResult(ratio, fixed, it, resid, False, tuple(image))


def _trace_coefficients(fractal: ValidatedFractal, coeffs: np.ndarray) -> np.ndarray:
    form = EdgeForm(fractal.N, (EdgeTerm(2.0, tuple(float(c) for c in coeffs)),))
    return np.array(renormalized_form(fractal, form).terms[0].coeffs)


def _proportionality(base: np.ndarray, image: np.ndarray) -> tuple[float, float]:
    ratio = float(image.sum() / base.sum())
    scale = float(np.abs(base).max())
    return ratio, float(np.abs(image - ratio * base).max() / scale)


def eigen_residual(fractal: ValidatedFractal, meta: A2Metadata, samples: int = 100, seed: int = 0) -> float:
    """``sup |Lambda_1(ref)(u) - rho ref(u)| / ref(u)`` over random nonconstant ``u``."""
    renorm = Renormalizer(fractal, meta.reference)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        u = rng.normal(size=fractal.N)
        ref = meta.reference(u)
        value = renorm.lambda_theta(1.0, u).clamped_value
        worst = max(worst, abs(value - meta.rho * ref) / ref)
    return worst
