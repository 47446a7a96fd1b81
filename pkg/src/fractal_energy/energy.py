"""Convex energies on boundary functions.

An energy takes a function ``u`` on the ``N`` boundary points and returns a
nonnegative number.  All built-in families are edge sums

    E(u) = sum_t sum_{a<b} c_t[a, b] * |u_a - u_b| ** p_t

which covers Dirichlet forms (one term, p = 2), p-edge forms and their
higher-order perturbations.  Arbitrary callables are accepted too; solvers
then fall back to derivative-free searches.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import BadExponent, NegativeCoefficient, RatioDivergence, ReducibleForm


def boundary_pairs(n: int) -> list[tuple[int, int]]:
    """Unordered boundary pairs ``{a, b}`` with ``a < b``, in lexicographic order."""
    return list(combinations(range(n), 2))


@dataclass(frozen=True)
class A2Metadata:
    """Small-oscillation data: ``E ~ reference`` near constants.

    ``reference`` is p-homogeneous and an eigenform with eigenvalue ``rho``.
    """

    reference: "EnergyModel"
    p: float
    rho: float
    radius: float = 1e-2


class EnergyModel:
    """Base class for energies on ``R^{V(0)}``.

    Subclasses implement ``_evaluate`` on arrays of shape ``(..., N)``.
    """

    size: int
    degree: float | None = None
    a2: A2Metadata | None = None
    name: str = "energy"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = self._evaluate(u)
        return float(out) if np.ndim(out) == 0 else out

    def _evaluate(self, u: np.ndarray):
        raise NotImplementedError

    @property
    def has_gradient(self) -> bool:
        return False

    def gradient(self, u) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no gradient")

    @property
    def matrix(self) -> np.ndarray | None:
        """Symmetric matrix ``Q`` with ``E(u) = u^T Q u`` for quadratic energies."""
        return None

    def with_a2(self, meta: A2Metadata | None) -> "EnergyModel":
        return replace(self, a2=meta)

    def describe(self) -> dict:
        return {"name": self.name}


@dataclass(frozen=True)
class CallableEnergy(EnergyModel):
    """Black-box energy given by a Python callable on one boundary vector."""

    func: Callable[[np.ndarray], float]
    size: int
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    degree: float | None = None
    a2: A2Metadata | None = None
    name: str = "callable"

    def _evaluate(self, u):
        if u.ndim == 1:
            return float(self.func(u))
        flat = u.reshape(-1, u.shape[-1])
        return np.array([self.func(row) for row in flat]).reshape(u.shape[:-1])

    @property
    def has_gradient(self) -> bool:
        return self.grad is not None

    def gradient(self, u):
        if self.grad is None:
            raise NotImplementedError(f"{self.name} has no gradient")
        return np.asarray(self.grad(np.asarray(u, dtype=float)), dtype=float)


@dataclass(frozen=True)
class EdgeTerm:
    p: float
    coeffs: tuple[float, ...]


@dataclass(frozen=True)
class EdgeForm(EnergyModel):
    size: int
    terms: tuple[EdgeTerm, ...]
    a2: A2Metadata | None = None
    name: str = "edge_form"

    def __post_init__(self):
        pairs = boundary_pairs(self.size)
        object.__setattr__(self, "_a", np.array([a for a, _ in pairs], dtype=np.int64))
        object.__setattr__(self, "_b", np.array([b for _, b in pairs], dtype=np.int64))
        incidence = np.zeros((len(pairs), self.size))
        incidence[np.arange(len(pairs)), self._a] = 1.0
        incidence[np.arange(len(pairs)), self._b] = -1.0
        object.__setattr__(self, "_incidence", incidence)
        for term in self.terms:
            if len(term.coeffs) != len(pairs):
                raise ValueError(f"expected {len(pairs)} coefficients, got {len(term.coeffs)}")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return boundary_pairs(self.size)

    @property
    def degree(self) -> float | None:
        exponents = {t.p for t in self.terms}
        return exponents.pop() if len(exponents) == 1 else None

    def _evaluate(self, u):
        d = np.abs(u[..., self._a] - u[..., self._b])
        total = 0.0
        for term in self.terms:
            total = total + (np.asarray(term.coeffs) * d**term.p).sum(axis=-1)
        return total

    @property
    def has_gradient(self) -> bool:
        return all(t.p >= 1 for t in self.terms)

    def gradient(self, u):
        u = np.asarray(u, dtype=float)
        d = u[..., self._a] - u[..., self._b]
        flux = np.zeros_like(d)
        for term in self.terms:
            flux = flux + np.asarray(term.coeffs) * term.p * np.sign(d) * np.abs(d) ** (term.p - 1)
        return flux @ self._incidence

    @property
    def matrix(self) -> np.ndarray | None:
        if any(t.p != 2 for t in self.terms):
            return None
        q = np.zeros((self.size, self.size))
        for term in self.terms:
            for (a, b), c in zip(self.pairs, term.coeffs):
                q[a, a] += c
                q[b, b] += c
                q[a, b] -= c
                q[b, a] -= c
        return q

    def coefficients(self, p: float = 2) -> dict[tuple[int, int], float]:
        """Pair coefficients of the term with exponent ``p`` (summed if repeated)."""
        out = {pair: 0.0 for pair in self.pairs}
        for term in self.terms:
            if term.p == p:
                for pair, c in zip(self.pairs, term.coeffs):
                    out[pair] += c
        return out

    def is_irreducible(self) -> bool:
        positive = [
            pair
            for pair in self.pairs
            if any(t.coeffs[self.pairs.index(pair)] > 0 for t in self.terms)
        ]
        return _connected(self.size, positive)

    def __add__(self, other: "EdgeForm") -> "EdgeForm":
        if not isinstance(other, EdgeForm) or other.size != self.size:
            return NotImplemented
        return EdgeForm(self.size, self.terms + other.terms, name=f"{self.name}+{other.name}")

    def describe(self) -> dict:
        return {
            "name": self.name,
            "terms": [{"p": t.p, "coeffs": list(t.coeffs)} for t in self.terms],
        }


# a Dirichlet form is an edge form with a single quadratic term
DirichletForm = EdgeForm


def _connected(n: int, edges) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(x) for x in range(n)}) == 1


def _coefficient_vector(coeffs, size: int) -> tuple[float, ...]:
    pairs = boundary_pairs(size)
    if coeffs is None:
        return tuple(1.0 for _ in pairs)
    if np.isscalar(coeffs):
        return tuple(float(coeffs) for _ in pairs)
    if isinstance(coeffs, Mapping):
        out = dict.fromkeys(pairs, 0.0)
        for key, c in coeffs.items():
            a, b = _parse_pair(key)
            out[(min(a, b), max(a, b))] = float(c)
        return tuple(out[p] for p in pairs)
    values = tuple(float(c) for c in coeffs)
    if len(values) != len(pairs):
        raise ValueError(f"expected {len(pairs)} coefficients for N={size}, got {len(values)}")
    return values


def _parse_pair(key) -> tuple[int, int]:
    if isinstance(key, str):
        left, right = key.replace("P", "").split("-")
        return int(left) - 1, int(right) - 1
    a, b = key
    return int(a), int(b)


def make_dirichlet(
    coeffs=None,
    size: int = 3,
    *,
    require_irreducible: bool = True,
    check: bool = True,
    name: str = "dirichlet",
) -> EdgeForm:
    """Quadratic form ``sum c_ab (u_a - u_b)^2``.

    ``coeffs`` may be a scalar, a sequence in :func:`boundary_pairs` order, or a
    mapping from pairs (0-based tuples or ``"P1-P2"`` strings) to values.
    ``None`` means the unit form.  ``check=False`` skips validation, which is
    only useful for building deliberately broken test energies.
    """
    c = _coefficient_vector(coeffs, size)
    form = EdgeForm(size, (EdgeTerm(2.0, c),), name=name)
    if check:
        _check_coefficients(form, require_irreducible)
    return form


def make_p_edge(
    coeffs=None, p: float = 2.0, size: int = 3, *, require_irreducible: bool = True, name: str | None = None
) -> EdgeForm:
    """``sum c_ab |u_a - u_b|^p`` with ``p > 1``."""
    if not p > 1:
        raise BadExponent(f"p must be > 1, got {p}")
    c = _coefficient_vector(coeffs, size)
    form = EdgeForm(size, (EdgeTerm(float(p), c),), name=name or f"p_edge(p={p:g})")
    _check_coefficients(form, require_irreducible)
    return form


def _check_coefficients(form: EdgeForm, require_irreducible: bool) -> None:
    for term in form.terms:
        for pair, c in zip(form.pairs, term.coeffs):
            if c < 0:
                raise NegativeCoefficient(f"coefficient {c} on pair P{pair[0] + 1}-P{pair[1] + 1}")
    if require_irreducible and not form.is_irreducible():
        raise ReducibleForm("positive-coefficient graph on V(0) is not connected")


def make_perturbed(
    base: EdgeForm,
    bump: EdgeForm,
    rho: float | None = None,
    *,
    radius: float = 1e-2,
    schedule: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
) -> EdgeForm:
    """``base + bump`` where ``bump`` is negligible against ``base`` near constants.

    The result carries :class:`A2Metadata` with ``base`` as reference.  ``rho``
    defaults to the eigenvalue stored on ``base.a2``.
    """
    p = base.degree
    if p is None:
        raise BadExponent("base energy must be homogeneous")
    if rho is None:
        if base.a2 is None:
            raise ValueError("rho is required when the base carries no eigenvalue")
        rho = base.a2.rho
    combined = EdgeForm(base.size, base.terms + bump.terms, name=f"{base.name}+{bump.name}")

    probes = np.eye(base.size)[:-1] if base.size > 1 else np.ones((1, 1))
    probes = np.vstack([probes, np.linspace(0.0, 1.0, base.size)[None, :]])
    deviations = []
    for t in schedule:
        worst = 0.0
        for u0 in probes:
            ref = base(t * u0)
            worst = max(worst, abs(combined(t * u0) / ref - 1.0)) if ref > 0 else np.inf
        deviations.append(worst)
    shrinking = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(deviations, deviations[1:]))
    if not (deviations[-1] <= 1e-2 and shrinking):
        raise RatioDivergence(
            f"E/reference does not approach 1 near constants: deviations {deviations}"
        )

    meta = A2Metadata(reference=base.with_a2(None), p=float(p), rho=float(rho), radius=radius)
    return combined.with_a2(meta)
