"""Combinatorial description of finitely ramified self-similar fractals.

A fractal is given by ``k`` maps acting on the ``N`` boundary points
``P1..PN``.  Each map is written as the list of labels of the images
``psi_i(P1), ..., psi_i(PN)``; equal labels across maps glue cells together.
Everything downstream works on the vertex approximations ``V(n)``.

Vertex ids are nested: the ids of ``V(m)`` are ``0 .. count(m) - 1`` at every
level ``n >= m``, so restricting a level function to ``V(m)`` is a slice.
Boundary points ``P1..PN`` are ids ``0..N-1``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BoundaryCollision,
    Disconnected,
    FixedPointViolation,
    NonInjectiveMap,
    SpecFormatError,
    WordTooLong,
)

Word = tuple[int, ...]


def boundary_label(j: int) -> str:
    """Label of the boundary point with 0-based index ``j``."""
    return f"P{j + 1}"


@dataclass(frozen=True)
class FractalSpec:
    boundary_size: int
    maps: tuple[tuple[str, ...], ...]
    name: str = "custom"

    @property
    def map_count(self) -> int:
        return len(self.maps)

    @classmethod
    def from_dict(cls, data: dict, name: str | None = None) -> "FractalSpec":
        try:
            n = int(data["boundary_size"])
            maps = tuple(tuple(str(lbl) for lbl in row) for row in data["maps"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecFormatError(f"malformed fractal spec: {exc}") from exc
        return cls(n, maps, name or str(data.get("name", "custom")))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "boundary_size": self.boundary_size,
            "maps": [list(row) for row in self.maps],
        }


def load_spec(path: str | Path) -> FractalSpec:
    """Read a fractal spec from a JSON or YAML file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in {".yaml", ".yml"}:
        import yaml

        data = yaml.safe_load(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecFormatError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SpecFormatError(f"{path}: expected a mapping at top level")
    return FractalSpec.from_dict(data, name=data.get("name", path.stem))


BUILTIN_SPECS: dict[str, FractalSpec] = {
    "interval": FractalSpec(2, (("P1", "M"), ("M", "P2")), "interval"),
    "gasket": FractalSpec(
        3,
        (
            ("P1", "M12", "M13"),
            ("M12", "P2", "M23"),
            ("M13", "M23", "P3"),
        ),
        "gasket",
    ),
    # corners P1..P4 counterclockwise from bottom-left; map 5 is the centre
    "vicsek": FractalSpec(
        4,
        (
            ("P1", "A12", "C1", "A14"),
            ("A21", "P2", "A23", "C2"),
            ("C3", "A32", "P3", "A34"),
            ("A41", "C4", "A43", "P4"),
            ("C1", "C2", "C3", "C4"),
        ),
        "vicsek",
    ),
}


def builtin(name: str) -> FractalSpec:
    try:
        return BUILTIN_SPECS[name]
    except KeyError:
        raise SpecFormatError(
            f"unknown fractal {name!r}; built-ins are {sorted(BUILTIN_SPECS)}"
        ) from None


@dataclass(frozen=True)
class LevelVertexSet:
    """Identified vertex set ``V(n)`` with cell addressing.

    ``address_ids[w, j]`` is the id of ``psi_w(P_j)`` where ``w`` is the
    base-k index of a word of length ``n``.  ``canonical_word[x]`` and
    ``canonical_point[x]`` give the lexicographically smallest address of
    vertex ``x``.
    """

    level: int
    k: int
    n_boundary: int
    address_ids: np.ndarray
    canonical_word: np.ndarray
    canonical_point: np.ndarray
    level_counts: tuple[int, ...]

    @property
    def n_vertices(self) -> int:
        return self.level_counts[-1]

    def count(self, m: int) -> int:
        """Number of vertices in ``V(m)`` for ``m <= level``."""
        return self.level_counts[m]

    def word_index(self, word: Sequence[int]) -> int:
        idx = 0
        for i in word:
            idx = idx * self.k + i
        return idx

    def word_of(self, index: int, length: int) -> Word:
        out = []
        for _ in range(length):
            index, r = divmod(index, self.k)
            out.append(r)
        return tuple(reversed(out))

    def cell_ids(self, word: Sequence[int]) -> np.ndarray:
        """Ids of the boundary of the cell ``psi_w(V(0))`` (``len(w) <= level``)."""
        m = len(word)
        if m > self.level:
            raise WordTooLong(f"word of length {m} on level {self.level}")
        # psi_w(P_j) = psi_{w j j ...}(P_j)
        idx = self.word_index(word) * self.k ** (self.level - m)
        tails = np.array(
            [self.word_index((j,) * (self.level - m)) for j in range(self.n_boundary)]
        )
        return self.address_ids[idx + tails, np.arange(self.n_boundary)]

    def all_cell_ids(self, m: int) -> np.ndarray:
        """Array of shape ``(k**m, N)`` with the boundary ids of every m-cell."""
        if m > self.level:
            raise WordTooLong(f"cells of depth {m} on level {self.level}")
        span = self.k ** (self.level - m)
        tails = np.array(
            [self.word_index((j,) * (self.level - m)) for j in range(self.n_boundary)]
        )
        base = np.arange(self.k**m)[:, None] * span
        return self.address_ids[base + tails[None, :], np.arange(self.n_boundary)[None, :]]

    def trace_ids(self, word: Sequence[int], target: "LevelVertexSet") -> np.ndarray:
        """Ids (in this level) of ``psi_w(x)`` for every vertex ``x`` of ``target``.

        ``target`` must be level ``self.level - len(word)`` of the same fractal.
        """
        m = len(word)
        if m > self.level:
            raise WordTooLong(f"word of length {m} on level {self.level}")
        if target.level != self.level - m:
            raise ValueError("target level mismatch")
        span = self.k ** (self.level - m)
        rows = self.word_index(word) * span + target.canonical_word
        return self.address_ids[rows, target.canonical_point]


@dataclass(frozen=True)
class ValidatedFractal:
    spec: FractalSpec
    chain_constant: int
    connectivity_certificate: tuple[int, ...]
    gluing: tuple[tuple[tuple[int, int], ...], ...]
    _levels: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def N(self) -> int:
        return self.spec.boundary_size

    @property
    def k(self) -> int:
        return self.spec.map_count

    def level(self, n: int) -> LevelVertexSet:
        """``V(n)``, built incrementally and cached."""
        if n < 0:
            raise ValueError("level must be >= 0")
        if n not in self._levels:
            if n == 0:
                self._levels[0] = _level_zero(self.N, self.k)
            else:
                self._levels[n] = _refine(self.level(n - 1), self.gluing, self.k)
        return self._levels[n]

    def level1_cells(self) -> np.ndarray:
        return self.level(1).all_cell_ids(1)


def _level_zero(n_boundary: int, k: int) -> LevelVertexSet:
    ids = np.arange(n_boundary)[None, :]
    return LevelVertexSet(
        level=0,
        k=k,
        n_boundary=n_boundary,
        address_ids=ids,
        canonical_word=np.zeros(n_boundary, dtype=np.int64),
        canonical_point=np.arange(n_boundary),
        level_counts=(n_boundary,),
    )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _refine(prev: LevelVertexSet, gluing, k: int) -> LevelVertexSet:
    """Build ``V(n)`` as k glued copies of ``V(n-1)``."""
    n = prev.level + 1
    N = prev.n_boundary
    M = prev.n_vertices
    uf = _UnionFind(k * M)
    for group in gluing:
        (i0, a0), *rest = group
        for i, a in rest:
            uf.union(i0 * M + a0, i * M + a)

    n_words_prev = prev.address_ids.shape[0]
    pre = (np.arange(k)[:, None, None] * M + prev.address_ids[None, :, :]).reshape(
        k * n_words_prev, N
    )
    roots = np.array([uf.find(int(x)) for x in range(k * M)])
    classes = roots[pre]

    # embedded old vertex x with address (w, j) sits at (w j, j)
    new_id = {}
    tail_span = k
    for x in range(M):
        w, j = int(prev.canonical_word[x]), int(prev.canonical_point[x])
        new_id[int(classes[w * tail_span + j, j])] = x

    flat = classes.ravel()
    first_seen: dict[int, int] = {}
    for pos, c in enumerate(flat):
        c = int(c)
        if c not in first_seen:
            first_seen[c] = pos
    next_id = M
    for c, _pos in sorted(first_seen.items(), key=lambda item: item[1]):
        if c not in new_id:
            new_id[c] = next_id
            next_id += 1

    lookup = np.empty(k * M, dtype=np.int64)
    for c, x in new_id.items():
        lookup[c] = x
    address_ids = lookup[classes]

    canonical_word = np.empty(next_id, dtype=np.int64)
    canonical_point = np.empty(next_id, dtype=np.int64)
    seen = np.zeros(next_id, dtype=bool)
    for pos, x in enumerate(address_ids.ravel()):
        if not seen[x]:
            seen[x] = True
            canonical_word[x], canonical_point[x] = divmod(pos, N)

    return LevelVertexSet(
        level=n,
        k=k,
        n_boundary=N,
        address_ids=address_ids,
        canonical_word=canonical_word,
        canonical_point=canonical_point,
        level_counts=prev.level_counts + (next_id,),
    )


def validate_spec(raw: FractalSpec) -> ValidatedFractal:
    """Check the structural conditions on the cell maps and certify connectivity."""
    N, k = raw.boundary_size, raw.map_count
    if N < 2 or k < N:
        raise SpecFormatError(f"need 2 <= N <= k, got N={N}, k={k}")
    for i, row in enumerate(raw.maps):
        if len(row) != N:
            raise SpecFormatError(f"map {i + 1} has {len(row)} images, expected {N}")
        if len(set(row)) != N:
            raise NonInjectiveMap(f"map {i + 1} repeats a label: {list(row)}")

    boundary = {boundary_label(j): j for j in range(N)}
    for j in range(N):
        if raw.maps[j][j] != boundary_label(j):
            raise FixedPointViolation(
                f"psi_{j + 1}(P{j + 1}) = {raw.maps[j][j]}, expected P{j + 1}"
            )
    for i, row in enumerate(raw.maps):
        for a, lbl in enumerate(row):
            if lbl in boundary and (i != boundary[lbl] or a != boundary[lbl]):
                raise BoundaryCollision(
                    f"{lbl} lies in the image of map {i + 1} (as psi_{i + 1}(P{a + 1}))"
                )

    cells = [set(row) for row in raw.maps]
    adjacency = [
        [i2 for i2 in range(k) if i2 != i and cells[i] & cells[i2]] for i in range(k)
    ]
    order = _bfs_order(adjacency, 0)
    if len(order) != k:
        missing = sorted(set(range(k)) - set(order))
        raise Disconnected(f"cells {[m + 1 for m in missing]} are not reachable from cell 1")

    groups: dict[str, list[tuple[int, int]]] = {}
    for i, row in enumerate(raw.maps):
        for a, lbl in enumerate(row):
            groups.setdefault(lbl, []).append((i, a))
    gluing = tuple(tuple(g) for g in groups.values() if len(g) > 1)

    return ValidatedFractal(
        spec=raw,
        chain_constant=_chain_constant(cells, adjacency),
        connectivity_certificate=tuple(order),
        gluing=gluing,
    )


def _bfs_order(adjacency, start: int) -> list[int]:
    seen = {start}
    order = [start]
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in adjacency[i]:
            if j not in seen:
                seen.add(j)
                order.append(j)
                queue.append(j)
    return order


def _chain_constant(cells, adjacency) -> int:
    """Largest over point pairs of the fewest overlapping cells linking them."""
    k = len(cells)
    dist = np.full((k, k), np.inf)
    for s in range(k):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            i = queue.popleft()
            for j in adjacency[i]:
                if dist[s, j] == np.inf:
                    dist[s, j] = dist[s, i] + 1
                    queue.append(j)
    points = sorted(set().union(*cells))
    owners = {p: [i for i in range(k) if p in cells[i]] for p in points}
    worst = 1
    for p, q in product(points, repeat=2):
        hops = min(dist[a, b] for a in owners[p] for b in owners[q])
        worst = max(worst, int(hops) + 1)
    return worst


def get_fractal(name: str | None = None, spec_path: str | Path | None = None) -> ValidatedFractal:
    if spec_path is not None:
        return validate_spec(load_spec(spec_path))
    return validate_spec(builtin(name or "gasket"))


@dataclass(frozen=True)
class LevelFunction:
    """A real function on ``V(n)`` of a fractal."""

    fractal: ValidatedFractal
    level: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = self.fractal.level(self.level).n_vertices
        if values.shape != (expected,):
            raise ValueError(
                f"level {self.level} has {expected} vertices, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("level function values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def vertices(self) -> LevelVertexSet:
        return self.fractal.level(self.level)

    @property
    def boundary(self) -> np.ndarray:
        return self.values[: self.fractal.N]

    def restrict(self, m: int) -> "LevelFunction":
        if m > self.level:
            raise WordTooLong(f"cannot restrict level {self.level} to {m}")
        return LevelFunction(self.fractal, m, self.values[: self.vertices.count(m)])

    def scaled(self, factor: float) -> "LevelFunction":
        return LevelFunction(self.fractal, self.level, factor * self.values)


def cell_trace(v: LevelFunction, word: Sequence[int]) -> LevelFunction:
    """``v o psi_w`` as a function on ``V(n - len(w))``."""
    word = tuple(word)
    m = len(word)
    if m > v.level:
        raise WordTooLong(f"word of length {m} on a level-{v.level} function")
    if any(not 0 <= i < v.fractal.k for i in word):
        raise ValueError(f"word {word} has an index outside 0..{v.fractal.k - 1}")
    target = v.fractal.level(v.level - m)
    ids = v.vertices.trace_ids(word, target)
    return LevelFunction(v.fractal, v.level - m, v.values[ids])


def oscillation(v: LevelFunction, word: Sequence[int] | None = None) -> float:
    """max - min of ``v`` over all of ``V(n)`` or over the vertices of one cell."""
    values = v.values if word is None else cell_trace(v, word).values
    return float(values.max() - values.min())
