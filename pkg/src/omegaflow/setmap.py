"""Set-valued maps on finite topological spaces.

A finite T0 space is given by its specialization preorder: ``f`` lies
below ``c`` when ``f`` is in the closure of ``{c}``. Every point ``x`` then
has a smallest open neighbourhood, the up-set ``u(x)`` of cells above it, so
the closure operator ``D`` only needs that one neighbourhood:

    (D G)(x) = closure(G(u(x)))

The orbital operator ``S`` is plain reachability in one or more steps.
Maps are stored as dense boolean matrices; ``m[x, y]`` means ``y in G(x)``.
"""

from __future__ import annotations

from itertools import product
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import sparse

from .boxcover import BoxSet, Grid
from .errors import SpaceMismatch

_CHUNK = 512


def _bool_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # float32 sums are exact for counts below 2**24
    return (a.astype(np.float32) @ b.astype(np.float32)) > 0


class FiniteSpace:
    """Cells with a specialization preorder (reflexive, transitive)."""

    def __init__(self, cells: Sequence[Hashable], below: Mapping[Hashable, Iterable[Hashable]],
                 *, validate: bool = True):
        self.cells = tuple(cells)
        self.index = {c: i for i, c in enumerate(self.cells)}
        if len(self.index) != len(self.cells):
            raise ValueError("duplicate cell identifiers")
        n = len(self.cells)
        rows, cols = [], []
        for c in self.cells:
            i = self.index[c]
            for f in below.get(c, ()):
                rows.append(i)
                cols.append(self.index[f])
        m = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        m.sum_duplicates()
        m.data[:] = 1
        m.sort_indices()
        # below_matrix[c, f] = f is in the closure of c
        self.below_matrix = m.astype(bool)
        self.above_matrix = self.below_matrix.T.tocsr()
        self.above_matrix.sort_indices()
        if validate:
            self._validate()

    def _validate(self):
        m = self.below_matrix
        if not np.all(m.diagonal()):
            raise ValueError("specialization order must be reflexive")
        two = (m.astype(np.int32) @ m.astype(np.int32)).astype(bool)
        if (two > m).nnz:
            raise ValueError("specialization order must be transitive")

    @classmethod
    def from_relation(cls, cells: Sequence[Hashable], pairs: Iterable[tuple]) -> "FiniteSpace":
        """Reflexive-transitive closure of ``(f, c)`` pairs meaning ``f`` below ``c``."""
        cells = tuple(cells)
        idx = {c: i for i, c in enumerate(cells)}
        n = len(cells)
        r = np.eye(n, dtype=bool)
        for f, c in pairs:
            r[idx[c], idx[f]] = True
        while True:
            nxt = r | _bool_matmul(r, r)
            if np.array_equal(nxt, r):
                break
            r = nxt
        below = {c: [cells[j] for j in np.flatnonzero(r[i])] for i, c in enumerate(cells)}
        return cls(cells, below, validate=False)

    def __len__(self):
        return len(self.cells)

    def __eq__(self, other):
        if not isinstance(other, FiniteSpace):
            return NotImplemented
        if self is other:
            return True
        return self.cells == other.cells and (self.below_matrix != other.below_matrix).nnz == 0

    __hash__ = object.__hash__

    def below(self, cell) -> tuple:
        i = self.index[cell]
        m = self.below_matrix
        return tuple(self.cells[j] for j in m.indices[m.indptr[i]:m.indptr[i + 1]])

    def above(self, cell) -> tuple:
        """Minimal open neighbourhood of ``cell``."""
        i = self.index[cell]
        m = self.above_matrix
        return tuple(self.cells[j] for j in m.indices[m.indptr[i]:m.indptr[i + 1]])

    def mask(self, A: Iterable[Hashable]) -> np.ndarray:
        out = np.zeros(len(self.cells), dtype=bool)
        for c in A:
            out[self.index[c]] = True
        return out

    def cellset(self, mask: np.ndarray) -> frozenset:
        return frozenset(self.cells[j] for j in np.flatnonzero(mask))

    def closure_rows(self, rows: np.ndarray) -> np.ndarray:
        """Closure of every row of a boolean ``(k, n)`` array."""
        # row x of the product: cells w with some z in rows[x] above w
        out = self.below_matrix.T.astype(np.float32) @ rows.T.astype(np.float32)
        return out.T > 0

    def open_star_rows(self, m: np.ndarray) -> np.ndarray:
        """Row ``x`` of the result is ``m`` applied to the open star ``u(x)``."""
        return (self.above_matrix.astype(np.float32) @ m.astype(np.float32)) > 0

    # -- serialization --------------------------------------------------------

    def label(self, cell) -> str:
        return cell_label(cell)

    def to_text(self) -> str:
        labels = [self.label(c) for c in self.cells]
        lines = ["cells"] + labels + ["order"]
        m = self.below_matrix.tocoo()
        pairs = sorted((int(r), int(c)) for r, c in zip(m.row, m.col) if r != c)
        lines.extend(f"{labels[f]} {labels[c]}" for c, f in pairs)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FiniteSpace":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != "cells" or "order" not in lines:
            raise ValueError("space text needs 'cells' and 'order' sections")
        k = lines.index("order")
        cells = lines[1:k]
        below = {c: [c] for c in cells}
        for ln in lines[k + 1:]:
            f, c = ln.split()
            below[c].append(f)
        return cls(cells, below)


def cell_label(cell) -> str:
    """Text label without ``:`` or ``,``; cubical names become ``d2[0.0][0.1]...``."""
    if isinstance(cell, tuple) and len(cell) == 2 and isinstance(cell[0], int):
        dim, verts = cell
        return f"d{dim}" + "".join("[" + ".".join(str(v) for v in vert) + "]" for vert in verts)
    s = str(cell)
    if any(ch in s for ch in ":, \n"):
        raise ValueError(f"cell label {s!r} contains a reserved character")
    return s


def closure(space: FiniteSpace, A: Iterable[Hashable]) -> frozenset:
    mask = space.mask(A)
    return space.cellset(space.closure_rows(mask[None, :])[0])


class FiniteSetMap:
    """A map from cells to sets of cells."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: FiniteSpace, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=bool)
        n = len(space)
        if matrix.shape != (n, n):
            raise ValueError(f"matrix must be {n}x{n}")
        self.space = space
        self.matrix = matrix

    @classmethod
    def from_edges(cls, space: FiniteSpace, edges: Mapping[Hashable, Iterable[Hashable]]) -> "FiniteSetMap":
        m = np.zeros((len(space), len(space)), dtype=bool)
        for c, tgts in edges.items():
            i = space.index[c]
            for t in tgts:
                m[i, space.index[t]] = True
        return cls(space, m)

    @classmethod
    def identity(cls, space: FiniteSpace) -> "FiniteSetMap":
        return cls(space, np.eye(len(space), dtype=bool))

    def image(self, cell) -> frozenset:
        return self.space.cellset(self.matrix[self.space.index[cell]])

    def __call__(self, A: Iterable[Hashable]) -> frozenset:
        """Image of a set: union of the images of its members."""
        mask = self.space.mask(A)
        return self.space.cellset(self.matrix[mask].any(axis=0))

    @property
    def edges(self) -> dict:
        cells = self.space.cells
        return {c: tuple(cells[j] for j in np.flatnonzero(row)) for c, row in zip(cells, self.matrix)}

    def __eq__(self, other):
        if not isinstance(other, FiniteSetMap):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.matrix, other.matrix)

    __hash__ = None

    def __le__(self, other: "FiniteSetMap") -> bool:
        """Cellwise inclusion."""
        _same_space(self, other)
        return not np.any(self.matrix & ~other.matrix)

    def __repr__(self):
        return f"FiniteSetMap({len(self.space)} cells, {int(self.matrix.sum())} edges)"

    def to_text(self) -> str:
        labels = [cell_label(c) for c in self.space.cells]
        return "".join(
            f"{labels[i]}: {','.join(labels[j] for j in np.flatnonzero(row))}\n"
            for i, row in enumerate(self.matrix)
        )

    @classmethod
    def from_text(cls, space: FiniteSpace, text: str) -> "FiniteSetMap":
        by_label = {cell_label(c): c for c in space.cells}
        edges = {}
        for ln in text.splitlines():
            if not ln.strip():
                continue
            src, _, rest = ln.partition(":")
            tgts = [t for t in rest.strip().split(",") if t]
            edges[by_label[src.strip()]] = [by_label[t] for t in tgts]
        return cls.from_edges(space, edges)


def _same_space(*maps: FiniteSetMap):
    first = maps[0].space
    for m in maps[1:]:
        if m.space != first:
            raise SpaceMismatch("set-valued maps live on different spaces")


def gamma_iterate(G: FiniteSetMap, n: int) -> FiniteSetMap:
    """``n``-fold composition, ``G^n(x) = G(G^(n-1)(x))``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    result, base = None, G.matrix
    while n:
        if n & 1:
            result = base if result is None else _bool_matmul(result, base)
        n >>= 1
        if n:
            base = _bool_matmul(base, base)
    return FiniteSetMap(G.space, result)


def gamma_union(family: Sequence[FiniteSetMap]) -> FiniteSetMap:
    if not family:
        raise ValueError("empty family")
    _same_space(*family)
    m = family[0].matrix.copy()
    for G in family[1:]:
        m |= G.matrix
    return FiniteSetMap(family[0].space, m)


def orbital_S(G: FiniteSetMap) -> FiniteSetMap:
    """Cells reachable in one or more steps."""
    r = G.matrix.copy()
    while True:
        nxt = r | _bool_matmul(r, r)
        if np.array_equal(nxt, r):
            return FiniteSetMap(G.space, r)
        r = nxt


def _or_over(packed: np.ndarray, nbrs: sparse.csr_matrix, n_rows: int) -> np.ndarray:
    """Row ``i`` of the result ORs the rows of ``packed`` listed in row ``i`` of ``nbrs``."""
    out = np.empty((n_rows, packed.shape[1]), dtype=np.uint8)
    indptr, indices = nbrs.indptr, nbrs.indices
    for s in range(0, n_rows, _CHUNK):
        e = min(s + _CHUNK, n_rows)
        lo, hi = indptr[s], indptr[e]
        gathered = packed[indices[lo:hi]]
        # every row is nonempty since the order is reflexive
        out[s:e] = np.bitwise_or.reduceat(gathered, indptr[s:e] - lo, axis=0)
    return out


def closure_D(G: FiniteSetMap) -> FiniteSetMap:
    """``(D G)(x) = closure(G(u(x)))``, with ``u(x)`` the minimal open neighbourhood.

    Both steps OR rows over up-sets: the open star gathers rows of ``G``,
    and the closure of column ``w`` gathers columns of the star over
    ``u(w)``, which is the same pattern on the transpose.
    """
    space = G.space
    n = len(space)
    if n == 0:
        return G
    up = space.above_matrix
    star = np.unpackbits(_or_over(np.packbits(G.matrix, axis=1), up, n), axis=1, count=n)
    closed_t = _or_over(np.packbits(np.ascontiguousarray(star.T), axis=1), up, n)
    out = np.ascontiguousarray(np.unpackbits(closed_t, axis=1, count=n).T)
    return FiniteSetMap(space, out.view(bool))


# -- cubical spaces --------------------------------------------------------------

def make_cubical_space(grid: Grid, B: BoxSet) -> FiniteSpace:
    """Cubes of ``B`` with all their faces, ordered by face incidence.

    Cells are named ``(dimension, sorted vertex index tuples)`` and listed
    in sorted name order.
    """
    if not B:
        raise ValueError("B must be nonempty")
    return _space_from_coords(_cubical_coords(grid, B))


def _cubical_coords(grid: Grid, B: BoxSet) -> np.ndarray:
    # every face of a box sits at its doubled centre plus an offset in {-1, 0, 1}^d
    d = grid.dim
    doubled = 2 * grid.unravel(B.flat) + 1
    deltas = np.array(list(product((-1, 0, 1), repeat=d)), dtype=np.int64)
    return np.unique((doubled[:, None, :] + deltas[None, :, :]).reshape(-1, d), axis=0)


def _space_from_coords(coords: np.ndarray) -> FiniteSpace:
    keys = [tuple(int(v) for v in c) for c in coords]
    names = {k: _cube_name(k) for k in keys}
    below = {}
    for k in keys:
        axes = [(-1, 0, 1) if v % 2 else (0,) for v in k]
        below[names[k]] = [names[tuple(a + b for a, b in zip(k, off))] for off in product(*axes)]
    cells = sorted(names.values())
    return FiniteSpace(cells, below, validate=False)


def _cube_name(doubled: tuple) -> tuple:
    per_axis = [((v - 1) // 2, (v + 1) // 2) if v % 2 else (v // 2,) for v in doubled]
    dim = sum(1 for v in doubled if v % 2)
    return dim, tuple(sorted(product(*per_axis)))


# -- random generators ---------------------------------------------------------------

def random_set_map(space: FiniteSpace, p: float, rng: np.random.Generator) -> FiniteSetMap:
    """Each ordered pair of cells is an edge independently with probability ``p``."""
    n = len(space)
    m = np.empty((n, n), dtype=bool)
    for s in range(0, n, _CHUNK):
        m[s:s + _CHUNK] = rng.random((min(_CHUNK, n - s), n), dtype=np.float32) < p
    return FiniteSetMap(space, m)


def random_cubical_space(rng: np.random.Generator, max_cells: int = 10_000,
                         dims: Sequence[int] = (1, 2, 3), max_side: Optional[int] = None) -> FiniteSpace:
    """Cubical space of a random box set with at most ``max_cells`` cells."""
    dims = [d for d in dims if 3 ** d <= max_cells]
    if not dims:
        raise ValueError("max_cells is too small for a single cube of any allowed dimension")
    caps = {1: 40, 2: 14, 3: 8}
    while True:
        d = int(rng.choice(dims))
        cap = max_side or caps.get(d, 4)
        side = tuple(int(v) for v in rng.integers(1, cap + 1, size=d))
        grid = Grid((0.0,) * d, tuple(float(s) for s in side), side)
        keep = rng.random(grid.n_boxes) < rng.uniform(0.2, 1.0)
        if not keep.any():
            keep[rng.integers(grid.n_boxes)] = True
        coords = _cubical_coords(grid, BoxSet.from_flat(grid, np.flatnonzero(keep), assume_sorted=True))
        if len(coords) <= max_cells:
            return _space_from_coords(coords)
        if max_side is None:
            # shrink the draw range for this dimension until spaces fit
            caps[d] = max(1, caps[d] - 1)
