"""Uniform box grids, box sets, and sampled outer approximations of flow maps.

Boxes are closed cubes, so a point on a shared face belongs to every box
incident to it. A :class:`BoxSet` stores its members as sorted flat
(row-major) indices; row-major order coincides with lexicographic order of
the index tuples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage, sparse

from .errors import Escaped
from .flow import FlowSpec, advance_points

ESCAPE_POLICIES = ("clip", "drop", "error")

PadLike = Union[None, float, Sequence[float]]


@dataclass(frozen=True)
class Grid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    subdivisions: tuple[int, ...]
    escape_policy: str = "clip"

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        subs = tuple(int(v) for v in np.atleast_1d(self.subdivisions))
        if not (len(lower) == len(upper) == len(subs)) or not lower:
            raise ValueError("lower, upper and subdivisions must have the same positive length")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError("lower must be strictly below upper in every coordinate")
        if any(n < 1 for n in subs):
            raise ValueError("subdivisions must be positive")
        if self.escape_policy not in ESCAPE_POLICIES:
            raise ValueError(f"escape_policy must be one of {ESCAPE_POLICIES}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "subdivisions", subs)

    @classmethod
    def parse(cls, text: str, escape_policy: str = "clip") -> "Grid":
        """Parse ``"x0,x1,y0,y1:nx,ny"``."""
        try:
            bounds, subs = text.split(":")
            b = [float(v) for v in bounds.split(",")]
            n = [int(v) for v in subs.split(",")]
        except ValueError as exc:
            raise ValueError(f"malformed grid spec {text!r}") from exc
        if len(b) != 2 * len(n):
            raise ValueError(f"grid spec {text!r} needs two bounds per axis")
        return cls(tuple(b[0::2]), tuple(b[1::2]), tuple(n), escape_policy)

    def spec(self) -> str:
        bounds = ",".join(f"{lo!r},{hi!r}" for lo, hi in zip(self.lower, self.upper))
        return bounds + ":" + ",".join(str(n) for n in self.subdivisions)

    @property
    def dim(self) -> int:
        return len(self.subdivisions)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.subdivisions

    @property
    def n_boxes(self) -> int:
        return math.prod(self.subdivisions)

    @property
    def widths(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.subdivisions)

    @property
    def cellwidth(self) -> float:
        """Smallest box width; the unit for jump radii."""
        return float(self.widths.min())

    def ravel(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, self.dim)
        return np.ravel_multi_index(tuple(idx.T), self.shape).astype(np.int64)

    def unravel(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat, dtype=np.int64), self.shape), axis=-1)

    def box_bounds(self, index) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(index, dtype=float)
        lower, upper = np.array(self.lower), np.array(self.upper)
        lo = lower + idx * self.widths
        hi = np.where(idx + 1 == np.array(self.shape), upper, lower + (idx + 1) * self.widths)
        return lo, hi

    def centers(self, flat=None) -> np.ndarray:
        flat = np.arange(self.n_boxes) if flat is None else np.asarray(flat)
        return np.array(self.lower) + (self.unravel(flat) + 0.5) * self.widths

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        with np.errstate(invalid="ignore"):
            return np.all((pts >= np.array(self.lower)) & (pts <= np.array(self.upper)), axis=1)


class BoxSet:
    """An immutable set of boxes of one grid."""

    __slots__ = ("grid", "flat")

    def __init__(self, grid: Grid, members: Iterable = ()):
        members = list(members)
        flat = grid.ravel(members) if members else np.empty(0, dtype=np.int64)
        if members:
            idx = np.asarray(members).reshape(-1, grid.dim)
            if np.any(idx < 0) or np.any(idx >= np.array(grid.shape)):
                raise ValueError("box index outside the grid")
        self._init(grid, np.unique(flat))

    def _init(self, grid, flat):
        object.__setattr__(self, "grid", grid)
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)

    def __setattr__(self, name, value):
        raise AttributeError("BoxSet is immutable")

    @classmethod
    def from_flat(cls, grid: Grid, flat, *, assume_sorted: bool = False) -> "BoxSet":
        arr = np.asarray(flat, dtype=np.int64)
        if not assume_sorted:
            arr = np.unique(arr)
            if arr.size and (arr[0] < 0 or arr[-1] >= grid.n_boxes):
                raise ValueError("flat index outside the grid")
        obj = cls.__new__(cls)
        obj._init(grid, np.array(arr, dtype=np.int64))
        return obj

    @classmethod
    def from_mask(cls, grid: Grid, mask: np.ndarray) -> "BoxSet":
        return cls.from_flat(grid, np.flatnonzero(np.asarray(mask).reshape(-1)), assume_sorted=True)

    @classmethod
    def empty(cls, grid: Grid) -> "BoxSet":
        return cls.from_flat(grid, [], assume_sorted=True)

    @classmethod
    def full(cls, grid: Grid) -> "BoxSet":
        return cls.from_flat(grid, np.arange(grid.n_boxes), assume_sorted=True)

    @property
    def members(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in row) for row in self.grid.unravel(self.flat)]

    def mask(self) -> np.ndarray:
        m = np.zeros(self.grid.n_boxes, dtype=bool)
        m[self.flat] = True
        return m.reshape(self.grid.shape)

    def __len__(self):
        return int(self.flat.size)

    def __bool__(self):
        return self.flat.size > 0

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, index):
        f = self.grid.ravel([index])[0]
        i = np.searchsorted(self.flat, f)
        return bool(i < self.flat.size and self.flat[i] == f)

    def __repr__(self):
        return f"BoxSet({len(self)} boxes on {self.grid.spec()})"

    def _check(self, other: "BoxSet"):
        if not isinstance(other, BoxSet):
            raise TypeError("expected a BoxSet")
        if other.grid != self.grid:
            raise ValueError("box sets live on different grids")

    def __eq__(self, other):
        if not isinstance(other, BoxSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.flat, other.flat)

    def __hash__(self):
        return hash((self.grid, self.flat.tobytes()))

    def __or__(self, other):
        self._check(other)
        return BoxSet.from_flat(self.grid, np.union1d(self.flat, other.flat), assume_sorted=True)

    def __and__(self, other):
        self._check(other)
        return BoxSet.from_flat(
            self.grid, np.intersect1d(self.flat, other.flat, assume_unique=True), assume_sorted=True
        )

    def __sub__(self, other):
        self._check(other)
        return BoxSet.from_flat(
            self.grid, np.setdiff1d(self.flat, other.flat, assume_unique=True), assume_sorted=True
        )

    def __le__(self, other):
        self._check(other)
        return bool(np.all(np.isin(self.flat, other.flat, assume_unique=True)))

    def __ge__(self, other):
        return other <= self

    issubset = __le__
    issuperset = __ge__

    # -- serialization --------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"grid {self.grid.spec()} {self.grid.escape_policy}"]
        lines.extend(" ".join(str(v) for v in m) for m in self.members)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BoxSet":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("grid "):
            raise ValueError("box set text must start with a grid descriptor line")
        parts = lines[0].split()
        grid = Grid.parse(parts[1], parts[2] if len(parts) > 2 else "clip")
        return cls(grid, [tuple(int(v) for v in ln.split()) for ln in lines[1:]])

    def to_json(self) -> str:
        return json.dumps(
            {
                "grid": {
                    "lower": list(self.grid.lower),
                    "upper": list(self.grid.upper),
                    "subdivisions": list(self.grid.subdivisions),
                    "escape_policy": self.grid.escape_policy,
                },
                "boxes": [list(m) for m in self.members],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "BoxSet":
        data = json.loads(text)
        g = data["grid"]
        grid = Grid(tuple(g["lower"]), tuple(g["upper"]), tuple(g["subdivisions"]), g.get("escape_policy", "clip"))
        return cls(grid, [tuple(b) for b in data["boxes"]])

    def to_ppm(self) -> bytes:
        """Binary P6 bitmap, one pixel per box; members black on white.

        Columns follow the first axis, rows the second with the top row at
        the largest coordinate.
        """
        if self.grid.dim != 2:
            raise ValueError("PPM export needs a 2-D grid")
        nx, ny = self.grid.shape
        img = np.full((ny, nx, 3), 255, dtype=np.uint8)
        m = self.mask()  # axes (x, y)
        img[m.T[::-1]] = 0
        return f"P6\n{nx} {ny}\n255\n".encode("ascii") + img.tobytes()


# -- covering -------------------------------------------------------------------

def _pad_vector(grid: Grid, pad: PadLike) -> np.ndarray:
    if pad is None:
        return grid.widths.copy()
    p = np.broadcast_to(np.asarray(pad, dtype=float), (grid.dim,)).copy()
    if np.any(p < 0):
        raise ValueError("pad must be nonnegative")
    return p


def default_pad(flow: FlowSpec, grid: Grid, tau: float) -> np.ndarray:
    """One cell width, plus a Lipschitz expansion term when the flow has a hint."""
    pad = grid.widths.copy()
    if flow.lipschitz_hint is not None:
        diam = float(np.linalg.norm(grid.widths))
        pad += math.expm1(flow.lipschitz_hint * abs(tau)) * diam / 2.0
    return pad


def _prepare(grid: Grid, pts: np.ndarray):
    """Apply the escape policy; return (points, keep mask, escaped mask)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, grid.dim)
    finite = np.all(np.isfinite(pts), axis=1)
    inside = grid.contains(pts) & finite
    escaped = ~inside
    if grid.escape_policy == "error" and escaped.any():
        raise Escaped(pts[np.argmax(escaped)])
    if grid.escape_policy == "clip":
        keep = finite
        pts = np.where(finite[:, None], np.clip(pts, grid.lower, grid.upper), 0.0)
    else:
        keep = inside
    return pts, keep, escaped


def _index_ranges(grid: Grid, pts: np.ndarray, pad: np.ndarray):
    """Closed-cube index range covering each sup-norm ball ``[p - pad, p + pad]``."""
    lower = np.array(grid.lower)
    w = grid.widths
    n = np.array(grid.shape)
    lo = np.ceil((pts - pad - lower) / w).astype(np.int64) - 1
    hi = np.floor((pts + pad - lower) / w).astype(np.int64)
    return np.clip(lo, 0, n - 1), np.clip(hi, 0, n - 1)


def _rect_targets(grid: Grid, lo: np.ndarray, hi: np.ndarray):
    """Enumerate (row, flat box) pairs for the index rectangles ``lo..hi``."""
    if lo.shape[0] == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    cnt = hi - lo + 1
    kmax = cnt.max(axis=0)
    rows, cols = [], []
    for off in np.ndindex(*kmax):
        off = np.array(off)
        ok = np.all(off < cnt, axis=1)
        r = np.flatnonzero(ok)
        rows.append(r)
        cols.append(grid.ravel(lo[r] + off))
    return np.concatenate(rows), np.concatenate(cols)


def cover_points(grid: Grid, pts, pad: PadLike = 0.0, *, return_escapes: bool = False):
    """Smallest box set whose closed cubes contain every (padded) point."""
    arr = np.asarray(pts, dtype=float)
    if arr.size == 0:
        out = BoxSet.empty(grid)
        return (out, 0) if return_escapes else out
    arr = arr.reshape(-1, grid.dim)
    p, keep, escaped = _prepare(grid, arr)
    lo, hi = _index_ranges(grid, p[keep], _pad_vector(grid, pad))
    _, cols = _rect_targets(grid, lo, hi)
    out = BoxSet.from_flat(grid, cols)
    return (out, int(escaped.sum())) if return_escapes else out


def sample_points(grid: Grid, flat: np.ndarray, samples_per_axis: int):
    """Sample lattice of the given boxes.

    Returns ``(points, incidence)`` where ``points`` are unique lattice points
    and ``incidence`` maps each box (row, in the order of ``flat``) to its
    ``samples_per_axis ** dim`` sample rows. Neighbouring boxes share the
    lattice points on their common faces.
    """
    if samples_per_axis < 2:
        raise ValueError("samples_per_axis must be >= 2")
    s = samples_per_axis - 1
    d = grid.dim
    idx = grid.unravel(flat)
    offs = np.array(list(np.ndindex(*(samples_per_axis,) * d)), dtype=np.int64)
    lattice = idx[:, None, :] * s + offs[None, :, :]  # (n_boxes, s^d, d)
    lat_shape = tuple(n * s + 1 for n in grid.shape)
    lat_flat = np.ravel_multi_index(tuple(lattice.reshape(-1, d).T), lat_shape)
    uniq, inverse = np.unique(lat_flat, return_inverse=True)
    coords = np.stack(np.unravel_index(uniq, lat_shape), axis=-1)
    points = np.array(grid.lower) + coords * (grid.widths / s)
    k = offs.shape[0]
    incidence = sparse.csr_matrix(
        (np.ones(inverse.size, dtype=np.int32), (np.repeat(np.arange(len(flat)), k), inverse.reshape(-1))),
        shape=(len(flat), uniq.size),
    )
    return points, incidence


@dataclass(frozen=True, eq=False)
class BoxMap:
    """Combinatorial set-valued map on the boxes of a grid.

    ``matrix[i, j]`` is true when box ``j`` is in the image of box ``i``;
    ``escaped[i]`` flags sources with at least one escaping sample.
    """

    grid: Grid
    tau: float
    matrix: sparse.csr_matrix
    escaped: np.ndarray = field(repr=False)
    samples_per_axis: int = 2
    pad: Optional[tuple[float, ...]] = None

    @classmethod
    def from_edges(cls, grid: Grid, edges: dict, tau: float = 1.0) -> "BoxMap":
        """Hand-built map; ``edges`` maps source index tuples to target index lists."""
        rows, cols = [], []
        for src, tgts in edges.items():
            s = int(grid.ravel([src])[0])
            for t in tgts:
                rows.append(s)
                cols.append(int(grid.ravel([t])[0]))
        return cls(grid, tau, _bool_csr(rows, cols, grid.n_boxes), np.zeros(grid.n_boxes, dtype=bool), 2, None)

    @property
    def escape_count(self) -> int:
        return int(self.escaped.sum())

    def targets(self, index) -> BoxSet:
        f = int(self.grid.ravel([index])[0])
        return BoxSet.from_flat(self.grid, self.matrix.indices[self.matrix.indptr[f]:self.matrix.indptr[f + 1]],
                                assume_sorted=True)

    def edges(self) -> dict[tuple[int, ...], BoxSet]:
        return {b: self.targets(b) for b in BoxSet.full(self.grid)}


def _bool_csr(rows, cols, n) -> sparse.csr_matrix:
    m = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(n, n),
    )
    m.sum_duplicates()
    m.data[:] = 1
    m.sort_indices()
    return m.astype(bool)


def _image_matrix(flow, grid, flat, tau, samples_per_axis, pad):
    points, inc = sample_points(grid, flat, samples_per_axis)
    images = advance_points(flow, points, tau)
    p, keep, escaped = _prepare(grid, images)
    rows_kept = np.flatnonzero(keep)
    lo, hi = _index_ranges(grid, p[keep], pad)
    r, c = _rect_targets(grid, lo, hi)
    target = sparse.csr_matrix((np.ones(r.size, dtype=np.int32), (rows_kept[r], c)),
                               shape=(points.shape[0], grid.n_boxes))
    prod = (inc @ target).tocsr()
    prod.sum_duplicates()
    prod.sort_indices()
    box_escaped = (inc @ escaped.astype(np.int32)) > 0
    return prod, box_escaped


def box_image(flow: FlowSpec, grid: Grid, b, tau: float, samples_per_axis: int = 2,
              pad: PadLike = None) -> BoxSet:
    """Outer approximation of the time-``tau`` image of box ``b``."""
    pad_v = default_pad(flow, grid, tau) if pad is None else _pad_vector(grid, pad)
    flat = grid.ravel([b])
    prod, _ = _image_matrix(flow, grid, flat, tau, samples_per_axis, pad_v)
    return BoxSet.from_flat(grid, prod.indices, assume_sorted=True)


def build_box_map(flow: FlowSpec, grid: Grid, tau: float, samples_per_axis: int = 2,
                  pad: PadLike = None) -> BoxMap:
    pad_v = default_pad(flow, grid, tau) if pad is None else _pad_vector(grid, pad)
    prod, esc = _image_matrix(flow, grid, np.arange(grid.n_boxes), tau, samples_per_axis, pad_v)
    matrix = prod.astype(bool)
    return BoxMap(grid, float(tau), matrix, esc, samples_per_axis, tuple(float(v) for v in pad_v))


_MAP_CACHE: dict = {}


def cached_box_map(flow: FlowSpec, grid: Grid, tau: float, samples_per_axis: int = 2,
                   pad: PadLike = None) -> BoxMap:
    """Memoized :func:`build_box_map`; flows are keyed by identity."""
    key = (id(flow), grid, float(tau), samples_per_axis, None if pad is None else tuple(np.atleast_1d(pad)))
    hit = _MAP_CACHE.get(key)
    if hit is None or hit[0] is not flow:
        hit = (flow, build_box_map(flow, grid, tau, samples_per_axis, pad))
        _MAP_CACHE[key] = hit
    return hit[1]


def map_image(F: BoxMap, B: BoxSet) -> BoxSet:
    """Union of the images of the members of ``B``."""
    if B.grid != F.grid:
        raise ValueError("box set and map live on different grids")
    if not B:
        return BoxSet.empty(F.grid)
    m = F.matrix
    starts, ends = m.indptr[B.flat], m.indptr[B.flat + 1]
    total = int((ends - starts).sum())
    if total == 0:
        return BoxSet.empty(F.grid)
    out = np.zeros(F.grid.n_boxes, dtype=bool)
    # Gather target indices of all selected rows without a Python loop.
    lens = ends - starts
    idx = np.repeat(starts - np.concatenate(([0], np.cumsum(lens)[:-1])), lens) + np.arange(total)
    out[m.indices[idx]] = True
    return BoxSet.from_flat(F.grid, np.flatnonzero(out), assume_sorted=True)


def ring(grid: Grid, B: BoxSet, k: int) -> BoxSet:
    """Dilate ``B`` ``k`` times by vertex (Moore) adjacency."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0 or not B:
        return B
    m = ndimage.maximum_filter(B.mask().astype(np.uint8), size=2 * k + 1, mode="constant", cval=0)
    return BoxSet.from_mask(grid, m.astype(bool))


def connected_components(grid: Grid, B: BoxSet) -> list[BoxSet]:
    """Vertex-adjacency components, ordered by their smallest member."""
    if not B:
        return []
    labels, n = ndimage.label(B.mask(), structure=np.ones((3,) * grid.dim, dtype=bool))
    flat_labels = labels.reshape(-1)[B.flat]
    comps = [BoxSet.from_flat(grid, B.flat[flat_labels == i], assume_sorted=True) for i in range(1, n + 1)]
    comps.sort(key=lambda c: int(c.flat[0]))
    return comps
