"""Reference computations written directly from the definitions.

Everything here works on plain Python sets and dicts so that it shares no
code path with the package's matrix, sparse or filter based routines.
"""

import itertools
import math


def edges_of(G):
    """FiniteSetMap -> {cell: set of cells}."""
    return {c: set(t) for c, t in G.edges.items()}


def below_of(space):
    return {c: set(space.below(c)) for c in space.cells}


def above_from_below(below):
    up = {c: set() for c in below}
    for c, fs in below.items():
        for f in fs:
            up[f].add(c)
    return up


def set_image(edges, A):
    out = set()
    for a in A:
        out |= edges[a]
    return out


def orbital_by_levels(edges, x, max_len):
    """Endpoints of all paths of 1..max_len steps from ``x``, one level at a time."""
    reached, level = set(), {x}
    for _ in range(max_len):
        level = set_image(edges, level)
        if level <= reached:
            break
        reached |= level
    return reached


def orbital_by_paths(edges, x, max_len):
    """Endpoints via explicit enumeration of simple-prefix paths (depth-first)."""
    found = set()
    stack = [(x, 0)]
    seen = set()
    while stack:
        node, depth = stack.pop()
        if depth == max_len:
            continue
        for y in edges[node]:
            found.add(y)
            key = (y, depth + 1)
            if key not in seen:
                seen.add(key)
                stack.append(key)
    return found


def closure_D_oracle(below, edges):
    """(D G)(x) = closure of G(u(x)) with u(x) the cells above x."""
    up = above_from_below(below)
    out = {}
    for x in below:
        img = set_image(edges, up[x])
        out[x] = set_image(below, img)
    return out


def cube_face_count(dim):
    return 3 ** dim


# -- box maps as dicts -----------------------------------------------------------

def box_edges(F):
    """BoxMap -> {flat source: set of flat targets} read row by row."""
    m = F.matrix.tocsr()
    return {i: set(int(j) for j in m.indices[m.indptr[i]:m.indptr[i + 1]]) for i in range(m.shape[0])}


def iterate_dict(edges, S, n):
    for _ in range(n):
        S = set_image(edges, S)
    return S


def moore(grid_shape, S, r):
    """Boxes within Chebyshev index distance ``r`` of ``S`` (flat indices)."""
    out = set()
    offs = list(itertools.product(range(-r, r + 1), repeat=len(grid_shape)))
    for f in S:
        idx = _unravel(f, grid_shape)
        for o in offs:
            j = tuple(a + b for a, b in zip(idx, o))
            if all(0 <= v < n for v, n in zip(j, grid_shape)):
                out.add(_ravel(j, grid_shape))
    return out


def _unravel(f, shape):
    idx = []
    for n in reversed(shape):
        idx.append(f % n)
        f //= n
    return tuple(reversed(idx))


def _ravel(idx, shape):
    f = 0
    for v, n in zip(idx, shape):
        f = f * n + v
    return f


def hop_relation(edges, grid_shape, lo, hi, r):
    """One chain hop per the definition: flow n in [lo, hi] map steps, then jump <= r rings."""
    rel = {}
    for x in edges:
        arrivals = set()
        S = {x}
        for n in range(1, hi + 1):
            S = set_image(edges, S)
            if n >= lo:
                arrivals |= S
        rel[x] = moore(grid_shape, arrivals, r)
    return rel


def chains_from(rel, M, max_len):
    """Endpoints of all chains of 1..max_len hops starting in ``M``."""
    reached, level = set(), set(M)
    for _ in range(max_len):
        level = set_image(rel, level)
        reached |= level
    return reached


def forward_tail(edges, P, a, horizon):
    """Union of F^n(P) over n in [a, a + horizon]."""
    out, S = set(), set(P)
    for n in range(1, a + horizon + 1):
        S = set_image(edges, S)
        if n >= a:
            out |= S
    return out


def limsup(edges, B, horizon):
    """Boxes visited infinitely often, read off a long image sequence."""
    seq = [set(B)]
    for _ in range(horizon):
        seq.append(set_image(edges, seq[-1]))
    tail = seq[horizon // 2:]
    return set.union(*tail) if tail else set()


def sink_interval_image(a, b, t):
    """Exact time-t image of [a, b] under x' = -x."""
    k = math.exp(-t)
    return min(a * k, b * k), max(a * k, b * k)
