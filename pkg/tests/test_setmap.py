import numpy as np
import pytest

from omegaflow.boxcover import BoxSet, Grid
from omegaflow.errors import SpaceMismatch
from omegaflow.setmap import (FiniteSetMap, FiniteSpace, cell_label, closure, closure_D, gamma_iterate,
                              gamma_union, make_cubical_space, orbital_S, random_cubical_space,
                              random_set_map)

import oracles

DENSITIES = (0.02, 0.1, 0.5)


def line_space(n_boxes):
    g = Grid((0.0,), (float(n_boxes),), (n_boxes,))
    return make_cubical_space(g, BoxSet.full(g))


def abc_space():
    # discrete three-point space
    return FiniteSpace(["a", "b", "c"], {"a": ["a"], "b": ["b"], "c": ["c"]})


def random_maps(seed, count, max_cells):
    rng = np.random.default_rng(seed)
    for i in range(count):
        space = random_cubical_space(rng, max_cells=max_cells)
        yield random_set_map(space, DENSITIES[i % 3], rng)


# -- spaces ------------------------------------------------------------------------

def test_single_interval_space():
    s = line_space(1)
    assert len(s) == 3
    edge = (1, ((0,), (1,)))
    assert set(s.below(edge)) == {(0, ((0,),)), (0, ((1,),)), edge}


def test_two_intervals_share_vertex():
    s = line_space(2)
    assert len(s) == 5
    mid = (0, ((1,),))
    assert set(s.above(mid)) == {mid, (1, ((0,), (1,))), (1, ((1,), (2,)))}


def test_single_square_face_lattice():
    g = Grid((0.0, 0.0), (1.0, 1.0), (1, 1))
    s = make_cubical_space(g, BoxSet.full(g))
    dims = sorted(c[0] for c in s.cells)
    assert dims == [0, 0, 0, 0, 1, 1, 1, 1, 2]
    top = (2, ((0, 0), (0, 1), (1, 0), (1, 1)))
    assert len(s.below(top)) == 9
    assert list(s.cells) == sorted(s.cells)


def test_cube_counts_match_face_formula():
    for d in (1, 2, 3):
        g = Grid((0.0,) * d, (1.0,) * d, (1,) * d)
        assert len(make_cubical_space(g, BoxSet.full(g))) == oracles.cube_face_count(d)
    g = Grid((0.0,) * 3, (3.0,) * 3, (3,) * 3)
    assert len(make_cubical_space(g, BoxSet.full(g))) == 7 ** 3


def test_cubical_order_is_face_incidence():
    g = Grid((0.0, 0.0), (3.0, 3.0), (3, 3))
    s = make_cubical_space(g, BoxSet(g, [(0, 0), (1, 1), (2, 0)]))
    for c in s.cells:
        verts = set(c[1])
        for f in s.cells:
            is_face = set(f[1]) <= verts
            assert (f in s.below(c)) == is_face
    s._validate()


def test_below_above_inverse():
    rng = np.random.default_rng(0)
    for _ in range(10):
        s = random_cubical_space(rng, max_cells=300)
        for c in s.cells:
            for f in s.below(c):
                assert c in s.above(f)


def test_space_rejects_non_preorder():
    with pytest.raises(ValueError):
        FiniteSpace(["a", "b"], {"a": ["a", "b"], "b": []})
    with pytest.raises(ValueError):
        FiniteSpace(["a", "b", "c"], {"a": ["a", "b"], "b": ["b", "c"], "c": ["c"]})


def test_from_relation_closes():
    s = FiniteSpace.from_relation(["a", "b", "c"], [("c", "b"), ("b", "a")])
    assert set(s.below("a")) == {"a", "b", "c"}
    assert set(s.above("c")) == {"a", "b", "c"}


def test_space_text_roundtrip():
    s = line_space(3)
    back = FiniteSpace.from_text(s.to_text())
    assert [cell_label(c) for c in s.cells] == list(back.cells)
    for c in s.cells:
        assert {cell_label(f) for f in s.below(c)} == set(back.below(cell_label(c)))


def test_space_equality_structural():
    assert line_space(2) == line_space(2)
    assert line_space(2) != line_space(3)


# -- closure -------------------------------------------------------------------------

def test_closure_examples():
    g = Grid((0.0, 0.0), (1.0, 1.0), (1, 1))
    s = make_cubical_space(g, BoxSet.full(g))
    assert closure(s, []) == frozenset()
    top = s.cells[-1]
    assert closure(s, [top]) == frozenset(s.cells)


def test_closure_idempotent_monotone_random():
    rng = np.random.default_rng(7)
    s = random_cubical_space(rng, max_cells=400)
    below = oracles.below_of(s)
    for _ in range(1000):
        A = {c for c in s.cells if rng.random() < 0.05}
        cl = closure(s, A)
        assert closure(s, cl) == cl
        assert A <= cl
        assert cl == oracles.set_image(below, A)
        extra = A | {s.cells[int(rng.integers(len(s)))]}
        assert cl <= closure(s, extra)


# -- iteration and unions --------------------------------------------------------------

def test_iterate_identity():
    s = line_space(3)
    I = FiniteSetMap.identity(s)
    assert gamma_iterate(I, 5) == I
    assert gamma_iterate(I, 1) == I


def test_iterate_path_exhaustion():
    s = abc_space()
    G = FiniteSetMap.from_edges(s, {"a": ["b"], "b": ["c"], "c": []})
    assert gamma_iterate(G, 2).image("a") == {"c"}
    assert gamma_iterate(G, 3).image("a") == frozenset()
    with pytest.raises(ValueError):
        gamma_iterate(G, 0)


def test_iterate_composition_law():
    for G in random_maps(21, 60, 30):
        edges = oracles.edges_of(G)
        for m, n in ((1, 1), (2, 3), (4, 1), (3, 5)):
            left = gamma_iterate(G, m + n)
            inner = gamma_iterate(G, n)
            for x in G.space.cells:
                assert left.image(x) == gamma_iterate(G, m)(inner.image(x))
                assert left.image(x) == oracles.iterate_dict(edges, {x}, m + n)


def test_union_examples_and_oracle():
    maps = list(random_maps(5, 9, 60))
    G = maps[0]
    assert gamma_union([G]) == G
    assert gamma_union([G, G]) == G
    rng = np.random.default_rng(2)
    family = [G] + [random_set_map(G.space, p, rng) for p in DENSITIES]
    U = gamma_union(family)
    for x in G.space.cells:
        assert U.image(x) == frozenset().union(*(F.image(x) for F in family))


def test_union_space_mismatch():
    a = FiniteSetMap.identity(line_space(2))
    b = FiniteSetMap.identity(line_space(3))
    with pytest.raises(SpaceMismatch):
        gamma_union([a, b])
    with pytest.raises(ValueError):
        gamma_union([])


def test_set_image_is_union_of_images():
    G = next(random_maps(8, 1, 80))
    rng = np.random.default_rng(1)
    A = [c for c in G.space.cells if rng.random() < 0.2]
    assert G(A) == frozenset().union(*(G.image(a) for a in A))


# -- S ------------------------------------------------------------------------------------

def test_S_self_loop():
    s = FiniteSpace(["a"], {"a": ["a"]})
    G = FiniteSetMap.from_edges(s, {"a": ["a"]})
    assert orbital_S(G).image("a") == {"a"}


def test_S_finite_chain():
    s = abc_space()
    G = FiniteSetMap.from_edges(s, {"a": ["b"], "b": ["c"], "c": []})
    S = orbital_S(G)
    assert S.image("a") == {"b", "c"}
    assert S.image("c") == frozenset()


def test_S_matches_path_oracle():
    for G in random_maps(13, 90, 40):
        edges = oracles.edges_of(G)
        S = orbital_S(G)
        n = len(G.space)
        for x in G.space.cells:
            assert S.image(x) == oracles.orbital_by_paths(edges, x, n)


def test_S_expansive_and_monotone():
    rng = np.random.default_rng(4)
    for G in random_maps(17, 60, 100):
        bigger = gamma_union([G, random_set_map(G.space, 0.02, rng)])
        S, S2 = orbital_S(G), orbital_S(bigger)
        assert G <= S
        assert S <= S2


# -- D ------------------------------------------------------------------------------------

def test_D_identity_on_single_cube():
    g = Grid((0.0, 0.0), (1.0, 1.0), (1, 1))
    s = make_cubical_space(g, BoxSet.full(g))
    D = closure_D(FiniteSetMap.identity(s))
    top = s.cells[-1]
    assert D.image(top) == frozenset(s.cells)
    # a vertex's open star is everything containing it; its closure is the whole square
    assert D.image(s.cells[0]) == frozenset(s.cells)


def test_D_of_empty_map_is_empty():
    s = line_space(4)
    Z = FiniteSetMap(s, np.zeros((len(s), len(s)), dtype=bool))
    assert closure_D(Z) == Z


def test_D_matches_set_oracle():
    for G in random_maps(29, 120, 150):
        ref = oracles.closure_D_oracle(oracles.below_of(G.space), oracles.edges_of(G))
        D = closure_D(G)
        for x in G.space.cells:
            assert D.image(x) == ref[x]


def test_D_expansive_and_monotone():
    rng = np.random.default_rng(6)
    for G in random_maps(31, 60, 500):
        bigger = gamma_union([G, random_set_map(G.space, 0.02, rng)])
        D, D2 = closure_D(G), closure_D(bigger)
        assert G <= D
        assert D <= D2


def test_D_on_discrete_space_is_identity_operator():
    s = abc_space()
    G = FiniteSetMap.from_edges(s, {"a": ["b"], "b": ["a", "c"]})
    assert closure_D(G) == G


def test_D_chunk_boundaries():
    # spaces larger than one processing chunk
    g = Grid((0.0, 0.0), (20.0, 20.0), (20, 20))
    s = make_cubical_space(g, BoxSet.full(g))
    assert len(s) > 1024
    G = random_set_map(s, 0.01, np.random.default_rng(0))
    ref = oracles.closure_D_oracle(oracles.below_of(s), oracles.edges_of(G))
    D = closure_D(G)
    for x in s.cells[::37]:
        assert D.image(x) == ref[x]


# -- serialization and generators ---------------------------------------------------------

def test_map_text_roundtrip():
    G = next(random_maps(3, 1, 60))
    text = G.to_text()
    assert FiniteSetMap.from_text(G.space, text) == G
    first = text.splitlines()[0]
    assert ": " in first
    assert first.split(":")[0] == cell_label(G.space.cells[0])


def test_map_text_plain_labels():
    s = abc_space()
    G = FiniteSetMap.from_edges(s, {"a": ["b", "c"]})
    assert G.to_text() == "a: b,c\nb: \nc: \n"


def test_generator_reproducible():
    a = list(random_maps(99, 5, 200))
    b = list(random_maps(99, 5, 200))
    assert all(x == y for x, y in zip(a, b))


def test_generator_density():
    s = line_space(40)
    for p in DENSITIES:
        G = random_set_map(s, p, np.random.default_rng(1))
        assert abs(G.matrix.mean() - p) < 0.03


def test_random_space_respects_cap():
    rng = np.random.default_rng(12)
    for cap in (10, 27, 100, 2000):
        assert all(len(random_cubical_space(rng, max_cells=cap)) <= cap for _ in range(20))
    with pytest.raises(ValueError):
        random_cubical_space(rng, max_cells=2)
