"""Chain graphs, chain prolongations and attracting sets on a box grid.

One chain hop from a box set ``X`` flows for ``n`` steps of the time-``tau``
box map, with ``n`` ranging over the hop window ``[ceil(t/tau),
floor(hop_window/tau)]``, and then jumps by ``floor(eps / cellwidth)``
rings. Hops are therefore compositions of one fixed box map, which makes
the stage-to-stage inclusions exact: a hop of a later stage (smaller jump,
longer flow) splits into hops of any earlier stage separated by zero jumps.
The default hop window ``[t, 2t]`` guarantees that every flow time ``>= t``
splits this way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .boxcover import BoxMap, BoxSet, Grid, PadLike, cached_box_map, map_image, ring
from .errors import ConfigError
from .flow import FlowSpec
from .limits import forward_closure, omega_set

_ROUND_TOL = 1e-9


@dataclass(frozen=True)
class ChainParams:
    epsilon: float
    t_min: float
    hop_window: Optional[float] = None

    def __post_init__(self):
        if not self.epsilon > 0 or not self.t_min > 0:
            raise ConfigError("epsilon and t_min must be positive")
        if self.hop_window is None:
            object.__setattr__(self, "hop_window", 2.0 * self.t_min)
        if self.hop_window < self.t_min:
            raise ConfigError("hop_window must be >= t_min")


@dataclass(frozen=True)
class Schedule:
    """Refinement sequence; epsilon strictly decreasing, t_min strictly increasing."""

    stages: tuple[ChainParams, ...]

    def __post_init__(self):
        stages = tuple(self.stages)
        object.__setattr__(self, "stages", stages)
        if len(stages) < 2:
            raise ConfigError("a schedule needs at least 2 stages")
        for a, b in zip(stages, stages[1:]):
            if not b.epsilon < a.epsilon:
                raise ConfigError("schedule epsilon must be strictly decreasing")
            if not b.t_min > a.t_min:
                raise ConfigError("schedule t_min must be strictly increasing")

    @classmethod
    def geometric(cls, eps0: float, t0: float, n_stages: int = 5) -> "Schedule":
        """Stages ``(eps0 / 2**k, t0 * 2**k)`` for ``k = 0 .. n_stages - 1``."""
        return cls(tuple(ChainParams(eps0 / 2 ** k, t0 * 2 ** k) for k in range(n_stages)))

    @classmethod
    def default(cls, grid: Grid, tau: float, n_stages: int = 5) -> "Schedule":
        return cls.geometric(8 * grid.cellwidth, tau, n_stages)

    def __len__(self):
        return len(self.stages)

    def __iter__(self):
        return iter(self.stages)


def hop_steps(params: ChainParams, tau: float) -> tuple[int, int]:
    """Map-step range ``[lo, hi]`` of one hop; raises ConfigError when unusable."""
    if not tau > 0:
        raise ConfigError("tau must be positive")
    lo = math.ceil(params.t_min / tau - _ROUND_TOL)
    hi = math.floor(params.hop_window / tau + _ROUND_TOL)
    if lo < 1:
        raise ConfigError("t_min must be at least one map step")
    if hi < 2 * lo - 1:
        raise ConfigError(
            f"hop window [{lo}, {hi}] steps cannot express every flow time >= t_min; "
            "widen hop_window or shorten tau"
        )
    return lo, hi


@dataclass(frozen=True, eq=False)
class ChainGraph:
    """One-hop chain relation, kept implicit as a set operator."""

    box_map: BoxMap
    params: ChainParams
    min_steps: int
    max_steps: int
    radius: int

    @classmethod
    def from_box_map(cls, F: BoxMap, params: ChainParams) -> "ChainGraph":
        lo, hi = hop_steps(params, F.tau)
        radius = math.floor(params.epsilon / F.grid.cellwidth + _ROUND_TOL)
        return cls(F, params, lo, hi, radius)

    @property
    def grid(self) -> Grid:
        return self.box_map.grid

    @property
    def time_samples(self) -> int:
        return self.max_steps - self.min_steps + 1

    def window_image(self, X: BoxSet) -> BoxSet:
        """Union of ``F^n(X)`` over the hop window, without the jump."""
        out = np.zeros(self.grid.n_boxes, dtype=bool)
        S = X
        for n in range(1, self.max_steps + 1):
            S = map_image(self.box_map, S)
            if n >= self.min_steps:
                out[S.flat] = True
            if not S:
                break
        return BoxSet.from_mask(self.grid, out)

    def successors(self, X: BoxSet) -> BoxSet:
        return ring(self.grid, self.window_image(X), self.radius)

    def edges(self) -> dict[tuple[int, ...], BoxSet]:
        """Materialized edge table; intended for small grids."""
        g = self.grid
        return {b: self.successors(BoxSet.from_flat(g, [f], assume_sorted=True))
                for f, b in zip(range(g.n_boxes), BoxSet.full(g))}


def chain_graph(flow: FlowSpec, grid: Grid, params: ChainParams, tau: float,
                samples_per_axis: int = 2, pad: PadLike = None) -> ChainGraph:
    F = cached_box_map(flow, grid, tau, samples_per_axis, pad)
    return ChainGraph.from_box_map(F, params)


def p_set(G: ChainGraph, M: BoxSet) -> BoxSet:
    """Boxes reachable from ``M`` by one or more hops."""
    reach = np.zeros(G.grid.n_boxes, dtype=bool)
    frontier = G.successors(M)
    reach[frontier.flat] = True
    while frontier:
        img = G.successors(frontier)
        new = img.flat[~reach[img.flat]]
        reach[new] = True
        frontier = BoxSet.from_flat(G.grid, new, assume_sorted=True)
    return BoxSet.from_mask(G.grid, reach)


@dataclass(frozen=True)
class OmegaChainResult:
    omega: BoxSet
    stages: list
    graphs: list = field(repr=False)


def omega_chain_graphs(graphs: Sequence[ChainGraph], M: BoxSet) -> OmegaChainResult:
    if not M:
        raise ValueError("M must be nonempty")
    stages = [p_set(G, M) for G in graphs]
    omega = stages[0]
    for P in stages[1:]:
        omega = omega & P
    return OmegaChainResult(omega, stages, list(graphs))


def stage_graphs(flow: FlowSpec, grid: Grid, sched: Schedule, tau: float,
                 samples_per_axis: int = 2, pad: PadLike = None) -> list[ChainGraph]:
    return [chain_graph(flow, grid, p, tau, samples_per_axis, pad) for p in sched]


def omega_chain(flow: FlowSpec, grid: Grid, M: BoxSet, sched: Schedule, tau: float,
                samples_per_axis: int = 2, pad: PadLike = None) -> OmegaChainResult:
    """Intersection of the chain prolongations of ``M`` over the schedule."""
    return omega_chain_graphs(stage_graphs(flow, grid, sched, tau, samples_per_axis, pad), M)


def a_set(G: ChainGraph, P: BoxSet) -> BoxSet:
    """Forward closure of the hop-window image of ``P``.

    Equals the union of ``F^n(P)`` over all ``n >= G.min_steps``.
    """
    return forward_closure(G.box_map, G.window_image(P))


@dataclass(frozen=True)
class AttractingReport:
    a_set: BoxSet
    positively_invariant: bool
    witness_neighborhood: BoxSet
    omega_of_witness: BoxSet
    escapes: int = 0

    @property
    def attracting(self) -> bool:
        return self.positively_invariant and self.omega_of_witness <= self.a_set

    def to_dict(self) -> dict:
        return {
            "size": len(self.a_set),
            "positively_invariant": self.positively_invariant,
            "witness_size": len(self.witness_neighborhood),
            "omega_of_witness_size": len(self.omega_of_witness),
            "attracting": self.attracting,
            "escapes": self.escapes,
        }


def verify_attracting(F: BoxMap, A: BoxSet, witness_radius: int = 1) -> AttractingReport:
    """Positive invariance plus ``omega(ring(A)) <= A``."""
    if not A:
        raise ValueError("A must be nonempty")
    invariant = map_image(F, A) <= A
    U = ring(F.grid, A, witness_radius)
    res = omega_set(F, U)
    return AttractingReport(A, invariant, U, res.omega, res.escapes)


@dataclass(frozen=True)
class QuasiAttractingReport:
    p_stages: list
    a_stages: list
    attracting: list
    p_intersection: BoxSet
    a_intersection: BoxSet
    omega: BoxSet
    slack: int
    # diagnostic only: F(intersection) == intersection
    intersection_invariant: bool = False

    @property
    def easy_inclusion(self) -> bool:
        return self.a_intersection <= self.p_intersection

    @property
    def equality_exact(self) -> bool:
        return self.p_intersection == self.a_intersection

    @property
    def equality_within_slack(self) -> bool:
        return self.easy_inclusion and self.p_intersection <= ring(self.omega.grid, self.a_intersection, 1)

    @property
    def omega_contained(self) -> bool:
        return self.omega <= ring(self.omega.grid, self.a_intersection, self.slack)

    @property
    def all_attracting(self) -> bool:
        return all(r.attracting for r in self.attracting)

    @property
    def passed(self) -> bool:
        return self.all_attracting and self.easy_inclusion and self.omega_contained

    def to_dict(self) -> dict:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "slack": self.slack,
            "stages": [
                {"P_size": len(P), "A_size": len(A), **rep.to_dict()}
                for P, A, rep in zip(self.p_stages, self.a_stages, self.attracting)
            ],
            "p_intersection_size": len(self.p_intersection),
            "a_intersection_size": len(self.a_intersection),
            "omega_size": len(self.omega),
            "easy_inclusion": self.easy_inclusion,
            "equality_exact": self.equality_exact,
            "equality_within_ring1": self.equality_within_slack,
            "omega_contained": self.omega_contained,
            "all_attracting": self.all_attracting,
            "intersection_invariant": self.intersection_invariant,
        }


def verify_quasi_attracting_graphs(graphs: Sequence[ChainGraph], M: BoxSet,
                                   slack: int = 1) -> QuasiAttractingReport:
    res = omega_chain_graphs(graphs, M)
    a_stages = [a_set(G, P) for G, P in zip(graphs, res.stages)]
    reports = [verify_attracting(G.box_map, A) if A else None for G, A in zip(graphs, a_stages)]
    if any(r is None for r in reports):
        raise ValueError("an attracting-set stage came out empty")
    a_int = a_stages[0]
    for A in a_stages[1:]:
        a_int = a_int & A
    invariant = map_image(graphs[-1].box_map, a_int) == a_int
    return QuasiAttractingReport(res.stages, a_stages, reports, res.omega, a_int, res.omega, slack, invariant)


def verify_quasi_attracting(flow: FlowSpec, grid: Grid, M: BoxSet, sched: Schedule, tau: float,
                            slack: int = 1, samples_per_axis: int = 2,
                            pad: PadLike = None) -> QuasiAttractingReport:
    graphs = stage_graphs(flow, grid, sched, tau, samples_per_axis, pad)
    return verify_quasi_attracting_graphs(graphs, M, slack)


def chain_transitivity_check(G: ChainGraph, sources: Optional[BoxSet] = None) -> bool:
    """Reachability composed with itself stays inside reachability."""
    sources = BoxSet.full(G.grid) if sources is None else sources
    for f in sources.flat:
        R = p_set(G, BoxSet.from_flat(G.grid, [f], assume_sorted=True))
        if R and not p_set(G, R) <= R:
            return False
    return True
