"""Limit sets of box sets under a combinatorial map.

The image sequence ``S_0 = B, S_{k+1} = F(S_k)`` of a finite map is
eventually periodic. The union over its terminal cycle equals the
combinatorial tail intersection ``\\bigcap_n \\bigcup_{m >= n} S_m``, which is
what this module reports as the limit set.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .boxcover import BoxMap, BoxSet, connected_components, cover_points, map_image, ring
from .errors import EmptyInput, EscapeDominated

MAX_ITERATIONS = 100_000


@dataclass(frozen=True)
class OmegaResult:
    omega: BoxSet
    transient_steps: int
    cycle_length: int
    components: list = field(default_factory=list)
    escapes: int = 0

    @property
    def connected(self) -> bool:
        """True when the limit set is exactly one component."""
        return len(self.components) == 1

    def to_dict(self, omega_ref: Optional[str] = None) -> dict:
        """JSON-ready summary; ``omega_ref`` replaces the member list with a file name."""
        return {
            "omega": omega_ref if omega_ref is not None else [list(m) for m in self.omega.members],
            "size": len(self.omega),
            "transient_steps": self.transient_steps,
            "cycle_length": self.cycle_length,
            "connected": self.connected,
            "components": [len(c) for c in self.components],
            "escapes": self.escapes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _digest(S: BoxSet) -> bytes:
    return hashlib.blake2b(S.flat.tobytes(), digest_size=16).digest()


def image_sequence(F: BoxMap, B: BoxSet, steps: int) -> list[BoxSet]:
    """``[B, F(B), ..., F^steps(B)]``."""
    seq = [B]
    for _ in range(steps):
        seq.append(map_image(F, seq[-1]))
    return seq


def omega_set(F: BoxMap, B: BoxSet, max_iterations: int = MAX_ITERATIONS) -> OmegaResult:
    if not B:
        raise EmptyInput("omega_set needs a nonempty box set")
    if bool(np.all(F.escaped[B.flat])) and F.escape_count:
        raise EscapeDominated("every member of the seed set has escaping images")

    seen: dict[bytes, list[int]] = {_digest(B): [0]}
    seq = [B]
    visited = np.zeros(F.grid.n_boxes, dtype=bool)
    visited[B.flat] = True
    S = B
    for k in range(1, max_iterations + 1):
        S = map_image(F, S)
        visited[S.flat] = True
        key = _digest(S)
        # digest collisions are settled by full comparison
        start = next((j for j in seen.get(key, ()) if seq[j] == S), None)
        if start is not None:
            omega = seq[start]
            for X in seq[start + 1:]:
                omega = omega | X
            escapes = int(np.count_nonzero(F.escaped & visited))
            return OmegaResult(omega, start, k - start, connected_components(F.grid, omega), escapes)
        seen.setdefault(key, []).append(k)
        seq.append(S)
    raise RuntimeError(f"image sequence did not become periodic within {max_iterations} steps")


def lambda_plus(F: BoxMap, x) -> BoxSet:
    return omega_set(F, cover_points(F.grid, [x])).omega


def j_plus(F: BoxMap, x, k: int = 1) -> BoxSet:
    """Limit set of the radius-``k`` ring around ``x``'s cover."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return omega_set(F, ring(F.grid, cover_points(F.grid, [x]), k)).omega


def forward_closure(F: BoxMap, B: BoxSet) -> BoxSet:
    """Smallest superset of ``B`` closed under ``F``."""
    reach = B.mask().reshape(-1).copy()
    frontier = B
    while frontier:
        img = map_image(F, frontier)
        new = img.flat[~reach[img.flat]]
        reach[new] = True
        frontier = BoxSet.from_flat(F.grid, new, assume_sorted=True)
    return BoxSet.from_mask(F.grid, reach)


def d_plus(F: BoxMap, x, k: int = 1) -> BoxSet:
    if k < 1:
        raise ValueError("k must be >= 1")
    return forward_closure(F, ring(F.grid, cover_points(F.grid, [x]), k))


@dataclass(frozen=True)
class ConnectivityReport:
    result: OmegaResult
    seed_connected: bool

    @property
    def hypothesis_violated(self) -> bool:
        return not self.seed_connected

    @property
    def component_count(self) -> int:
        return len(self.result.components)

    @property
    def passed(self) -> bool:
        r = self.result
        return self.seed_connected and bool(r.omega) and r.escapes == 0 and r.connected

    @property
    def verdict(self) -> str:
        if self.hypothesis_violated:
            return "HYPOTHESIS_VIOLATED"
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "seed_connected": self.seed_connected,
            "omega_size": len(self.result.omega),
            "component_count": self.component_count,
            "escapes": self.result.escapes,
            "transient_steps": self.result.transient_steps,
            "cycle_length": self.result.cycle_length,
        }


def check_connected_omega(F: BoxMap, B: BoxSet) -> ConnectivityReport:
    """Connected seed with a compact limit set must give a connected limit set."""
    seed_connected = len(connected_components(F.grid, B)) == 1
    return ConnectivityReport(omega_set(F, B), seed_connected)
