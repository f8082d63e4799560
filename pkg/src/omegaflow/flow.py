"""Continuous flows given by autonomous ODE right-hand sides.

Time-t maps are computed with a fixed-step classical Runge-Kutta scheme so
that every call is bit-for-bit reproducible. Negative times integrate the
reversed field.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteState, UnknownSystem

# Partial steps shorter than this fraction of the base step are rounding noise.
_REMAINDER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FlowSpec:
    """A vector field plus the integration parameters of its flow.

    ``rhs`` must be vectorized over leading axes: it maps an array of shape
    ``(..., dimension)`` to an array of the same shape.
    """

    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    lipschitz_hint: Optional[float] = None
    integrator_step: float = 0.01

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not self.integrator_step > 0:
            raise ValueError("integrator_step must be positive")
        if self.lipschitz_hint is not None and self.lipschitz_hint < 0:
            raise ValueError("lipschitz_hint must be nonnegative")


def as_point(flow: FlowSpec, x) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.shape != (flow.dimension,):
        raise ValueError(f"expected a point of dimension {flow.dimension}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite coordinates")
    return p


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance_points(flow: FlowSpec, X, t) -> np.ndarray:
    """Advance every row of ``X`` (shape ``(n, d)``) by time ``t``.

    ``t`` is a scalar or one time per row; each row follows exactly the step
    sequence it would get on its own. Non-finite rows are returned as they
    come out of the integrator; the caller decides whether that is an escape
    or an error.
    """
    X = np.array(X, dtype=float, copy=True)
    if np.ndim(t) == 0:
        return _advance_uniform(flow, X, float(t))
    t = np.asarray(t, dtype=float)
    if t.shape != (len(X),):
        raise ValueError(f"need one time per row, got shape {t.shape} for {len(X)} rows")
    if not np.all(np.isfinite(t)):
        raise ValueError("time must be finite")
    h = flow.integrator_step
    n_full = (np.abs(t) // h).astype(np.int64)
    rem = np.abs(t) - n_full * h
    sign = np.where(t >= 0, 1.0, -1.0)
    f = flow.rhs
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(int(n_full.max(initial=0))):
            rows = np.flatnonzero(n_full > k)
            X[rows] = _rk4_step(f, X[rows], (sign[rows] * h)[:, None])
        rows = np.flatnonzero(rem > _REMAINDER_TOL * h)
        if rows.size:
            X[rows] = _rk4_step(f, X[rows], (sign[rows] * rem[rows])[:, None])
    return X


def _advance_uniform(flow: FlowSpec, X: np.ndarray, t: float) -> np.ndarray:
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    h = flow.integrator_step
    n_full = int(abs(t) // h)
    rem = abs(t) - n_full * h
    sign = 1.0 if t >= 0 else -1.0
    f = flow.rhs
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_full):
            X = _rk4_step(f, X, sign * h)
        if rem > _REMAINDER_TOL * h:
            X = _rk4_step(f, X, sign * rem)
    return X


def advance(flow: FlowSpec, x, t: float) -> np.ndarray:
    """Numerical approximation of ``x . t``."""
    p = as_point(flow, x)
    out = advance_points(flow, p[None, :], t)[0]
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"{flow.name}: trajectory from {p.tolist()} left floating-point range")
    return out


def orbit_points(flow: FlowSpec, x, t0: float, t1: float, dt: float) -> list[np.ndarray]:
    """Sample ``x . t`` for ``t = t0, t0 + dt, ..., t1``; ``t1`` is always included."""
    if t1 < t0:
        raise ValueError("t0 must not exceed t1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    p = as_point(flow, x)
    times = [t0]
    k = 1
    while t0 + k * dt < t1 - _REMAINDER_TOL * dt:
        times.append(t0 + k * dt)
        k += 1
    if t1 > t0:
        times.append(t1)

    out = []
    cur = advance_points(flow, p[None, :], t0)[0]
    for i, t in enumerate(times):
        if i > 0:
            cur = advance_points(flow, cur[None, :], t - times[i - 1])[0]
        if not np.all(np.isfinite(cur)):
            raise NonFiniteState(f"{flow.name}: orbit sample {i} is non-finite", index=i)
        out.append(cur.copy())
    return out


# -- built-in systems --------------------------------------------------------

def _linear_sink(x):
    return -np.asarray(x, dtype=float)


def _saddle(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 0], -x[..., 1]], axis=-1)


def _vanderpol(x):
    x = np.asarray(x, dtype=float)
    u, v = x[..., 0], x[..., 1]
    return np.stack([v, (1.0 - u * u) * v - u], axis=-1)


def _double_well(x):
    x = np.asarray(x, dtype=float)
    u, v = x[..., 0], x[..., 1]
    return np.stack([u - u ** 3, -v], axis=-1)


def _pendulum(x):
    x = np.asarray(x, dtype=float)
    u, v = x[..., 0], x[..., 1]
    return np.stack([v, -np.sin(u) - 0.5 * v], axis=-1)


_RHS = {
    "linear_sink_1d": _linear_sink,
    "linear_sink_2d": _linear_sink,
    "saddle_2d": _saddle,
    "vanderpol": _vanderpol,
    "double_well_gradient": _double_well,
    "pendulum_damped": _pendulum,
}

SYSTEM_NAMES = tuple(_RHS)


@lru_cache(maxsize=1)
def load_manifest() -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.read_string(resources.files(__package__).joinpath("systems.ini").read_text())
    return parser


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


@lru_cache(maxsize=None)
def builtin_system(name: str) -> FlowSpec:
    """Return the built-in flow ``name``; repeated calls return the same object."""
    manifest = load_manifest()
    if name not in _RHS or not manifest.has_section(name):
        raise UnknownSystem(name, SYSTEM_NAMES)
    sec = manifest[name]
    hint = sec.get("lipschitz_hint")
    return FlowSpec(
        dimension=sec.getint("dimension"),
        rhs=_RHS[name],
        name=name,
        lipschitz_hint=float(hint) if hint is not None else None,
        integrator_step=sec.getfloat("integrator_step"),
    )


def builtin_bounds(name: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Documented bounding box ``(lower, upper)`` of a built-in system."""
    manifest = load_manifest()
    if name not in _RHS or not manifest.has_section(name):
        raise UnknownSystem(name, SYSTEM_NAMES)
    sec = manifest[name]
    return _floats(sec["lower"]), _floats(sec["upper"])

