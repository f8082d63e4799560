"""Command-line front end.

Exit codes: 0 all requested checks pass, 1 a verdict failed, 2 usage or
configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .boxcover import ESCAPE_POLICIES, BoxSet, Grid, cached_box_map, cover_points
from .chains import (Schedule, a_set, hop_steps, omega_chain_graphs,
                     stage_graphs, verify_quasi_attracting_graphs)
from .errors import (ConfigError, EscapeDominated, Escaped, NonFiniteState, OmegaFlowError,
                     SpaceMismatch, UnknownSystem)
from .flow import SYSTEM_NAMES, builtin_bounds, builtin_system, load_manifest
from .limits import check_connected_omega
from .setmap import closure_D, orbital_S, random_cubical_space, random_set_map

ENV_OUT = "OMEGAFLOW_OUT"
DEFAULT_OUT = "omegaflow_out"
DENSITIES = (0.02, 0.1, 0.5)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one run. ``None`` fields take the system's manifest defaults."""

    system: str = "linear_sink_2d"
    grid: Optional[str] = None
    tau: Optional[float] = None
    eps0: Optional[float] = None
    t0: Optional[float] = None
    stages: int = 5
    seed_set: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    escape_policy: str = "clip"
    samples_per_axis: int = 2
    slack: int = 1
    s_maps: int = 200
    d_maps: int = 100
    d_max_cells: int = 2000

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(name, value)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if text.lstrip().startswith("{"):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON config: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("JSON config must be an object")
            return cls.from_mapping(data)
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text if "[" in text.split("\n", 1)[0] else "[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        data = {}
        for sec in parser.sections():
            data.update(parser[sec])
        return cls.from_mapping(data)

    def resolved(self) -> "RunConfig":
        """Fill manifest defaults and validate everything before any computation."""
        if self.system not in SYSTEM_NAMES:
            raise UnknownSystem(self.system, SYSTEM_NAMES)
        sec = load_manifest()[self.system]
        dim = sec.getint("dimension")
        lower, upper = builtin_bounds(self.system)
        grid = self.grid
        if grid is None:
            n = sec.getint("subdivisions")
            bounds = ",".join(f"{a!r},{b!r}" for a, b in zip(lower, upper))
            grid = f"{bounds}:{','.join([str(n)] * dim)}"
        tau = self.tau if self.tau is not None else sec.getfloat("tau")
        cfg = replace(self, grid=grid, tau=tau,
                      seed_set=self.seed_set if self.seed_set is not None else sec.get("seed_set"))
        if self.escape_policy not in ESCAPE_POLICIES:
            raise ConfigError(f"escape_policy must be one of {', '.join(ESCAPE_POLICIES)}")
        g = cfg.make_grid()
        if g.dim != dim:
            raise ConfigError(f"grid has dimension {g.dim}, system {self.system} has {dim}")
        if not tau > 0:
            raise ConfigError("tau must be positive")
        eps0 = self.eps0 if self.eps0 is not None else sec.getfloat("eps0_cells") * g.cellwidth
        cfg = replace(cfg, eps0=eps0, t0=self.t0 if self.t0 is not None else tau)
        for p in cfg.schedule():
            hop_steps(p, tau)
        parse_seed_set(cfg.seed_set, g)
        if self.samples_per_axis < 1:
            raise ConfigError("samples_per_axis must be >= 1")
        if self.slack < 0:
            raise ConfigError("slack must be >= 0")
        if min(self.s_maps, self.d_maps) < 0 or self.d_max_cells < 3:
            raise ConfigError("map counts must be >= 0 and d_max_cells >= 3")
        return cfg

    def make_grid(self) -> Grid:
        try:
            return Grid.parse(self.grid, self.escape_policy)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad grid spec {self.grid!r}: {exc}") from exc

    def schedule(self) -> Schedule:
        return Schedule.geometric(self.eps0, self.t0, self.stages)

    def to_dict(self) -> dict:
        # the output directory is not part of a run's identity
        d = asdict(self)
        d.pop("out")
        return d


_INT_FIELDS = {"stages", "seed", "samples_per_axis", "slack", "s_maps", "d_maps", "d_max_cells"}
_FLOAT_FIELDS = {"tau", "eps0", "t0"}


def _coerce(name, value):
    if value is None:
        return None
    try:
        if name in _INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if name in _FLOAT_FIELDS:
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot interpret {value!r}") from exc
    return str(value)


# -- seed sets ---------------------------------------------------------------

def parse_seed_set(spec: str, grid: Grid) -> BoxSet:
    """``box:c1,..,cd,r`` (boxes with centers within ``r``), ``point:x1,..,xd``, or a BoxSet file."""
    if spec.startswith(("box:", "point:")):
        kind, _, body = spec.partition(":")
        try:
            vals = [float(v) for v in body.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad seed set {spec!r}") from exc
        want = grid.dim + 1 if kind == "box" else grid.dim
        if len(vals) != want:
            raise ConfigError(f"seed set {spec!r} needs {want} numbers")
        center = np.array(vals[:grid.dim])
        if not grid.contains(center[None, :])[0]:
            raise ConfigError(f"seed set center {center.tolist()} lies outside the grid")
        if kind == "box":
            r = vals[-1]
            if r < 0:
                raise ConfigError("seed set radius must be >= 0")
            near = np.linalg.norm(grid.centers() - center, axis=1) <= r
            if near.any():
                return BoxSet.from_flat(grid, np.flatnonzero(near), assume_sorted=True)
        return cover_points(grid, center[None, :])
    try:
        B = BoxSet.from_text(Path(spec).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read seed set file {spec}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed seed set file {spec}: {exc}") from exc
    if B.grid.spec() != grid.spec():
        raise SpaceMismatch(f"seed set grid {B.grid.spec()} differs from run grid {grid.spec()}")
    return BoxSet.from_flat(grid, B.flat, assume_sorted=True)


# -- output ------------------------------------------------------------------

def output_dir(cfg: RunConfig, flag: Optional[str] = None) -> Path:
    out = flag or os.environ.get(ENV_OUT) or cfg.out or DEFAULT_OUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, data: dict):
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def _write_set(out: Path, name: str, B: BoxSet) -> str:
    (out / f"{name}.txt").write_text(B.to_text())
    if B.grid.dim == 2:
        (out / f"{name}.ppm").write_bytes(B.to_ppm())
    return f"{name}.txt"


def _ladder_ok(sets) -> bool:
    return all(b <= a for a, b in zip(sets, sets[1:]))


# -- runs --------------------------------------------------------------------

@dataclass
class _Context:
    cfg: RunConfig
    out: Path
    timings: dict

    @property
    def grid(self) -> Grid:
        return self.cfg.make_grid()


def _graphs(ctx: _Context):
    cfg = ctx.cfg
    flow = builtin_system(cfg.system)
    return stage_graphs(flow, ctx.grid, cfg.schedule(), cfg.tau, cfg.samples_per_axis)


def run_omega(ctx: _Context) -> tuple[dict, bool]:
    cfg, grid = ctx.cfg, ctx.grid
    B = parse_seed_set(cfg.seed_set, grid)
    F = cached_box_map(builtin_system(cfg.system), grid, cfg.tau, cfg.samples_per_axis)
    rep = check_connected_omega(F, B)
    ref = _write_set(ctx.out, "omega", rep.result.omega)
    _write_set(ctx.out, "seed", B)
    body = {**rep.result.to_dict(omega_ref=ref), "verdict": rep.verdict,
            "seed_connected": rep.seed_connected, "seed_size": len(B)}
    return body, rep.passed


def run_chains(ctx: _Context) -> tuple[dict, bool]:
    grid = ctx.grid
    M = parse_seed_set(ctx.cfg.seed_set, grid)
    graphs = _graphs(ctx)
    res = omega_chain_graphs(graphs, M)
    a_stages = [a_set(G, P) for G, P in zip(graphs, res.stages)]
    stages = []
    for k, (G, P, A) in enumerate(zip(graphs, res.stages, a_stages)):
        stages.append({
            "epsilon": G.params.epsilon, "t_min": G.params.t_min, "radius": G.radius,
            "steps": [G.min_steps, G.max_steps],
            "P": _write_set(ctx.out, f"P{k}", P), "P_size": len(P),
            "A": _write_set(ctx.out, f"A{k}", A), "A_size": len(A),
        })
    ladder = _ladder_ok(res.stages) and _ladder_ok(a_stages)
    body = {
        "stages": stages,
        "omega_chain": _write_set(ctx.out, "omega_chain", res.omega),
        "omega_chain_size": len(res.omega),
        "escapes": graphs[0].box_map.escape_count,
        "monotone_ladder": ladder,
        "verdict": "PASS" if ladder else "FAIL",
    }
    return body, ladder


def run_verify(ctx: _Context) -> tuple[dict, bool]:
    grid = ctx.grid
    M = parse_seed_set(ctx.cfg.seed_set, grid)
    rep = verify_quasi_attracting_graphs(_graphs(ctx), M, ctx.cfg.slack)
    body = rep.to_dict()
    for k, (P, A) in enumerate(zip(rep.p_stages, rep.a_stages)):
        body["stages"][k]["P"] = _write_set(ctx.out, f"P{k}", P)
        body["stages"][k]["A"] = _write_set(ctx.out, f"A{k}", A)
    body["omega_chain"] = _write_set(ctx.out, "omega_chain", rep.omega)
    body["escapes"] = rep.attracting[0].escapes
    return body, rep.passed


def idempotency_suite(s_maps: int, d_maps: int, d_max_cells: int, seed: int) -> dict:
    """``S(S G) == S G`` and ``D(D G) == D G`` on seeded random maps."""
    rng = np.random.default_rng(seed)
    s_fail = 0
    for i in range(s_maps):
        space = random_cubical_space(rng, max_cells=100)
        G = random_set_map(space, DENSITIES[i % 3], rng)
        S = orbital_S(G)
        s_fail += orbital_S(S) != S
    d_fail = sub_fail = sup_fail = 0
    for i in range(d_maps):
        space = random_cubical_space(rng, max_cells=d_max_cells)
        G = random_set_map(space, DENSITIES[i % 3], rng)
        D = closure_D(G)
        DD = closure_D(D)
        sub_fail += not DD <= D
        sup_fail += not D <= DD
        d_fail += DD != D
    ok = s_fail == d_fail == sub_fail == sup_fail == 0
    return {
        "verdict": "PASS" if ok else "FAIL",
        "S_maps": s_maps, "S_failures": int(s_fail),
        "D_maps": d_maps, "D_failures": int(d_fail),
        "D_subset_failures": int(sub_fail), "D_superset_failures": int(sup_fail),
    }


def run_verify_theorems(ctx: _Context) -> tuple[dict, bool]:
    cfg = ctx.cfg
    t = time.perf_counter()
    idem = idempotency_suite(cfg.s_maps, cfg.d_maps, cfg.d_max_cells, cfg.seed)
    ctx.timings["idempotent_operators"] = time.perf_counter() - t

    t = time.perf_counter()
    conn, _ = run_omega(ctx)
    ctx.timings["connected_omega"] = time.perf_counter() - t

    t = time.perf_counter()
    quasi, _ = run_verify(ctx)
    ctx.timings["quasi_attracting"] = time.perf_counter() - t

    theorems = {"idempotent_operators": idem, "connected_omega": conn, "quasi_attracting": quasi}
    ok = all(v["verdict"] == "PASS" for v in theorems.values())
    return {"theorems": theorems, "verdict": "PASS" if ok else "FAIL"}, ok


COMMANDS = {
    "omega": run_omega,
    "chains": run_chains,
    "verify": run_verify,
    "verify-theorems": run_verify_theorems,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omegaflow", description="Limit sets and chain prolongations of flows on box grids.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "omega": "limit set of a seed set and its connectedness",
        "chains": "chain prolongations and attracting sets per schedule stage",
        "verify": "quasi-attracting verification of the chain limit set",
        "verify-theorems": "idempotency, connectedness and quasi-attracting suites",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="INI (key = value) or JSON run config")
        p.add_argument("--system", help=f"one of {', '.join(SYSTEM_NAMES)}")
        p.add_argument("--grid", help='"x0,x1,y0,y1:nx,ny"')
        p.add_argument("--tau", type=float)
        p.add_argument("--eps0", type=float, help="first-stage jump size (absolute)")
        p.add_argument("--t0", type=float, help="first-stage minimum hop time")
        p.add_argument("--stages", type=int)
        p.add_argument("--seed-set", help='BoxSet file, "box:c1,..,cd,r" or "point:x1,..,xd"')
        p.add_argument("--out", help=f"output directory (env {ENV_OUT} overrides the config value)")
        p.add_argument("--seed", type=int)
        p.add_argument("--escape-policy", choices=ESCAPE_POLICIES)
        p.add_argument("--slack", type=int)
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in
                 ("system", "grid", "tau", "eps0", "t0", "stages", "seed_set", "seed",
                  "escape_policy", "slack")
                 if getattr(args, k) is not None}
    return replace(cfg, **overrides)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _config_from_args(args).resolved()
        ctx = _Context(cfg, output_dir(cfg, args.out), {})
        t = time.perf_counter()
        body, ok = COMMANDS[args.command](ctx)
        ctx.timings["total"] = time.perf_counter() - t
    except (ConfigError, UnknownSystem, SpaceMismatch) as exc:
        print(f"omegaflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteState, EscapeDominated, Escaped) as exc:
        print(f"omegaflow: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OmegaFlowError as exc:
        print(f"omegaflow: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    report = {"command": args.command, "config": cfg.to_dict(), **body}
    _write_json(ctx.out / "report.json", report)
    _write_json(ctx.out / "timings.json", {k: round(v, 6) for k, v in ctx.timings.items()})
    print(f"{args.command} {cfg.system}: {body['verdict']} ({ctx.out / 'report.json'})")
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
