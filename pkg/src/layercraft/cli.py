"""Command-line front end: ``layercraft SUBCOMMAND --config run.json``."""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, expansion
from .expr import ExprError, compile_expr
from .full_solver import ProblemSpec, solve_full
from .mesh import TensorGrid, layer_grid, sample, shishkin_grid, uniform_grid
from .reduced import ReducedBoundaryData, WellPosednessError, solve_reduced
from .sparse import SingularMatrixError

SUBCOMMANDS = ("solve-full", "solve-reduced", "expand", "verify-residual", "sweep", "check-compat", "stability", "mms")
EXIT_OK, EXIT_ERROR, EXIT_VERIFY = 0, 1, 2

_SCHEMA = {
    "problem": {"b", "c", "epsilon", "epsilon_list", "f", "g1", "g2", "psi_star", "boundary"},
    "mesh": {"kind", "N", "sigma"},
    "expansion": {"variant"},
    "outputs": {"directory", "formats", "emit_profiles"},
    "mms": {"solver", "N_list"},
}
_EDGE_KEYS = {"x=0", "x=1", "y=0", "y=1"}
_BOUNDARY_KEYS = {"phi1", "phi2", "phi3", "kappa1", "kappa2", "kappa3"}


class ConfigError(ValueError):
    pass


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}: expected a finite number")
    return float(v)


def _expr(v, where: str):
    if not isinstance(v, str):
        raise ConfigError(f"{where}: expected an expression string")
    try:
        return compile_expr(v)
    except ExprError as e:
        raise ConfigError(f"{where}: {e}") from None


def _edge_fn(fn, edge: str):
    # boundary functions take the tangential coordinate
    if edge.startswith("x"):
        x0 = 0.0 if edge == "x=0" else 1.0
        return lambda t: fn(x0, t)
    y0 = 0.0 if edge == "y=0" else 1.0
    return lambda t: fn(t, y0)


@dataclass
class RunConfig:
    b: tuple
    c: float
    f_source: str
    f: object
    epsilon: Optional[float] = None
    epsilon_list: Optional[list] = None
    g1: dict = field(default_factory=dict)
    g2: dict = field(default_factory=dict)
    psi_star: object = None
    boundary: dict = field(default_factory=dict)
    mesh_kind: str = "shishkin"
    N: int = 192
    sigma: float = 4.0
    variant: str = "with-compat"
    directory: str = "out"
    formats: tuple = ("csv", "json")
    emit_profiles: bool = False
    mms_solver: str = "full"
    mms_N: tuple = (16, 32, 64, 128)
    raw: dict = field(default_factory=dict, repr=False)

    def spec(self, eps: float) -> ProblemSpec:
        return ProblemSpec(self.b, self.c, eps, self.f, dict(self.g1), dict(self.g2))

    def grid(self, eps: float) -> TensorGrid:
        if self.mesh_kind == "uniform":
            g = uniform_grid(self.N)
            return TensorGrid(g, g)
        return layer_grid(self.N, eps, self.b, self.sigma)


def parse_config(raw) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    for sec, keys in _SCHEMA.items():
        if sec in raw:
            if not isinstance(raw[sec], dict):
                raise ConfigError(f"{sec}: expected an object")
            bad = set(raw[sec]) - keys
            if bad:
                raise ConfigError(f"{sec}: unknown keys {sorted(bad)}")
    if "problem" not in raw:
        raise ConfigError("problem: missing section")
    p = raw["problem"]
    for k in ("b", "c", "f"):
        if k not in p:
            raise ConfigError(f"problem.{k}: missing")
    if not isinstance(p["b"], list) or len(p["b"]) != 2:
        raise ConfigError("problem.b: expected a list of two numbers")
    b = tuple(_num(v, f"problem.b[{i}]") for i, v in enumerate(p["b"]))
    if min(b) <= 0:
        raise ConfigError("problem.b: components must be positive")
    c = _num(p["c"], "problem.c")
    cfg = RunConfig(b=b, c=c, f_source=p["f"], f=_expr(p["f"], "problem.f"), raw=raw)
    if "epsilon" in p:
        cfg.epsilon = _num(p["epsilon"], "problem.epsilon")
        if not 0 < cfg.epsilon <= 1:
            raise ConfigError("problem.epsilon: must lie in (0, 1]")
    if "epsilon_list" in p:
        lst = p["epsilon_list"]
        if not isinstance(lst, list) or not lst:
            raise ConfigError("problem.epsilon_list: expected a non-empty list")
        vals = [_num(v, f"problem.epsilon_list[{i}]") for i, v in enumerate(lst)]
        if any(not 0 < v <= 1 for v in vals):
            raise ConfigError("problem.epsilon_list: entries must lie in (0, 1]")
        if any(a <= b2 for a, b2 in zip(vals, vals[1:])):
            raise ConfigError("problem.epsilon_list: must be sorted strictly descending")
        cfg.epsilon_list = vals
    for key in ("g1", "g2"):
        if key in p:
            if not isinstance(p[key], dict) or set(p[key]) - _EDGE_KEYS:
                raise ConfigError(f"problem.{key}: expected an object keyed by edge (x=0, x=1, y=0, y=1)")
            fns = {e: _edge_fn(_expr(s, f"problem.{key}.{e}"), e) for e, s in p[key].items()}
            setattr(cfg, key, fns)
    if "psi_star" in p:
        cfg.psi_star = _expr(p["psi_star"], "problem.psi_star")
    if "boundary" in p:
        bd = p["boundary"]
        if not isinstance(bd, dict) or set(bd) - _BOUNDARY_KEYS:
            raise ConfigError(f"problem.boundary: allowed keys are {sorted(_BOUNDARY_KEYS)}")
        cfg.boundary = {k: _expr(v, f"problem.boundary.{k}") for k, v in bd.items()}
    m = raw.get("mesh", {})
    if "kind" in m:
        if m["kind"] not in ("uniform", "shishkin"):
            raise ConfigError("mesh.kind: expected 'uniform' or 'shishkin'")
        cfg.mesh_kind = m["kind"]
    if "N" in m:
        if not isinstance(m["N"], int) or isinstance(m["N"], bool):
            raise ConfigError("mesh.N: expected an integer")
        cfg.N = m["N"]
    if "sigma" in m:
        cfg.sigma = _num(m["sigma"], "mesh.sigma")
    e = raw.get("expansion", {})
    if "variant" in e:
        if e["variant"] not in expansion.VARIANTS:
            raise ConfigError(f"expansion.variant: expected one of {list(expansion.VARIANTS)}")
        cfg.variant = e["variant"]
    o = raw.get("outputs", {})
    if "directory" in o:
        if not isinstance(o["directory"], str):
            raise ConfigError("outputs.directory: expected a string")
        cfg.directory = o["directory"]
    if "formats" in o:
        if not isinstance(o["formats"], list) or not o["formats"] or set(o["formats"]) - {"csv", "json"}:
            raise ConfigError("outputs.formats: expected a non-empty subset of ['csv', 'json']")
        cfg.formats = tuple(o["formats"])
    if "emit_profiles" in o:
        if not isinstance(o["emit_profiles"], bool):
            raise ConfigError("outputs.emit_profiles: expected true or false")
        cfg.emit_profiles = o["emit_profiles"]
    mm = raw.get("mms", {})
    if "solver" in mm:
        if mm["solver"] not in ("full", "reduced"):
            raise ConfigError("mms.solver: expected 'full' or 'reduced'")
        cfg.mms_solver = mm["solver"]
    if "N_list" in mm:
        lst = mm["N_list"]
        if not isinstance(lst, list) or len(lst) < 2 or not all(isinstance(n, int) and not isinstance(n, bool) for n in lst):
            raise ConfigError("mms.N_list: expected a list of at least two integers")
        cfg.mms_N = tuple(lst)
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_config(raw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Writer:
    def __init__(self, directory: str, formats, quiet: bool):
        self.dir = Path(directory)
        self.formats = formats
        self.quiet = quiet

    def _write(self, name: str, text: str):
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        if not self.quiet:
            print(f"wrote {path}")

    def json(self, name: str, obj):
        if "json" in self.formats:
            self._write(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, text: str):
        if "csv" in self.formats:
            self._write(name, text)

    def raw(self, name: str, text: str):
        self._write(name, text)


def _field_csv(grid: TensorGrid, columns: dict) -> str:
    X, Y = grid.mesh()
    cols = {"x": X, "y": Y, **columns}
    lines = [",".join(cols)]
    arrs = [np.asarray(a).ravel(order="F") for a in cols.values()]
    for row in zip(*arrs):
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def _need_eps(cfg: RunConfig) -> float:
    if cfg.epsilon is None:
        raise ConfigError("problem.epsilon: required for this subcommand")
    return cfg.epsilon


def cmd_solve_full(cfg, out, jobs):
    eps = _need_eps(cfg)
    grid = cfg.grid(eps)
    sol = solve_full(cfg.spec(eps), grid)
    out.csv("field.csv", _field_csv(grid, {"psi": sol.values}))
    out.json("metadata.json", sol.metadata)
    return EXIT_OK


def cmd_solve_reduced(cfg, out, jobs):
    eps = cfg.epsilon if cfg.epsilon is not None else 1.0
    grid = cfg.grid(eps)
    zero = lambda x, y: 0.0 * np.asarray(x) * np.asarray(y)  # noqa: E731
    bd = cfg.boundary
    get = lambda k: bd.get(k, zero)  # noqa: E731
    data = ReducedBoundaryData.from_callables(
        grid,
        lambda t: float(get("phi1")(0.0, t)), lambda t: float(get("phi2")(1.0, t)), lambda t: float(get("phi3")(1.0, t)),
        lambda t: float(get("kappa1")(t, 0.0)), lambda t: float(get("kappa2")(t, 1.0)), lambda t: float(get("kappa3")(t, 1.0)),
    )
    sol = solve_reduced(cfg.b, cfg.c, cfg.f, data, grid)
    out.csv("field.csv", _field_csv(grid, {"psi": sol.values}))
    out.json("metadata.json", {"grid": grid.describe(), "b": list(cfg.b), "c": cfg.c})
    return EXIT_OK


def cmd_expand(cfg, out, jobs):
    eps = _need_eps(cfg)
    grid = cfg.grid(eps)
    exp = expansion.build_expansion(cfg.spec(eps), grid, cfg.variant)
    out.json("expansion.json", exp.metadata())
    out.csv("fields.csv", expansion.fields_csv(exp))
    if cfg.emit_profiles:
        for name, fam in (("v", exp.v), ("w", exp.w)):
            coords = grid.y if name == "v" else grid.x
            for i, p in sorted(fam.items()):
                out.raw(f"profile_{name}{i}.csv", p.coefficient_csv(coords))
        for i, p in sorted(exp.z.items()):
            out.raw(f"profile_z{i}.csv", p.coefficient_csv())
    return EXIT_OK


def cmd_verify_residual(cfg, out, jobs):
    eps = _need_eps(cfg)
    grid = cfg.grid(eps)
    spec = cfg.spec(eps)
    exp = expansion.build_expansion(spec, grid, cfg.variant)
    rep = analysis.residual_report(spec, exp, include_full_solve=True)
    out.json("residual.json", rep.to_dict())
    keys = sorted(rep.norms)
    out.csv("residual.csv", ",".join(["eps"] + keys) + "\n" + ",".join([f"{eps:.17g}"] + [f"{rep.norms[k]:.17g}" for k in keys]) + "\n")
    return EXIT_OK


def _sweep_worker(args):
    # workers re-parse the plain config: compiled expressions are not picklable
    raw, eps = args
    cfg = parse_config(raw)
    return analysis.sweep_point(cfg.spec(eps), cfg.grid(eps), cfg.variant)


def cmd_sweep(cfg, out, jobs):
    if cfg.epsilon_list is None or len(cfg.epsilon_list) < 3:
        raise ConfigError("problem.epsilon_list: sweep needs at least three values")
    tasks = [(cfg.raw, e) for e in cfg.epsilon_list]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_worker, tasks))
    else:
        reports = [_sweep_worker(t) for t in tasks]
    rep = analysis.fit_sweep(cfg.variant, reports)
    out.csv("sweep.csv", rep.to_csv())
    out.json("sweep.json", rep.to_dict())
    inside = rep.within()
    return EXIT_OK if inside and all(inside.values()) else EXIT_VERIFY


def cmd_check_compat(cfg, out, jobs):
    eps = cfg.epsilon if cfg.epsilon is not None else 1.0
    grid = cfg.grid(eps)
    from .reduced import solve_psi0

    psi0 = solve_psi0(cfg.b, cfg.c, cfg.f, grid)
    rep = expansion.check_compatibility(psi0, cfg.f, cfg.b, cfg.c)
    out.json("compat.json", rep.to_dict())
    if not rep.passed and not out.quiet:
        print("compatibility failed: " + ", ".join(rep.failures()), file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_stability(cfg, out, jobs):
    eps = _need_eps(cfg)
    rep = analysis.stability_check(cfg.spec(eps), cfg.grid(eps))
    out.json("stability.json", rep.to_dict())
    return EXIT_OK if rep.ratio <= 1.05 else EXIT_VERIFY


def cmd_mms(cfg, out, jobs):
    if cfg.psi_star is None:
        raise ConfigError("problem.psi_star: required for mms")
    eps = cfg.epsilon if cfg.epsilon is not None else 1.0
    rows = []
    for n in cfg.mms_N:
        g = uniform_grid(n)
        grid = TensorGrid(g, g)
        if cfg.mms_solver == "full":
            sol = solve_full(cfg.spec(eps), grid).field
        else:
            from .reduced import solve_psi0

            sol = solve_psi0(cfg.b, cfg.c, cfg.f, grid).field
        err = float(np.abs(sol.values - sample(grid, cfg.psi_star).values).max())
        rows.append((n, err))
    orders = [None] + [math.log(rows[i - 1][1] / rows[i][1]) / math.log(rows[i][0] / rows[i - 1][0])
                       if rows[i][1] > 0 and rows[i - 1][1] > 0 else None for i in range(1, len(rows))]
    lines = ["N,err_linf,order"]
    for (n, err), o in zip(rows, orders):
        lines.append(f"{n},{err:.17g}," + ("" if o is None else f"{o:.17g}"))
    out.csv("mms.csv", "\n".join(lines) + "\n")
    out.json("mms.json", {"solver": cfg.mms_solver, "eps": eps, "rows": [{"N": n, "err_linf": e, "order": o} for (n, e), o in zip(rows, orders)]})
    return EXIT_OK


COMMANDS = {
    "solve-full": cmd_solve_full,
    "solve-reduced": cmd_solve_reduced,
    "expand": cmd_expand,
    "verify-residual": cmd_verify_residual,
    "sweep": cmd_sweep,
    "check-compat": cmd_check_compat,
    "stability": cmd_stability,
    "mms": cmd_mms,
}


def _jobs(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("LAYERCRAFT_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"LAYERCRAFT_JOBS: expected an integer, got {env!r}") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layercraft", description="Singularly perturbed fourth-order problems and their layer expansions.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides outputs.directory)")
    p.add_argument("--jobs", type=int, metavar="K", help="worker processes for sweep (default: $LAYERCRAFT_JOBS or 1)")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        jobs = _jobs(args.jobs)
        out = Writer(args.out or cfg.directory, cfg.formats, args.quiet)
        return COMMANDS[args.subcommand](cfg, out, jobs)
    except expansion.CompatibilityError as e:
        if e.report is not None:
            Writer(args.out or cfg.directory, cfg.formats, True).json("compat.json", e.report.to_dict())
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except (ConfigError, ExprError, WellPosednessError, SingularMatrixError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
