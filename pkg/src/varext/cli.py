"""Command line front end: ``varext build | verify | render``.

Configuration is a JSON document::

    {"scenario": {"kind": "half_plane", "n_atoms": 32},
     "data": {"kind": "indicator", "cube": [2, 1]},
     "eps": [0.125], "j_range": [null, 9],
     "suites": ["whitney", "corona", "iteration"],
     "out": "out", "seed": 0,
     "render": {"field": "upsilon", "resolution": [256, 256], "outlines": true}}

Images are binary PPM: the ASCII header ``P6\\n<width> <height>\\n255\\n``
followed by width*height RGB byte triples, rows from the top of the window
down.  Every run writes ``manifest.json`` listing each artifact with its
SHA-256 digest.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .dyadic import DyadicLattice, build_lattice
from .geometry import MAX_GENERATION, BoundaryModel, build_scenario, save_model
from .render import MAX_PIXELS
from .whitney import WhitneyGrid, build_whitney

log = logging.getLogger("varext")

SCENARIOS = ("half_plane", "four_corner_cantor", "lower_dim_cantor", "lipschitz_graph")
DATA_KINDS = ("constant", "indicator", "log_distance", "lipschitz_bump", "martingale")
SUITES = ("whitney", "corona", "approximation", "trace", "iteration", "blend", "mollifier")
RENDER_FIELDS = ("upsilon", "approximant", "regularized_distance", "constant")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass
class ScenarioSpec:
    kind: str = "half_plane"
    generation: int | None = None
    n_atoms: int = 32
    window: list | None = None


@dataclass
class DataSpec:
    kind: str = "constant"
    value: float = 1.0
    cube: list | None = None
    point: list | None = None
    center: list | None = None
    radius: float = 0.125
    height: float = 1.0
    seed: int = 0


@dataclass
class RenderSpec:
    field: str = "upsilon"
    resolution: list = dc_field(default_factory=lambda: [256, 256])
    window: list | None = None
    outlines: bool = True


@dataclass
class RunConfig:
    scenario: ScenarioSpec = dc_field(default_factory=ScenarioSpec)
    data: DataSpec = dc_field(default_factory=DataSpec)
    eps: list = dc_field(default_factory=lambda: [0.125])
    j_range: list | None = dc_field(default_factory=lambda: [None, 9])
    suites: list = dc_field(default_factory=lambda: ["whitney", "corona", "iteration"])
    out: str = "out"
    seed: int = 0
    render: RenderSpec = dc_field(default_factory=RenderSpec)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("$", "config must be an object")
        known = {"scenario", "data", "eps", "j_range", "suites", "out", "seed", "render"}
        for k in raw:
            if k not in known:
                raise ConfigError(k, "unknown field")
        cfg = cls(scenario=_sub(ScenarioSpec, raw.get("scenario", {}), "scenario"),
                  data=_sub(DataSpec, raw.get("data", {}), "data"),
                  eps=raw.get("eps", [0.125]), j_range=raw.get("j_range", [None, 9]),
                  suites=raw.get("suites", ["whitney", "corona", "iteration"]),
                  out=raw.get("out", "out"), seed=raw.get("seed", 0),
                  render=_sub(RenderSpec, raw.get("render", {}), "render"))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(raw)

    def validate(self) -> None:
        sc = self.scenario
        if sc.kind not in SCENARIOS:
            raise ConfigError("scenario.kind", f"unknown scenario {sc.kind!r}")
        if sc.kind in ("four_corner_cantor", "lower_dim_cantor"):
            if sc.generation is not None and not (_is_int(sc.generation) and 0 <= sc.generation <= MAX_GENERATION):
                raise ConfigError("scenario.generation", f"must be an integer in [0, {MAX_GENERATION}]")
        if not _is_int(sc.n_atoms) or sc.n_atoms < 2:
            raise ConfigError("scenario.n_atoms", "must be an integer >= 2")
        if sc.window is not None:
            _check_window(sc.window, "scenario.window")
        d = self.data
        if d.kind not in DATA_KINDS:
            raise ConfigError("data.kind", f"unknown data kind {d.kind!r}")
        if d.kind == "indicator" and not (isinstance(d.cube, list) and len(d.cube) == 2
                                          and all(_is_int(v) and v >= 0 for v in d.cube)):
            raise ConfigError("data.cube", "indicator needs [generation, index]")
        if d.kind == "log_distance" and d.point is not None and not _is_point(d.point):
            raise ConfigError("data.point", "must be [x, y]")
        if d.kind == "lipschitz_bump":
            if d.center is not None and not _is_point(d.center):
                raise ConfigError("data.center", "must be [x, y]")
            if not _is_num(d.radius) or d.radius <= 0:
                raise ConfigError("data.radius", "must be positive")
        if not _is_num(d.value) or not _is_num(d.height):
            raise ConfigError("data", "value and height must be numbers")
        if not isinstance(self.eps, list) or not self.eps:
            raise ConfigError("eps", "must be a non-empty list")
        for i, e in enumerate(self.eps):
            if not _is_num(e) or not 0 < e < 1:
                raise ConfigError(f"eps[{i}]", "must lie in (0, 1)")
        if self.j_range is not None:
            ok = isinstance(self.j_range, list) and len(self.j_range) == 2 and all(
                v is None or (_is_int(v) and 0 <= v <= 16) for v in self.j_range)
            if not ok or (None not in self.j_range and self.j_range[0] > self.j_range[1]):
                raise ConfigError("j_range", "must be [j_lo, j_hi] with 0 <= j_lo <= j_hi <= 16 (null for defaults)")
        if not isinstance(self.suites, list):
            raise ConfigError("suites", "must be a list")
        for i, s in enumerate(self.suites):
            if s not in SUITES:
                raise ConfigError(f"suites[{i}]", f"unknown suite {s!r}")
        if not _is_int(self.seed) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if not isinstance(self.out, str) or not self.out:
            raise ConfigError("out", "must be a path")
        r = self.render
        if r.field not in RENDER_FIELDS:
            raise ConfigError("render.field", f"unknown field {r.field!r}")
        if not (isinstance(r.resolution, list) and len(r.resolution) == 2 and all(_is_int(v) and v > 0 for v in r.resolution)):
            raise ConfigError("render.resolution", "must be [width, height] with positive integers")
        if r.resolution[0] * r.resolution[1] > MAX_PIXELS:
            raise ConfigError("render.resolution", f"over the cap of {MAX_PIXELS} pixels")
        if r.window is not None:
            _check_window(r.window, "render.window")


def _sub(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be an object")
    names = cls.__dataclass_fields__
    for k in raw:
        if k not in names:
            raise ConfigError(f"{path}.{k}", "unknown field")
    return cls(**raw)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_point(v) -> bool:
    return isinstance(v, list) and len(v) == 2 and all(_is_num(t) for t in v)


def _check_window(w, path):
    if not (isinstance(w, list) and len(w) == 4 and all(_is_num(t) for t in w)):
        raise ConfigError(path, "must be [x0, y0, x1, y1]")
    if not (w[2] > w[0] and w[3] > w[1]):
        raise ConfigError(path, "window has zero or negative size")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    return RunConfig.from_json(text)


# ---------------------------------------------------------------------------
# scenario, data and grid construction
# ---------------------------------------------------------------------------
def make_model(cfg: RunConfig) -> BoundaryModel:
    sc = cfg.scenario
    return build_scenario(sc.kind, generation=sc.generation, window=sc.window, n_atoms=sc.n_atoms, seed=cfg.seed)


def make_data(model: BoundaryModel, lattice: DyadicLattice, spec: DataSpec) -> np.ndarray:
    """Atom values for a data descriptor."""
    a = model.atoms
    if spec.kind == "constant":
        return np.full(model.n_atoms, float(spec.value))
    if spec.kind == "indicator":
        gen, idx = spec.cube
        if not lattice.j_min <= gen <= lattice.j_max:
            raise ConfigError("data.cube", f"generation outside [{lattice.j_min}, {lattice.j_max}]")
        ids = lattice.level(gen)
        if idx >= len(ids):
            raise ConfigError("data.cube", f"generation {gen} has {len(ids)} cubes")
        q = ids[idx]
        f = np.zeros(model.n_atoms)
        f[lattice.start[q]:lattice.stop[q]] = spec.value
        return f
    if spec.kind == "log_distance":
        x0, y0, x1, y1 = model.window
        p = np.array(spec.point if spec.point is not None else [0.5 * (x0 + x1) + 1e-3, 0.0], dtype=float)
        d = np.linalg.norm(a - p, axis=1)
        if d.min() == 0:
            raise ConfigError("data.point", "coincides with an atom")
        return float(spec.value) * np.log(d)
    if spec.kind == "lipschitz_bump":
        c = np.array(spec.center if spec.center is not None else a[model.n_atoms // 2], dtype=float)
        return float(spec.height) * np.maximum(0.0, 1.0 - np.linalg.norm(a - c, axis=1) / spec.radius)
    if spec.kind == "martingale":
        return martingale_data(lattice, spec.seed, spec.value)
    raise ConfigError("data.kind", f"unknown data kind {spec.kind!r}")


def martingale_data(lattice: DyadicLattice, seed: int, amplitude: float = 1.0) -> np.ndarray:
    """Dyadic martingale with independent +-amplitude increments of conditional mean zero."""
    rng = np.random.default_rng(seed)
    f = np.zeros(lattice.model.n_atoms)
    for j in range(lattice.j_min + 1, lattice.j_max + 1):
        ids = lattice.level(j)
        sign = rng.choice([-1.0, 1.0], size=len(ids))
        coef = amplitude * sign
        par = lattice.parent[ids]
        # subtract the sigma-weighted mean over siblings
        num = np.zeros(lattice.n_cubes)
        np.add.at(num, par, coef * lattice.mass[ids])
        coef = coef - num[par] / lattice.mass[par]
        owner = lattice.atom_cube[j - lattice.j_min]
        f += coef[np.searchsorted(ids, owner)]
    return f


def make_grid(model: BoundaryModel, lattice: DyadicLattice, cfg: RunConfig) -> WhitneyGrid:
    lo, hi = cfg.j_range if cfg.j_range is not None else (None, None)
    try:
        return build_whitney(model, lattice, j_lo=lo, j_hi=hi)
    except ValueError as exc:
        raise ConfigError("j_range", str(exc)) from None


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------
def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_manifest(out: Path) -> Path:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = [{"path": p.relative_to(out).as_posix(), "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
                "bytes": p.stat().st_size} for p in files]
    path = out / "manifest.json"
    write_json(path, {"artifacts": entries})
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_build(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model = make_model(cfg)
    lattice = build_lattice(model)
    grid = make_grid(model, lattice, cfg)
    save_model(model, out / "model.bin")
    lattice.to_csv(out / "lattice.csv")
    grid.to_csv(out / "whitney.csv")
    write_json(out / "constants.json", {"model": dict(model.meta), "lattice": dict(lattice.constants),
                                         "whitney": dict(grid.constants)})
    (out / "config.json").write_text(cfg.to_json() + "\n")
    write_manifest(out)
    log.info("built %s: %d atoms, %d lattice cubes, %d Whitney cubes", model.kind, model.n_atoms,
             lattice.n_cubes, grid.n_cubes)
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    from .suites import run_suites

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model = make_model(cfg)
    lattice = build_lattice(model)
    grid = make_grid(model, lattice, cfg)
    f = make_data(model, lattice, cfg.data)
    checks, reports = run_suites(cfg, model, lattice, grid, f, out)
    write_csv(out / "checks.csv", ["suite", "check", "value", "limit", "passed"], checks)
    write_json(out / "report.json", reports)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    write_manifest(out)
    failed = [c for c in checks if not c[4]]
    for c in checks:
        log.info("%s %s/%s value=%s limit=%s", "PASS" if c[4] else "FAIL", c[0], c[1], _fmt(c[2]), _fmt(c[3]))
    return 0 if not failed else 1


def cmd_render(cfg: RunConfig) -> int:
    from .render import render_field

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model = make_model(cfg)
    lattice = build_lattice(model)
    grid = make_grid(model, lattice, cfg)
    f = make_data(model, lattice, cfg.data)
    render_field(cfg, model, lattice, grid, f, out)
    write_manifest(out)
    return 0


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "render": cmd_render}


def parse_args(argv=None) -> argparse.Namespace:
    ap = argparse.ArgumentParser(prog="varext", description="Whitney extensions of boundary data: build, verify, render.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--epsilon", type=float, action="append", help="corona parameter (repeatable)")
    ap.add_argument("--jmax", type=int, help="finest Whitney generation")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap.parse_args(argv)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    raw = cfg.to_dict()
    if args.out is not None:
        raw["out"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.epsilon:
        raw["eps"] = list(args.epsilon)
    if args.jmax is not None:
        lo = raw["j_range"][0] if raw["j_range"] else None
        raw["j_range"] = [lo if lo is None else min(lo, args.jmax), args.jmax]
    return RunConfig.from_dict(raw)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
