"""Declarative scenario files (YAML) with strict, line-anchored validation.

A scenario has the sections ``geometry``, ``material``, ``schedule``, ``run``,
``training`` and ``paths``; unknown keys anywhere are rejected. See
``configs/`` for the shipped scenarios and README.md for the full key list.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from . import __version__
from .driver import LoadSchedule, RunConfig
from .elasticity import MaterialParams
from .mesh import MeshError, NotchSpec, build_mesh
from .picnn import DEFAULT_CHANNELS, TrainConfig
from .pixels import ConditioningConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, msg, source=None, line=None):
        where = ""
        if source is not None:
            where = f"{source}:{line + 1}: " if line is not None else f"{source}: "
        super().__init__(where + msg)
        self.line = line


@dataclass
class Geometry:
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 100
    ny: int = 100
    notches: list = field(default_factory=list)  # dicts: start, end, representation, orientation

    def notch_specs(self) -> list[NotchSpec]:
        return [
            NotchSpec(tuple(n["start"]), tuple(n["end"]), n.get("orientation"), n.get("representation", "seam"))
            for n in self.notches
        ]

    def build(self):
        return build_mesh(self.lx, self.ly, self.nx, self.ny, self.notch_specs())


@dataclass
class Material:
    # ``lambda`` in the file
    lam: float = 121154.0
    mu: float = 80770.0
    gc: float = 2.7
    lc: float = 0.03

    def params(self) -> MaterialParams:
        return MaterialParams(self.lam, self.mu, self.gc, self.lc)


@dataclass
class Schedule:
    segments: list = field(default_factory=lambda: [[350, 2e-5]])
    loaded: str = "top"
    fixed: str = "bottom"
    axis: str = "y"

    def load_schedule(self) -> LoadSchedule:
        return LoadSchedule(tuple(tuple(s) for s in self.segments), self.loaded, self.fixed, self.axis)


@dataclass
class Conditioning:
    h_cap: float = 1e5
    smooth: bool = True
    kernel_size: int = 5
    sigma: float = 2.0
    irreversibility: bool = True
    smooth_before_irreversibility: bool = True

    def config(self) -> ConditioningConfig:
        return ConditioningConfig(
            self.h_cap, self.smooth, self.kernel_size, self.sigma,
            self.irreversibility, self.smooth_before_irreversibility,
        )


@dataclass
class Run:
    mode: str = "fem"
    activation_phi: float = 0.99
    staggered: str = "single-pass"
    stag_tol: float | None = None
    stag_max_iters: int = 10
    linear_solver: str = "direct"
    phasefield_mass: str = "lumped"
    snapshot_increments: list = field(default_factory=list)
    snapshot_every: int = 0
    conditioning: Conditioning = field(default_factory=Conditioning)

    def run_config(self, mode: str | None = None, snapshot_every: int | None = None, extra_snapshots=()) -> RunConfig:
        snaps = sorted(set(self.snapshot_increments) | set(extra_snapshots))
        return RunConfig(
            mode=mode or self.mode, activation_phi=self.activation_phi, staggered=self.staggered,
            stag_tol=self.stag_tol, stag_max_iters=self.stag_max_iters,
            conditioning=self.conditioning.config(), snapshot_increments=tuple(snaps),
            snapshot_every=self.snapshot_every if snapshot_every is None else snapshot_every,
            linear_solver=self.linear_solver, phasefield_mass=self.phasefield_mass,
        )


@dataclass
class Training:
    increments: list = field(default_factory=lambda: [300, 310])
    epochs: int = 10000
    learning_rate: float = 1e-4
    seed: int = 42
    dtype: str = "float32"
    stencil: str = "K9star"
    loss: str = "norm"
    channels: list = field(default_factory=lambda: list(DEFAULT_CHANNELS))

    def train_config(self, h_cap: float, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate,
            seed=self.seed if seed is None else seed, dtype=self.dtype,
            stencil=self.stencil, loss=self.loss, h_cap=h_cap, channels=tuple(self.channels),
        )


@dataclass
class Paths:
    output_dir: str = "out"
    model_file: str | None = None


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    notes: str = ""
    geometry: Geometry = field(default_factory=Geometry)
    material: Material = field(default_factory=Material)
    schedule: Schedule = field(default_factory=Schedule)
    run: Run = field(default_factory=Run)
    training: Training = field(default_factory=Training)
    paths: Paths = field(default_factory=Paths)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["material"]["lambda"] = d["material"].pop("lam")
        return {"version": CONFIG_VERSION, **d}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def header(self) -> list[str]:
        return [f"ifenn {__version__}", f"config {self.name} {self.hash()}"]

    @classmethod
    def from_dict(cls, data: dict, source=None, lines=None) -> "ScenarioConfig":
        return _parse(data, source, lines or {})

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config ({exc.strerror})", path) from exc
        return cls.loads(text, source=str(path))

    @classmethod
    def loads(cls, text: str, source="<string>") -> "ScenarioConfig":
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", source,
                              mark.line if mark else None) from exc
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping", source, 0)
        lines = {}
        _collect_lines(node, (), lines)
        return _parse(data, source, lines)


def _collect_lines(node, path, out):
    out[path] = node.start_mark.line
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line
            _collect_lines(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _collect_lines(v, path + (i,), out)


_SECTIONS = {
    "geometry": Geometry, "material": Material, "schedule": Schedule,
    "run": Run, "training": Training, "paths": Paths,
}
_NOTCH_KEYS = {"start", "end", "representation", "orientation"}


def _parse(data, source, lines) -> ScenarioConfig:
    def fail(msg, path=()):
        line = None
        for cut in range(len(path), -1, -1):
            if path[:cut] in lines:
                line = lines[path[:cut]]
                break
        raise ConfigError(msg, source, line)

    def section(cls, raw, path):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            fail(f"section '{'.'.join(path)}' must be a mapping", path)
        names = {f.name for f in fields(cls)}
        if cls is Material:
            raw = dict(raw)
            if "lam" in raw:
                fail("unknown key 'material.lam' (use 'lambda')", path + ("lam",))
            if "lambda" in raw:
                raw["lam"] = raw.pop("lambda")
        unknown = sorted(set(raw) - names)
        if unknown:
            fail(f"unknown key '{'.'.join(path + (unknown[0],))}'", path + (unknown[0],))
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            val = raw[f.name]
            if f.name == "conditioning":
                val = section(Conditioning, val, path + ("conditioning",))
            kwargs[f.name] = val
        try:
            return cls(**kwargs)
        except TypeError as exc:
            fail(str(exc), path)

    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        fail(f"unsupported config version {version!r}", ("version",))
    unknown = sorted(set(data) - set(_SECTIONS) - {"version", "name", "notes"})
    if unknown:
        fail(f"unknown key '{unknown[0]}'", (unknown[0],))
    parts = {name: section(cls, data.get(name), (name,)) for name, cls in _SECTIONS.items()}
    cfg = ScenarioConfig(name=str(data.get("name", "scenario")), notes=str(data.get("notes", "") or ""), **parts)
    _validate(cfg, fail)
    return cfg


def _validate(cfg: ScenarioConfig, fail):
    g = cfg.geometry
    for i, n in enumerate(g.notches):
        if not isinstance(n, dict):
            fail("each notch must be a mapping", ("geometry", "notches", i))
        bad = sorted(set(n) - _NOTCH_KEYS)
        if bad:
            fail(f"unknown notch key '{bad[0]}'", ("geometry", "notches", i, bad[0]))
        for key in ("start", "end"):
            if key not in n or not isinstance(n[key], (list, tuple)) or len(n[key]) != 2:
                fail(f"notch '{key}' must be a 2-element list", ("geometry", "notches", i))
    try:
        if not isinstance(g.nx, int) or not isinstance(g.ny, int):
            raise MeshError("nx and ny must be integers")
        mesh = g.build()
    except (MeshError, ValueError) as exc:
        fail(f"geometry: {exc}", ("geometry",))
    try:
        cfg.material.params()
    except (ValueError, TypeError) as exc:
        fail(f"material: {exc}", ("material",))
    try:
        schedule = cfg.schedule.load_schedule()
    except (ValueError, TypeError) as exc:
        fail(f"schedule: {exc}", ("schedule",))
    n_inc = schedule.n_increments
    try:
        cfg.run.run_config()
    except (ValueError, TypeError) as exc:
        fail(f"run: {exc}", ("run",))
    for i, k in enumerate(cfg.run.snapshot_increments):
        if not isinstance(k, int) or not 1 <= k <= n_inc:
            fail(f"snapshot increment {k} outside schedule (1..{n_inc})", ("run", "snapshot_increments", i))
    if cfg.run.snapshot_every < 0:
        fail("snapshot_every must be non-negative", ("run", "snapshot_every"))
    t = cfg.training
    for i, k in enumerate(t.increments):
        if not isinstance(k, int) or not 1 <= k <= n_inc:
            fail(f"training increment {k} outside schedule (1..{n_inc})", ("training", "increments", i))
    try:
        t.train_config(cfg.run.conditioning.h_cap)
    except (ValueError, TypeError) as exc:
        fail(f"training: {exc}", ("training",))
    return mesh
