"""Experiment configuration: TOML file, dotted-path overrides, validation.

Every numeric artifact is written next to a ``*.config.toml`` sidecar holding
the fully resolved configuration; feeding that sidecar back reproduces the
artifact byte for byte.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------
POTENTIAL_KINDS = ("zero", "constant", "bump", "file")
SOURCE_KINDS = ("eigenmode", "bump", "indicator", "file")
METHODS = ("dense", "neumann_series")
FORMATS = ("csv", "svg")


class ConfigError(ValueError):
    """Validation failure tied to one dotted config field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

    def to_json(self) -> dict:
        return {"error": "validation", "field": self.field, "message": self.message}


@dataclass
class GeometryBlock:
    L: float = math.pi
    N: int = 1
    R: float = 1.0
    h: float | None = None  # default R/64
    extent: float | None = None  # grid half-width; default R plus two cells


@dataclass
class PotentialBlock:
    kind: str = "zero"
    amplitude: float = 1.0
    radius: float = 0.4
    path: str | None = None


@dataclass
class SourceBlock:
    kind: str = "eigenmode"
    band: int | None = None  # axial modes kept; default geometry.N
    index: int = 1  # eigenmode index j
    amplitude: float = 1.0
    radius: float = 0.5  # planar support radius (bump, indicator)
    center: list[float] = field(default_factory=lambda: [0.0, 0.0])
    x3_center: float | None = None  # default L/2
    x3_width: float | None = None  # default L/8
    path: str | None = None


@dataclass
class SolverBlock:
    method: str = "dense"
    kappa: float = 2.5
    tol: float = 1e-13
    cond_threshold: float = 1e8
    max_iter: int = 1000
    n_angles: int = 128
    n_x3: int = 65


@dataclass
class RegionBlock:
    M: float = 0.1
    C0: float = 2.0
    cutoff_plateau: float | None = None  # default potential.radius
    cutoff_support: float | None = None  # default plateau + R/10
    re_min: float = 3.0
    re_max: float = 30.0
    n_re: int = 40
    im_min: float | None = None  # default -M log(re_min), the region boundary
    im_max: float = 0.0
    n_im: int = 20
    floor: float = 0.05


@dataclass
class EigenBlock:
    count: int = 60
    disk_count: int | None = None


@dataclass
class StabilityBlock:
    A: float | None = None  # default just above the largest used kappa_j
    A1: float | None = None  # default A + 2
    c: float = 0.1
    d: float | None = None  # default M log A
    Q: float | None = None  # default: spectral H^{n+1} norm of the source
    smoothness: int = 1
    N1_list: list[int] = field(default_factory=lambda: [5, 10, 20, 40])
    noise_list: list[float] = field(default_factory=lambda: [1e-3, 1e-2])
    synth_noise: float = 0.0
    seed: int = 0
    window_nodes: int = 16


@dataclass
class OutputBlock:
    directory: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "svg"])


@dataclass
class ExperimentConfig:
    geometry: GeometryBlock = field(default_factory=GeometryBlock)
    potential: PotentialBlock = field(default_factory=PotentialBlock)
    source: SourceBlock = field(default_factory=SourceBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    region: RegionBlock = field(default_factory=RegionBlock)
    eigen: EigenBlock = field(default_factory=EigenBlock)
    stability: StabilityBlock = field(default_factory=StabilityBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    # -- derived quantities -----------------------------------------------
    @property
    def h(self) -> float:
        g = self.geometry
        return g.h if g.h is not None else g.R / 64

    @property
    def plateau(self) -> float:
        r = self.region
        return r.cutoff_plateau if r.cutoff_plateau is not None else self.potential.radius

    @property
    def support(self) -> float:
        r = self.region
        return r.cutoff_support if r.cutoff_support is not None else self.plateau + 0.1 * self.geometry.R

    @property
    def band(self) -> int:
        return self.source.band if self.source.band is not None else self.geometry.N

    def to_dict(self) -> dict:
        return _drop_none(dataclasses.asdict(self))

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------
def _coerce(path: str, value: Any, annotation: str):
    ann = annotation.replace(" | None", "")
    if ann == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if ann == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if ann == "str":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if ann.startswith("list["):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        inner = ann[5:-1]
        return [_coerce(f"{path}[{i}]", v, inner) for i, v in enumerate(value)]
    raise ConfigError(path, f"unsupported field type {annotation}")


def from_dict(data: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for block_name, block_value in data.items():
        if not hasattr(cfg, block_name):
            raise ConfigError(block_name, f"unknown section; expected one of {[f.name for f in dataclasses.fields(cfg)]}")
        if not isinstance(block_value, dict):
            raise ConfigError(block_name, "expected a table")
        block = getattr(cfg, block_name)
        known = {f.name: f for f in dataclasses.fields(block)}
        for key, value in block_value.items():
            path = f"{block_name}.{key}"
            if key not in known:
                raise ConfigError(path, f"unknown key; expected one of {sorted(known)}")
            setattr(block, key, _coerce(path, value, known[key].type))
    validate(cfg)
    return cfg


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b=value`` with a TOML value; bare words are taken as strings."""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.key=value")
    key, raw = text.split("=", 1)
    keys = key.strip().split(".")
    if len(keys) != 2 or not all(keys):
        raise ConfigError(key.strip(), "override key must be section.key")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return keys, value


def load_config(path: str | Path | None, overrides: list[str] = ()) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("config", f"not valid TOML: {exc}") from None
    for text in overrides:
        (section, key), value = parse_override(text)
        data.setdefault(section, {})
        if not isinstance(data[section], dict):
            raise ConfigError(section, "expected a table")
        data[section][key] = value
    return from_dict(data)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
def _require(cond: bool, field_: str, message: str):
    if not cond:
        raise ConfigError(field_, message)


def validate(cfg: ExperimentConfig) -> None:
    g, p, s, sv, r, st, o = (
        cfg.geometry, cfg.potential, cfg.source, cfg.solver, cfg.region, cfg.stability, cfg.output
    )
    _require(g.L > 0, "geometry.L", f"slab thickness must be positive, got {g.L}")
    _require(g.R > 0, "geometry.R", f"aperture radius must be positive, got {g.R}")
    _require(g.N >= 1, "geometry.N", f"band limit must be >= 1, got {g.N}")
    _require(g.h is None or 0 < g.h <= g.R / 4, "geometry.h", f"need 0 < h <= R/4 = {g.R / 4}, got {g.h}")
    _require(
        g.extent is None or g.extent >= g.R + cfg.h,
        "geometry.extent",
        f"grid half-width must reach past the aperture, need >= R + h = {g.R + cfg.h}",
    )

    _require(p.kind in POTENTIAL_KINDS, "potential.kind", f"expected one of {POTENTIAL_KINDS}, got {p.kind!r}")
    _require(p.radius > 0, "potential.radius", "must be positive")
    _require(p.kind != "file" or p.path, "potential.path", "kind = 'file' needs a path to a .npy array")
    _require(
        p.kind in ("zero", "file") or p.radius <= cfg.plateau + 1e-12,
        "potential.radius",
        f"supp V (radius {p.radius}) must sit inside the cutoff plateau {cfg.plateau}",
    )
    _require(0 < cfg.plateau < cfg.support, "region.cutoff_support", "need 0 < cutoff_plateau < cutoff_support")
    _require(cfg.support < g.R, "region.cutoff_support", f"cutoff support {cfg.support} must lie inside R = {g.R}")

    _require(s.kind in SOURCE_KINDS, "source.kind", f"expected one of {SOURCE_KINDS}, got {s.kind!r}")
    _require(1 <= cfg.band <= g.N, "source.band", f"need 1 <= band <= geometry.N = {g.N}")
    _require(s.index >= 1, "source.index", "eigenmode index starts at 1")
    _require(len(s.center) == 2, "source.center", "expected [x, y]")
    _require(
        math.hypot(*s.center) + s.radius < g.R,
        "source.radius",
        "source support must lie strictly inside the aperture disk",
    )
    _require(s.kind != "file" or s.path, "source.path", "kind = 'file' needs a modal field file")
    _require(s.x3_width is None or s.x3_width > 0, "source.x3_width", "must be positive")
    _require(s.x3_center is None or 0 < s.x3_center < g.L, "source.x3_center", f"must lie in (0, {g.L})")

    _require(sv.method in METHODS, "solver.method", f"expected one of {METHODS}, got {sv.method!r}")
    _require(sv.kappa > 0, "solver.kappa", "frequency must be positive")
    alphas = [n * math.pi / g.L for n in range(1, g.N + 1)]
    _require(
        min(abs(sv.kappa - a) for a in alphas) > 1e-6,
        "solver.kappa",
        "frequency sits on a threshold n pi / L; move it slightly",
    )
    _require(sv.n_angles >= 8, "solver.n_angles", "need at least 8 angles")
    _require(sv.n_x3 >= 3, "solver.n_x3", "need at least 3 axial samples")
    _require(sv.tol > 0, "solver.tol", "must be positive")

    T = 2.0 * cfg.support
    _require(0 < r.M < 1.0 / (8.0 * T), "region.M", f"need 0 < M < 1/(8T) = {1 / (8 * T):.6g} with T = {T}")
    _require(r.C0 > alphas[-1], "region.C0", f"C0 must exceed the top threshold alpha_N = {alphas[-1]:.6g}")
    _require(r.re_min < r.re_max, "region.re_max", "need re_min < re_max")
    _require(r.n_re >= 1 and r.n_im >= 1, "region.n_re", "mesh sizes must be >= 1")
    if r.im_min is not None:
        _require(r.im_min <= r.im_max, "region.im_min", "need im_min <= im_max")
    _require(r.floor > 0, "region.floor", "must be positive")

    _require(cfg.eigen.count >= 1, "eigen.count", "must be >= 1")

    if st.A is not None:
        _require(st.A > r.C0, "stability.A", f"window must start above C0 = {r.C0}")
        _require(st.A > 1, "stability.A", "the logarithmic strip needs A > 1")
    if st.A1 is not None:
        _require(st.A is not None, "stability.A", "set A together with A1")
        _require(st.A1 > st.A, "stability.A1", "need A < A1")
    _require(st.d is None or st.d > 0, "stability.d", "must be positive")
    _require(st.Q is None or st.Q > 0, "stability.Q", "must be positive")
    _require(st.c > 0, "stability.c", "must be positive")
    _require(st.smoothness >= 0, "stability.smoothness", "must be >= 0")
    _require(len(st.N1_list) > 0 and min(st.N1_list) >= 1, "stability.N1_list", "need N1 >= 1")
    _require(max(st.N1_list) <= cfg.eigen.count, "stability.N1_list", "N1 cannot exceed eigen.count")
    _require(len(st.noise_list) > 0 and min(st.noise_list) >= 0, "stability.noise_list", "noise levels must be >= 0")
    _require(st.synth_noise >= 0, "stability.synth_noise", "must be >= 0")
    _require(st.window_nodes >= 1, "stability.window_nodes", "must be >= 1")

    bad = [f for f in o.formats if f not in FORMATS]
    _require(not bad, "output.formats", f"unknown formats {bad}; expected a subset of {FORMATS}")
