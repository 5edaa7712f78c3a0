"""TOML study configuration.

Schema (all sections optional unless noted):

    problem = "example1"            # example1 | example2 | custom
    degrees = [2, 3]
    terms = [[1.0, 2, 0], [1.0, 0, 2]]   # custom problems: coeff, x-exp, y-exp

    [mesh]
    family = "voronoi"              # voronoi | agglomerated | grid | file
    sizes = [64, 256, 1024]         # strictly increasing; meaning per family:
                                    #   voronoi: cell counts
                                    #   agglomerated: target aggregate counts
                                    #   grid: subdivisions per side (2 n^2 triangles)
    seed = 42
    lloyd_iters = 100
    fine_n = 256                    # agglomerated only: fine grid subdivisions
    domain = [0.0, 0.0, 1.0, 1.0]
    path = "mesh.txt"               # family = "file" only

    [penalty]
    regime = "BoundedFaces"         # or "ArbitraryFaces"
    c_sigma = 10.0
    c_tau = 10.0
    c_inv1 = 1.0
    c_inv2 = 1.0
    p_coverable = true
    allow_any_p = false

    [solve]
    tol = 1e-10
    method = "auto"                 # auto | cholesky | splu | cg
    max_iter = 0                    # 0 = solver default
    estimate_condition = true

    [verify]
    n_triangles = 1000
    p_max = 6
    harmonic = true

    [output]
    directory = "out"
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .penalty import ARBITRARY, BOUNDED
from .problems import get_problem


class ConfigError(ValueError):
    pass


_FAMILIES = ("voronoi", "agglomerated", "grid", "file")


@dataclass
class MeshConfig:
    family: str = "voronoi"
    sizes: list = field(default_factory=lambda: [64, 256, 1024])
    seed: int = 42
    lloyd_iters: int = 100
    fine_n: int = 256
    domain: tuple = (0.0, 0.0, 1.0, 1.0)
    path: str | None = None


@dataclass
class PenaltyConfig:
    regime: str = BOUNDED
    c_sigma: float = 10.0
    c_tau: float = 10.0
    c_inv1: float = 1.0
    c_inv2: float = 1.0
    p_coverable: bool = True
    allow_any_p: bool = False


@dataclass
class SolveConfig:
    tol: float = 1e-10
    method: str = "auto"
    max_iter: int | None = None
    estimate_condition: bool = True


@dataclass
class VerifyConfig:
    n_triangles: int = 1000
    p_max: int = 6
    harmonic: bool = True


@dataclass
class StudyConfig:
    problem: str = "example1"
    terms: list | None = None
    degrees: list = field(default_factory=lambda: [2, 3])
    mesh: MeshConfig = field(default_factory=MeshConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    solve: SolveConfig = field(default_factory=SolveConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: str = "out"

    def problem_instance(self):
        return get_problem(self.problem, self.terms)


def _fill(cls, data: dict, where: str):
    known = {f: None for f in cls.__dataclass_fields__}
    extra = set(data) - set(known)
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(extra)}")
    return cls(**data)


def validate(cfg: StudyConfig) -> StudyConfig:
    try:
        cfg.problem_instance()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.mesh.family not in _FAMILIES:
        raise ConfigError(f"mesh.family must be one of {_FAMILIES}")
    sizes = list(cfg.mesh.sizes)
    if not sizes or any(s2 <= s1 for s1, s2 in zip(sizes, sizes[1:])):
        raise ConfigError("mesh.sizes must be non-empty and strictly increasing")
    if any(int(s) < 1 for s in sizes):
        raise ConfigError("mesh.sizes entries must be positive")
    if cfg.mesh.family == "file" and not cfg.mesh.path:
        raise ConfigError("mesh.family = 'file' needs mesh.path")
    if not cfg.degrees or any(int(p) < 2 for p in cfg.degrees):
        raise ConfigError("degrees must be a non-empty list of integers >= 2")
    if cfg.penalty.regime not in (BOUNDED, ARBITRARY):
        raise ConfigError(f"penalty.regime must be {BOUNDED!r} or {ARBITRARY!r}")
    if cfg.penalty.regime == ARBITRARY and not cfg.penalty.allow_any_p:
        bad = [p for p in cfg.degrees if int(p) not in (2, 3)]
        if bad:
            raise ConfigError(
                f"degrees {bad} need penalty.regime = {BOUNDED!r} "
                "(or penalty.allow_any_p = true)"
            )
    if cfg.solve.method not in ("auto", "cholesky", "splu", "cg"):
        raise ConfigError("solve.method must be auto, cholesky, splu or cg")
    if cfg.solve.tol <= 0:
        raise ConfigError("solve.tol must be positive")
    x0, y0, x1, y1 = cfg.mesh.domain
    if not (x1 > x0 and y1 > y0):
        raise ConfigError("mesh.domain must be (x0, y0, x1, y1) with positive extent")
    return cfg


def from_dict(data: dict) -> StudyConfig:
    data = dict(data)
    sections = {}
    for name, cls in (("mesh", MeshConfig), ("penalty", PenaltyConfig),
                      ("solve", SolveConfig), ("verify", VerifyConfig)):
        raw = data.pop(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{name}] must be a table")
        if name == "solve" and raw.get("max_iter") == 0:
            raw = {k: v for k, v in raw.items() if k != "max_iter"}
        sections[name] = _fill(cls, raw, name)
    out_raw = data.pop("output", "out")
    if isinstance(out_raw, dict):
        out_raw = out_raw.get("directory", "out")
    top = {"problem": data.pop("problem", "example1"),
           "terms": data.pop("terms", None),
           "degrees": [int(p) for p in data.pop("degrees", [2, 3])]}
    if data:
        raise ConfigError(f"unknown top-level key(s): {sorted(data)}")
    cfg = StudyConfig(**top, **sections, output=str(out_raw))
    cfg.mesh.sizes = [int(s) for s in cfg.mesh.sizes]
    cfg.mesh.domain = tuple(float(v) for v in cfg.mesh.domain)
    return validate(cfg)


def load_config(path) -> StudyConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    with open(p, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
    return from_dict(data)
