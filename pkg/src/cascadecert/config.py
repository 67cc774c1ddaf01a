"""JSON run configuration: schema validation, defaults, inline systems.

A config names a system (a built-in example or an inline definition from
expressions) and carries one parameter block per command.  Validation reports
the first problem together with its key path, e.g. ``$.chainrec.epsilonn``.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

from . import geometry as geo
from .certify import CertifyParams
from .dynamics import CascadeDef, ScalarField, SystemDef
from .errors import ConfigError, InputError
from .expressions import compile_jacobian, compile_scalar, compile_vector
from .systems import EXAMPLES, GrowthCertificate

SCHEMA_VERSION = 1
DEFAULT_LINE_BOUNDS = (-4.0, 4.0)


@dataclass
class SimulateBlock:
    # list of initial conditions; the CLI --from flag appends to it
    from_: Optional[list] = None
    t: float = 10.0
    tol: float = 1e-9
    samples: int = 1001
    axes: Optional[list] = None


@dataclass
class EquilibriaBlock:
    region: Optional[list] = None
    grid_per_dim: int = 8
    newton_tol: float = 1e-10
    hyp_tol: float = 1e-6


@dataclass
class ChainrecBlock:
    region: Optional[list] = None
    depth: int = 6
    rounds: int = 3
    T: Optional[float] = None
    epsilon: Optional[float] = None
    samples_per_box: Optional[int] = None
    tol: float = 1e-6
    axes: Optional[list] = None


@dataclass
class BasinBlock:
    region: Optional[list] = None
    n: int = 10_000
    horizon: float = 100.0
    conv_tol: float = 1e-3
    tol: float = 1e-6
    threshold: float = 0.999
    target: Optional[list] = None
    axes: Optional[list] = None


@dataclass
class CertifyBlock:
    inner_region: Optional[list] = None
    outer_region: Optional[list] = None
    outer_equilibrium_region: Optional[list] = None
    chain_region: Optional[list] = None
    cascade_region: Optional[list] = None
    outer_target: Optional[list] = None
    axes: Optional[list] = None
    params: CertifyParams = field(default_factory=CertifyParams)


@dataclass
class SubsystemSpec:
    space: list
    variables: list
    field: list
    metric: Optional[list] = None


@dataclass
class InlineSystem:
    name: str = "inline"
    kind: str = "standalone"  # "standalone" | "cascade"
    # standalone systems
    space: Optional[list] = None
    variables: Optional[list] = None
    field: Optional[list] = None
    metric: Optional[list] = None
    # cascades: outer field expressions may use inner variables too
    outer: Optional[SubsystemSpec] = None
    inner: Optional[SubsystemSpec] = None
    inner_equilibrium: Optional[list] = None
    lyapunov: Optional[str] = None


@dataclass
class CertificateSpec:
    W: str
    alpha: str
    beta: str = "0"
    c: float = 0.0


@dataclass
class RunConfig:
    system: Union[str, InlineSystem]
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    output: str = "cascadecert-out"
    certificate: Optional[CertificateSpec] = None
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    equilibria: EquilibriaBlock = field(default_factory=EquilibriaBlock)
    chainrec: ChainrecBlock = field(default_factory=ChainrecBlock)
    basin: BasinBlock = field(default_factory=BasinBlock)
    certify: CertifyBlock = field(default_factory=CertifyBlock)


BLOCKS = {"simulate": SimulateBlock, "equilibria": EquilibriaBlock, "chainrec": ChainrecBlock,
          "basin": BasinBlock, "certify": CertifyBlock}


def _key(name: str) -> str:
    return name.rstrip("_")


def block_keys(block_cls) -> list[str]:
    """JSON keys accepted by a parameter block (certify params are flattened)."""
    keys = [_key(f.name) for f in dataclasses.fields(block_cls) if f.name != "params"]
    if block_cls is CertifyBlock:
        keys += [f.name for f in dataclasses.fields(CertifyParams) if f.name != "seed"]
    return keys


def _check_type(value, tp, path):
    """Validate ``value`` against a simple type annotation; returns the coerced value."""
    origin = typing.get_origin(tp)
    if origin is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _check_type(value, args[0], path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {json.dumps(value)}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {json.dumps(value)}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {json.dumps(value)}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {json.dumps(value)}")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {json.dumps(value)}")
        return value
    raise ConfigError(path, f"unsupported field type {tp}")


def _build(cls, data, path, skip=()):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {json.dumps(data)}")
    hints = typing.get_type_hints(cls)
    fields = {_key(f.name): f for f in dataclasses.fields(cls) if f.name not in skip}
    for k in data:
        if k not in fields:
            raise ConfigError(f"{path}.{k}", "unknown key")
    kwargs = {}
    for k, f in fields.items():
        if k in data:
            kwargs[f.name] = _check_type(data[k], hints[f.name], f"{path}.{k}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{path}.{k}", "required key is missing")
    return cls(**kwargs)


def _check_number_list(value, path, length=None):
    if value is None:
        return
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(path, "expected a list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(path, f"expected {length} numbers, got {len(value)}")


def _check_region(value, path, space: Optional[geo.SpaceSpec]):
    if value is None:
        return
    if not isinstance(value, list):
        raise ConfigError(path, "a region is a list with null for circle factors and [lo, hi] for line factors")
    for i, b in enumerate(value):
        if b is not None:
            _check_number_list(b, f"{path}[{i}]", 2)
    if space is not None:
        try:
            geo.RegionSpec(space, tuple(value))
        except InputError as exc:
            raise ConfigError(path, str(exc)) from None


def _parse_block(name, data, path):
    cls = BLOCKS[name]
    if cls is CertifyBlock:
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected an object, got {json.dumps(data)}")
        own = {_key(f.name) for f in dataclasses.fields(CertifyBlock)} - {"params"}
        pnames = {f.name for f in dataclasses.fields(CertifyParams)} - {"seed"}
        for k in data:
            if k not in own and k not in pnames:
                raise ConfigError(f"{path}.{k}", "unknown key")
        block = _build(CertifyBlock, {k: v for k, v in data.items() if k in own}, path, skip=("params",))
        block.params = _build(CertifyParams, {k: v for k, v in data.items() if k in pnames}, path,
                              skip=("seed",))
        return block
    return _build(cls, data, path)


def _parse_subsystem(data, path) -> SubsystemSpec:
    sub = _build(SubsystemSpec, data, path)
    _validate_subsystem(sub.space, sub.variables, sub.field, sub.metric, path)
    return sub


def _validate_subsystem(space, variables, fields, metric, path):
    if not space or not all(s in ("circle", "line") for s in space):
        raise ConfigError(f"{path}.space", 'expected a non-empty list of "circle" / "line"')
    if not variables or len(variables) != len(space) or not all(isinstance(v, str) for v in variables):
        raise ConfigError(f"{path}.variables", "need one variable name per factor")
    if len(set(variables)) != len(variables):
        raise ConfigError(f"{path}.variables", "variable names must be distinct")
    if not fields or len(fields) != len(space) or not all(isinstance(e, str) for e in fields):
        raise ConfigError(f"{path}.field", "need one expression per factor")
    if metric is not None:
        try:
            geo.SpaceSpec(tuple(space), np.asarray(metric, dtype=float).reshape(len(space), len(space)))
        except (InputError, ValueError) as exc:
            raise ConfigError(f"{path}.metric", str(exc)) from None


def _parse_inline(data, path) -> InlineSystem:
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a built-in example name or an inline system object")
    data = dict(data)
    sub = {}
    for part in ("outer", "inner"):
        if part in data and data[part] is not None:
            sub[part] = _parse_subsystem(data.pop(part), f"{path}.{part}")
    sys = _build(InlineSystem, data, path)
    sys.outer, sys.inner = sub.get("outer"), sub.get("inner")
    if sys.kind == "standalone":
        _validate_subsystem(sys.space, sys.variables, sys.field, sys.metric, path)
    elif sys.kind == "cascade":
        if sys.outer is None or sys.inner is None:
            raise ConfigError(path, "a cascade needs both outer and inner blocks")
        _check_number_list(sys.inner_equilibrium, f"{path}.inner_equilibrium", len(sys.inner.space))
    else:
        raise ConfigError(f"{path}.kind", 'expected "standalone" or "cascade"')
    return sys


def parse_config(doc: Union[str, bytes, dict]) -> RunConfig:
    """Validate a JSON document (text or already-decoded object) into a RunConfig."""
    if isinstance(doc, (str, bytes)):
        try:
            data = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON: {exc}") from None
    else:
        data = doc
    if not isinstance(data, dict):
        raise ConfigError("$", "top level must be an object")
    top = {"schema_version", "system", "seed", "output", "certificate", *BLOCKS}
    for k in data:
        if k not in top:
            raise ConfigError(f"$.{k}", "unknown key")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("$.schema_version", f"unsupported schema version {version!r}")
    if "system" not in data:
        raise ConfigError("$.system", "required key is missing")
    raw_sys = data["system"]
    if isinstance(raw_sys, str):
        if raw_sys not in EXAMPLES:
            raise ConfigError("$.system", f"unknown built-in system {raw_sys!r}; try list-examples")
        system: Union[str, InlineSystem] = raw_sys
        defaults = EXAMPLES[raw_sys].defaults
    else:
        system = _parse_inline(raw_sys, "$.system")
        defaults = {}
    seed = _check_type(data.get("seed", 0), int, "$.seed")
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("$.seed", "seed must be an unsigned 64-bit integer")
    output = _check_type(data.get("output", "cascadecert-out"), str, "$.output")
    cert = None
    if data.get("certificate") is not None:
        cert = _build(CertificateSpec, data["certificate"], "$.certificate")
    blocks = {}
    for name in BLOCKS:
        user = data.get(name, {})
        if not isinstance(user, dict):
            raise ConfigError(f"$.{name}", "expected an object")
        merged = {**defaults.get(name, {}), **user}
        blocks[name] = _parse_block(name, merged, f"$.{name}")
    cfg = RunConfig(system=system, schema_version=version, seed=seed, output=output,
                    certificate=cert, **blocks)
    _validate_shapes(cfg)
    return cfg


def _validate_shapes(cfg: RunConfig):
    """Check region and point dimensions against the selected system."""
    spaces = system_spaces(cfg)
    full = spaces["full"]
    sim = cfg.simulate
    if sim.from_ is not None:
        if not isinstance(sim.from_, list):
            raise ConfigError("$.simulate.from", "expected a list of initial conditions")
        for i, p in enumerate(sim.from_):
            _check_number_list(p, f"$.simulate.from[{i}]", full.dim)
    for block, key in [("equilibria", "region"), ("chainrec", "region"), ("basin", "region")]:
        _check_region(getattr(getattr(cfg, block), key), f"$.{block}.{key}", full)
    _check_number_list(cfg.basin.target, "$.basin.target", full.dim)
    for name in ("simulate", "chainrec", "basin", "certify"):
        axes = getattr(cfg, name).axes
        if axes is not None:
            _check_axes(axes, f"$.{name}.axes")
    if "outer" in spaces:
        c = cfg.certify
        for key, sp in [("inner_region", spaces["inner"]), ("outer_region", spaces["outer"]),
                        ("outer_equilibrium_region", spaces["outer"]),
                        ("chain_region", spaces["outer"]), ("cascade_region", full)]:
            _check_region(getattr(c, key), f"$.certify.{key}", sp)
        _check_number_list(c.outer_target, "$.certify.outer_target", spaces["outer"].dim)
        for i, p in enumerate(c.params.extra_initial_conditions):
            _check_number_list(p, f"$.certify.extra_initial_conditions[{i}]", full.dim)
    for key in ("n", "samples", "grid_per_dim", "depth"):
        for name in BLOCKS:
            blk = getattr(cfg, name)
            if hasattr(blk, key) and getattr(blk, key) < 1:
                raise ConfigError(f"$.{name}.{key}", "must be positive")


def _check_axes(axes, path):
    if (not isinstance(axes, list) or len(axes) != 2
            or not all(isinstance(a, int) and not isinstance(a, bool) for a in axes)):
        raise ConfigError(path, "expected two integer coordinate indices")


def to_dict(cfg: RunConfig) -> dict:
    """Plain-JSON form with every value explicit; parse_config(to_dict(cfg)) == cfg."""
    out: dict[str, Any] = {"schema_version": cfg.schema_version, "seed": cfg.seed, "output": cfg.output}
    if isinstance(cfg.system, str):
        out["system"] = cfg.system
    else:
        s = {_key(k): v for k, v in dataclasses.asdict(cfg.system).items()}
        out["system"] = s
    out["certificate"] = None if cfg.certificate is None else dataclasses.asdict(cfg.certificate)
    for name in BLOCKS:
        blk = getattr(cfg, name)
        d = {_key(f.name): getattr(blk, f.name) for f in dataclasses.fields(blk) if f.name != "params"}
        if isinstance(blk, CertifyBlock):
            d.update({k: v for k, v in dataclasses.asdict(blk.params).items() if k != "seed"})
        out[name] = d
    return out


def serialize(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, indent=2)


def _space(factors, metric) -> geo.SpaceSpec:
    m = None if metric is None else np.asarray(metric, dtype=float).reshape(len(factors), len(factors))
    return geo.SpaceSpec(tuple(factors), m)


def _inline_standalone(s: InlineSystem) -> SystemDef:
    space = _space(s.space, s.metric)
    rule = compile_vector(s.field, s.variables)
    return SystemDef(space, rule, compile_jacobian(s.field, s.variables), name=s.name)


def _join(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    return np.concatenate([np.broadcast_to(x, shape + x.shape[-1:]),
                           np.broadcast_to(y, shape + y.shape[-1:])], axis=-1)


def _inline_cascade(s: InlineSystem) -> CascadeDef:
    outer_space = _space(s.outer.space, s.outer.metric)
    inner_space = _space(s.inner.space, s.inner.metric)
    inner = SystemDef(inner_space, compile_vector(s.inner.field, s.inner.variables),
                      compile_jacobian(s.inner.field, s.inner.variables), name=f"{s.name}-inner")
    outer_rule = compile_vector(s.outer.field, list(s.outer.variables) + list(s.inner.variables))

    def f(x, y):
        return outer_rule(_join(x, y))

    y0 = np.zeros(inner_space.dim) if s.inner_equilibrium is None else np.asarray(s.inner_equilibrium, float)
    return CascadeDef(outer_space, f, inner, y0, s.name)


def build_system(cfg: RunConfig) -> Union[SystemDef, CascadeDef]:
    if isinstance(cfg.system, str):
        return EXAMPLES[cfg.system].build()
    try:
        if cfg.system.kind == "cascade":
            return _inline_cascade(cfg.system)
        return _inline_standalone(cfg.system)
    except InputError as exc:
        raise ConfigError("$.system", str(exc)) from None


def system_spaces(cfg: RunConfig) -> dict:
    """Spaces of the selected system without evaluating any field."""
    s = cfg.system
    if isinstance(s, str):
        built = EXAMPLES[s].build()
        if isinstance(built, CascadeDef):
            return {"full": built.space, "outer": built.outer_space, "inner": built.inner_space}
        return {"full": built.space}
    try:
        if s.kind == "cascade":
            outer = _space(s.outer.space, s.outer.metric)
            inner = _space(s.inner.space, s.inner.metric)
            return {"full": geo.product(outer, inner), "outer": outer, "inner": inner}
        return {"full": _space(s.space, s.metric)}
    except (InputError, ValueError) as exc:
        raise ConfigError("$.system", str(exc)) from None


def variable_names(cfg: RunConfig) -> list[str]:
    s = cfg.system
    if isinstance(s, str):
        names = EXAMPLES[s].variables
        dim = system_spaces(cfg)["full"].dim
        return list(names) if len(names) == dim else [f"coord_{i}" for i in range(dim)]
    if s.kind == "cascade":
        return list(s.outer.variables) + list(s.inner.variables)
    return list(s.variables)


def build_lyapunov(cfg: RunConfig) -> Optional[ScalarField]:
    """V for standalone systems, the outer-loop W for cascades; None if unavailable."""
    s = cfg.system
    if isinstance(s, str):
        ex = EXAMPLES[s]
        return ex.lyapunov() if ex.lyapunov is not None else None
    if s.lyapunov is None:
        return None
    if s.kind == "cascade":
        space, names = _space(s.outer.space, s.outer.metric), s.outer.variables
    else:
        space, names = _space(s.space, s.metric), s.variables
    try:
        value, grad = compile_scalar(s.lyapunov, names)
    except InputError as exc:
        raise ConfigError("$.system.lyapunov", str(exc)) from None
    return ScalarField(space, value, grad, s.lyapunov)


def build_certificate(cfg: RunConfig, cas: CascadeDef) -> Optional[GrowthCertificate]:
    spec = cfg.certificate
    if spec is None:
        if isinstance(cfg.system, str) and EXAMPLES[cfg.system].certificate is not None:
            return EXAMPLES[cfg.system].certificate()
        return None
    names = variable_names(cfg)
    nx = cas.outer_space.dim
    out_names, in_names = names[:nx], names[nx:]
    fields = []
    for key, vars_, space in [("W", out_names, cas.outer_space), ("alpha", in_names, cas.inner_space),
                              ("beta", in_names, cas.inner_space)]:
        try:
            value, grad = compile_scalar(getattr(spec, key), vars_)
        except InputError as exc:
            raise ConfigError(f"$.certificate.{key}", str(exc)) from None
        fields.append(ScalarField(space, value, grad, getattr(spec, key)))
    return GrowthCertificate(*fields, spec.c)


def region(cfg_region, space: geo.SpaceSpec) -> geo.RegionSpec:
    """RegionSpec from a config list; missing line bounds fall back to DEFAULT_LINE_BOUNDS."""
    if cfg_region is None:
        cfg_region = [None if f is geo.Factor.CIRCLE else list(DEFAULT_LINE_BOUNDS) for f in space.factors]
    return geo.RegionSpec(space, tuple(None if b is None else tuple(b) for b in cfg_region))
