"""Vector fields, scalar functions and cascade composition.

Every evaluation rule is vectorized: it takes an array of chart points of
shape ``(..., n)`` and returns an array of the same leading shape.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import geometry as geo
from .errors import ConstructionError, InputError, NumericError

Rule = Callable[[np.ndarray], np.ndarray]


class Kind(str, enum.Enum):
    GENERIC = "generic"
    GRADIENT = "gradient"
    MECHANICAL = "mechanical"
    CASCADE = "cascade"


def fd_steps(p: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6, 1e-8 * np.abs(p))


def fd_gradient(fun: Rule, p: np.ndarray) -> np.ndarray:
    """Central-difference gradient of a scalar rule, batched over leading axes."""
    p = np.asarray(p, dtype=float)
    h = fd_steps(p)
    g = np.empty_like(p)
    for i in range(p.shape[-1]):
        e = np.zeros_like(p)
        e[..., i] = h[..., i]
        g[..., i] = (fun(p + e) - fun(p - e)) / (2.0 * h[..., i])
    return g


def fd_jacobian(fun: Rule, p: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian, shape ``(..., n_out, n_in)``."""
    p = np.asarray(p, dtype=float)
    h = fd_steps(p)
    cols = []
    for i in range(p.shape[-1]):
        e = np.zeros_like(p)
        e[..., i] = h[..., i]
        cols.append((fun(p + e) - fun(p - e)) / (2.0 * h[..., i, None]))
    return np.stack(cols, axis=-1)


def _require_pd(name: str, m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ConstructionError(f"{name} must be square, got {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ConstructionError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(m).min() <= 0.0:
        raise ConstructionError(f"{name} is not positive definite")
    return m


@dataclass(frozen=True, eq=False)
class ScalarField:
    space: geo.SpaceSpec
    value: Rule
    gradient: Optional[Rule] = None
    name: str = ""

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self.value(np.asarray(p, dtype=float)), dtype=float)

    def grad(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(p), dtype=float)
        return fd_gradient(self.value, p)


@dataclass(frozen=True, eq=False)
class SystemDef:
    space: geo.SpaceSpec
    field: Rule
    jacobian: Optional[Rule] = None
    kind: Kind = Kind.GENERIC
    name: str = ""

    def __call__(self, p) -> np.ndarray:
        return self.field(p)


def eval_field(sys: SystemDef, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != sys.space.dim:
        raise InputError(f"point has {p.shape[-1]} coordinates, space has {sys.space.dim}")
    v = np.asarray(sys.field(p), dtype=float)
    if not np.all(np.isfinite(v)):
        bad = p if p.ndim == 1 else p[~np.all(np.isfinite(v), axis=-1)][0]
        raise NumericError(f"non-finite field value at {bad.tolist()}", point=bad)
    return v


def jacobian(sys: SystemDef, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if sys.jacobian is not None:
        return np.asarray(sys.jacobian(p), dtype=float)
    return fd_jacobian(sys.field, p)


@dataclass(frozen=True, eq=False)
class CascadeDef:
    """x' = f(x, y), y' = g(y) with inner rest point ``inner_equilibrium``."""

    outer_space: geo.SpaceSpec
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    inner: SystemDef
    inner_equilibrium: np.ndarray
    name: str = ""
    full: SystemDef = field(init=False, repr=False)

    def __post_init__(self):
        y0 = geo.canonicalize(self.inner.space, self.inner_equilibrium)
        object.__setattr__(self, "inner_equilibrium", y0)
        if np.linalg.norm(self.inner.field(y0)) > 1e-10:
            raise ConstructionError(
                f"inner field does not vanish at the inner equilibrium {y0.tolist()}")
        nx = self.outer_space.dim
        f, g = self.f, self.inner.field

        def full_field(z):
            z = np.asarray(z, dtype=float)
            x, y = z[..., :nx], z[..., nx:]
            return np.concatenate([f(x, y), g(y)], axis=-1)

        space = geo.product(self.outer_space, self.inner.space)
        object.__setattr__(self, "full", SystemDef(space, full_field, None, Kind.CASCADE, self.name))

    @property
    def inner_space(self) -> geo.SpaceSpec:
        return self.inner.space

    @property
    def space(self) -> geo.SpaceSpec:
        return self.full.space

    def split(self, z):
        z = np.asarray(z, dtype=float)
        nx = self.outer_space.dim
        return z[..., :nx], z[..., nx:]

    def join(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        y = np.broadcast_to(y, x.shape[:-1] + y.shape[-1:])
        return np.concatenate([x, y], axis=-1)

    def rest(self, x) -> np.ndarray:
        """0_Y broadcast to the batch shape of ``x``."""
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.inner_equilibrium, x.shape[:-1] + self.inner_equilibrium.shape)


def unforced_outer(cas: CascadeDef) -> SystemDef:
    def field_(x):
        return cas.f(x, cas.rest(x))

    return SystemDef(cas.outer_space, field_, None, Kind.GENERIC, f"{cas.name}:unforced-outer")


def interconnection(cas: CascadeDef, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return cas.f(x, y) - cas.f(x, cas.rest(x))


def make_gradient_system(space: geo.SpaceSpec, V: ScalarField, name: str = "") -> SystemDef:
    minv = np.linalg.inv(_require_pd("metric", space.metric))

    def field_(q):
        return -V.grad(q) @ minv.T

    return SystemDef(space, field_, None, Kind.GRADIENT, name)


def make_mechanical_system(spaceQ: geo.SpaceSpec, kappa, nu, V: ScalarField,
                           name: str = "") -> SystemDef:
    """Damped Euler-Lagrange dynamics q'' = -kappa^-1 (grad V(q) + nu q') on TQ."""
    n = spaceQ.dim
    kappa = _require_pd("kappa", kappa)
    nu = _require_pd("nu", nu)
    if kappa.shape != (n, n) or nu.shape != (n, n):
        raise ConstructionError(f"kappa and nu must be {n}x{n}")
    kinv = np.linalg.inv(kappa)
    space = geo.tangent_bundle(spaceQ, kappa)

    def field_(s):
        s = np.asarray(s, dtype=float)
        q, qd = s[..., :n], s[..., n:]
        acc = -(V.grad(q) + qd @ nu.T) @ kinv.T
        return np.concatenate([qd, acc], axis=-1)

    return SystemDef(space, field_, None, Kind.MECHANICAL, name)


def total_energy(kappa, V: ScalarField) -> ScalarField:
    """W(q, q') = V(q) + q'^T kappa q' / 2 on the tangent bundle of V's space."""
    kappa = _require_pd("kappa", kappa)
    n = V.space.dim
    space = geo.tangent_bundle(V.space, kappa)

    def value(s):
        q, qd = s[..., :n], s[..., n:]
        return V(q) + 0.5 * np.einsum("...i,ij,...j->...", qd, kappa, qd)

    def gradient(s):
        q, qd = s[..., :n], s[..., n:]
        return np.concatenate([V.grad(q), qd @ kappa.T], axis=-1)

    return ScalarField(space, value, gradient, f"energy[{V.name}]")


def lie_derivative(Wf: ScalarField, v, p) -> np.ndarray:
    return np.sum(Wf.grad(p) * np.asarray(v, dtype=float), axis=-1)
