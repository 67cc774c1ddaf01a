"""Flat product manifolds built from circle and line factors.

Points are stored in chart coordinates: radians for circle factors and plain
reals for line factors.  All functions accept a single point of shape ``(n,)``
or a batch of shape ``(..., n)`` and broadcast over the leading axes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConstructionError, InputError, NumericError

TWO_PI = 2.0 * np.pi


class Factor(str, enum.Enum):
    CIRCLE = "circle"
    LINE = "line"


@dataclass(frozen=True, eq=False)
class SpaceSpec:
    """Product of circle/line factors carrying a constant (flat) metric."""

    factors: tuple[Factor, ...]
    metric: np.ndarray = field(default=None)

    def __post_init__(self):
        factors = tuple(Factor(f) for f in self.factors)
        object.__setattr__(self, "factors", factors)
        n = len(factors)
        if n == 0:
            raise ConstructionError("space needs at least one factor")
        metric = np.eye(n) if self.metric is None else np.array(self.metric, dtype=float)
        if metric.shape != (n, n):
            raise ConstructionError(
                f"metric shape {metric.shape} does not match {n} factors")
        if not np.allclose(metric, metric.T, rtol=0.0, atol=1e-12):
            raise ConstructionError("metric is not symmetric")
        if np.linalg.eigvalsh(metric).min() <= 0.0:
            raise ConstructionError("metric is not positive definite")
        metric.setflags(write=False)
        object.__setattr__(self, "metric", metric)
        circle = np.array([f is Factor.CIRCLE for f in factors])
        circle.setflags(write=False)
        object.__setattr__(self, "_circle", circle)

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def circle_mask(self) -> np.ndarray:
        return self._circle

    def __eq__(self, other):
        if not isinstance(other, SpaceSpec):
            return NotImplemented
        return self.factors == other.factors and np.array_equal(self.metric, other.metric)

    def __hash__(self):
        return hash((self.factors, self.metric.tobytes()))

    def __repr__(self):
        names = "x".join("S1" if f is Factor.CIRCLE else "R" for f in self.factors)
        return f"SpaceSpec({names})"


def product(*spaces: SpaceSpec) -> SpaceSpec:
    """Cartesian product with the block-diagonal metric."""
    factors = tuple(f for s in spaces for f in s.factors)
    n = len(factors)
    metric = np.zeros((n, n))
    k = 0
    for s in spaces:
        metric[k:k + s.dim, k:k + s.dim] = s.metric
        k += s.dim
    return SpaceSpec(factors, metric)


def tangent_bundle(base: SpaceSpec, kappa=None) -> SpaceSpec:
    """TQ identified with Q x R^n; fibers carry the kinetic metric ``kappa``."""
    kappa = base.metric if kappa is None else np.asarray(kappa, dtype=float)
    fiber = SpaceSpec((Factor.LINE,) * base.dim, kappa)
    return product(base, fiber)


def _check_dim(space: SpaceSpec, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] != space.dim:
        raise InputError(f"expected coordinates of length {space.dim}, got shape {p.shape}")
    return p


def wrap_angle(a):
    """Map angles to [-pi, pi); the tie at +pi goes to -pi."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, TWO_PI) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    w = np.where(w >= np.pi, -np.pi, w)
    # leave canonical values bit-for-bit unchanged
    return np.where((a >= -np.pi) & (a < np.pi), a, w)


def canonicalize(space: SpaceSpec, p) -> np.ndarray:
    p = _check_dim(space, p)
    if not space.circle_mask.any():
        return p.copy()
    out = p.copy()
    out[..., space.circle_mask] = wrap_angle(p[..., space.circle_mask])
    return out


def difference(space: SpaceSpec, p, q) -> np.ndarray:
    """Chart displacement q - p with circle components taken along the shorter arc."""
    p = _check_dim(space, p)
    q = _check_dim(space, q)
    d = q - p
    if space.circle_mask.any():
        d[..., space.circle_mask] = wrap_angle(d[..., space.circle_mask])
    return d


def norm(space: SpaceSpec, v) -> np.ndarray:
    v = _check_dim(space, v)
    sq = np.einsum("...i,ij,...j->...", v, space.metric, v)
    return np.sqrt(np.maximum(sq, 0.0))


def dist(space: SpaceSpec, p, q) -> np.ndarray:
    """Geodesic distance of the flat product metric."""
    return norm(space, difference(space, p, q))


def step_point(space: SpaceSpec, p, v, dt: float) -> np.ndarray:
    p = _check_dim(space, p)
    v = _check_dim(space, v)
    if not np.isfinite(dt) or not np.all(np.isfinite(p)) or not np.all(np.isfinite(v)):
        raise NumericError("non-finite input to step_point", point=p)
    return canonicalize(space, p + dt * v)


@dataclass(frozen=True, eq=False)
class RegionSpec:
    """Compact search window: full circle on circle factors, [lo, hi] on line factors."""

    space: SpaceSpec
    bounds: tuple = ()

    def __post_init__(self):
        bounds = tuple(self.bounds) if self.bounds else (None,) * self.space.dim
        if len(bounds) != self.space.dim:
            raise InputError(f"region has {len(bounds)} bounds for a {self.space.dim}-dim space")
        fixed = []
        for i, (f, b) in enumerate(zip(self.space.factors, bounds)):
            if f is Factor.CIRCLE:
                fixed.append(None)
                continue
            if b is None:
                raise InputError(f"line factor {i} needs bounds [lo, hi]")
            lo, hi = float(b[0]), float(b[1])
            if not lo < hi:
                raise InputError(f"line factor {i}: need lo < hi, got [{lo}, {hi}]")
            fixed.append((lo, hi))
        object.__setattr__(self, "bounds", tuple(fixed))

    @property
    def lows(self) -> np.ndarray:
        return np.array([-np.pi if b is None else b[0] for b in self.bounds])

    @property
    def highs(self) -> np.ndarray:
        return np.array([np.pi if b is None else b[1] for b in self.bounds])

    def contains(self, p) -> np.ndarray:
        p = _check_dim(self.space, p)
        line = ~self.space.circle_mask
        inside = (p[..., line] >= self.lows[line]) & (p[..., line] <= self.highs[line])
        return np.all(inside, axis=-1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform samples; rows are drawn sequentially so smaller n gives a prefix."""
        u = rng.random((n, self.space.dim))
        return canonicalize(self.space, self.lows + u * (self.highs - self.lows))

    def scaled(self, factor: float) -> "RegionSpec":
        """Same region with every line interval scaled about its midpoint."""
        new = []
        for b in self.bounds:
            if b is None:
                new.append(None)
            else:
                mid, half = 0.5 * (b[0] + b[1]), 0.5 * (b[1] - b[0])
                new.append((mid - factor * half, mid + factor * half))
        return RegionSpec(self.space, tuple(new))

    def to_json(self) -> list:
        return [None if b is None else [b[0], b[1]] for b in self.bounds]


def region_from_bounds(space: SpaceSpec, bounds: Sequence) -> RegionSpec:
    return RegionSpec(space, tuple(bounds))
