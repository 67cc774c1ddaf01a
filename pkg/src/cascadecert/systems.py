"""Built-in example systems addressable by name from the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import geometry as geo
from .dynamics import (CascadeDef, Kind, ScalarField, SystemDef, make_gradient_system,
                       make_mechanical_system, total_energy)

C, L = geo.Factor.CIRCLE, geo.Factor.LINE
CIRCLE = geo.SpaceSpec((C,))
TS1 = geo.tangent_bundle(CIRCLE)
PLANE = geo.SpaceSpec((L, L))
LINE = geo.SpaceSpec((L,))


@dataclass(frozen=True, eq=False)
class GrowthCertificate:
    """Candidate W on X and alpha, beta on Y with level threshold c."""

    W: ScalarField
    alpha: ScalarField
    beta: ScalarField
    c: float


@dataclass(frozen=True)
class Example:
    name: str
    description: str
    build: Callable[[], Union[SystemDef, CascadeDef]]
    lyapunov: Optional[Callable[[], ScalarField]] = None
    certificate: Optional[Callable[[], GrowthCertificate]] = None
    # default config blocks, merged under user-supplied values
    defaults: dict = field(default_factory=dict)
    variables: tuple = ()


def cosine_potential(space=CIRCLE) -> ScalarField:
    """V(q) = sum(1 - cos q_i)."""
    return ScalarField(space, lambda q: np.sum(1.0 - np.cos(q), axis=-1), np.sin, "1-cos")


def pendulum() -> SystemDef:
    sys = make_mechanical_system(CIRCLE, [[1.0]], [[1.0]], cosine_potential(), "pendulum")
    return sys


def pendulum_energy() -> ScalarField:
    return total_energy([[1.0]], cosine_potential())


def gradient_circle() -> SystemDef:
    return make_gradient_system(CIRCLE, cosine_potential(), "gradient-circle")


def undamped_pendulum() -> SystemDef:
    def f(s):
        return np.stack([s[..., 1], -np.sin(s[..., 0])], axis=-1)
    return SystemDef(TS1, f, None, Kind.GENERIC, "undamped-pendulum")


def harmonic_oscillator() -> SystemDef:
    def f(s):
        return np.stack([s[..., 1], -s[..., 0]], axis=-1)
    return SystemDef(PLANE, f, lambda s: np.broadcast_to(np.array([[0.0, 1.0], [-1.0, 0.0]]),
                                                         s.shape[:-1] + (2, 2)),
                     Kind.GENERIC, "harmonic-oscillator")


def quadratic_energy(space=PLANE) -> ScalarField:
    return ScalarField(space, lambda s: 0.5 * np.sum(s * s, axis=-1), lambda s: s.copy(),
                       "|s|^2/2")


def limit_cycle() -> SystemDef:
    def f(s):
        x, y = s[..., 0], s[..., 1]
        r2 = 1.0 - x * x - y * y
        return np.stack([-y + x * r2, x + y * r2], axis=-1)
    return SystemDef(PLANE, f, None, Kind.GENERIC, "limit-cycle")


def linear_stable() -> SystemDef:
    return SystemDef(LINE, lambda s: -s, lambda s: -np.ones(s.shape[:-1] + (1, 1)),
                     Kind.GENERIC, "linear-stable")


def _modulated_outer(x, y):
    theta, thetadot = x[..., 0], x[..., 1]
    phi = y[..., 0]
    return np.stack([thetadot, -(np.sin(theta) + thetadot) * np.cos(2.0 * phi)], axis=-1)


def torus_cascade() -> CascadeDef:
    return CascadeDef(TS1, _modulated_outer, pendulum(), np.zeros(2), "paper-example")


def outer_energy() -> ScalarField:
    """W(theta, thetadot) = 1 - cos(theta) + thetadot^2 / 2."""
    return pendulum_energy()


def torus_certificate(alpha_scale: float = 4.0, c: float = 4.0) -> GrowthCertificate:
    def alpha(y):
        return alpha_scale * (1.0 - np.cos(2.0 * y[..., 0]))

    def alpha_grad(y):
        return np.stack([2.0 * alpha_scale * np.sin(2.0 * y[..., 0]), np.zeros_like(y[..., 1])],
                        axis=-1)

    zero = ScalarField(TS1, lambda y: np.zeros(y.shape[:-1]), lambda y: np.zeros_like(y), "0")
    return GrowthCertificate(outer_energy(), ScalarField(TS1, alpha, alpha_grad, "alpha"), zero, c)


def undamped_inner_cascade() -> CascadeDef:
    return CascadeDef(TS1, _modulated_outer, undamped_pendulum(), np.zeros(2), "undamped-inner-cascade")


def limit_cycle_cascade() -> CascadeDef:
    lc = limit_cycle()

    def f(x, y):
        # inner coupling enters the radial growth and vanishes at phi = 0
        return lc.field(x) + (1.0 - np.cos(2.0 * y[..., :1])) * np.stack(
            [np.zeros_like(x[..., 0]), x[..., 1]], axis=-1)
    return CascadeDef(PLANE, f, pendulum(), np.zeros(2), "limit-cycle-cascade")


def unbounded_cascade() -> CascadeDef:
    def f(x, y):
        theta, thetadot = x[..., 0], x[..., 1]
        phi = y[..., 0]
        return np.stack([thetadot, -(np.sin(theta) + thetadot) + phi ** 2 * thetadot ** 3],
                        axis=-1)
    return CascadeDef(TS1, f, pendulum(), np.zeros(2), "unbounded-cascade")


def decoupled_cascade() -> CascadeDef:
    def f(x, y):
        return pendulum().field(x)
    return CascadeDef(TS1, f, pendulum(), np.zeros(2), "decoupled-cascade")


def _lc_certificate() -> GrowthCertificate:
    def alpha(y):
        return 4.0 * (1.0 - np.cos(2.0 * y[..., 0]))
    zero = ScalarField(TS1, lambda y: np.zeros(y.shape[:-1]), lambda y: np.zeros_like(y), "0")
    return GrowthCertificate(quadratic_energy(), ScalarField(TS1, alpha, None, "alpha"), zero, 4.0)


# Reference initial conditions (theta, thetadot, phi, phidot) for the torus cascade
REFERENCE_INITIAL_CONDITIONS = (
    (1.618, 3.4072, 1.5977, 3.1428),
    (5.5617, 4.1329, 5.0026, -4.0129),
    (1.4482, 3.4431, 1.2237, -2.7408),
)

_CASCADE_BLOCKS = {
    "equilibria": {"region": [None, [-5.0, 5.0], None, [-5.0, 5.0]]},
    "basin": {"region": [None, [-4.0, 4.0], None, [-4.0, 4.0]], "horizon": 200.0,
              "threshold": 0.99},
    "simulate": {"from": [[1.618, 3.4072, 1.5977, 3.1428]], "t": 60.0, "axes": [0, 2]},
    "certify": {
        "inner_region": [None, [-4.0, 4.0]],
        "outer_region": [None, [-4.0, 4.0]],
        "outer_equilibrium_region": [None, [-5.0, 5.0]],
        "chain_region": [None, [-3.0, 3.0]],
        "cascade_region": [None, [-4.0, 4.0], None, [-4.0, 4.0]],
        "extra_initial_conditions": [list(p) for p in REFERENCE_INITIAL_CONDITIONS],
    },
}
_PLANE_CASCADE_BLOCKS = {
    "equilibria": {"region": [[-2.0, 2.0], [-2.0, 2.0], None, [-5.0, 5.0]]},
    "basin": {"region": [[-2.0, 2.0], [-2.0, 2.0], None, [-4.0, 4.0]], "horizon": 200.0},
    "simulate": {"from": [[0.5, 0.0, 1.0, 0.0]], "t": 60.0, "axes": [0, 1]},
    "certify": {
        "inner_region": [None, [-4.0, 4.0]],
        "outer_region": [[-2.0, 2.0], [-2.0, 2.0]],
        "outer_equilibrium_region": [[-2.0, 2.0], [-2.0, 2.0]],
        "chain_region": [[-2.0, 2.0], [-2.0, 2.0]],
        "cascade_region": [[-2.0, 2.0], [-2.0, 2.0], None, [-4.0, 4.0]],
        "outer_target": [0.0, 0.0],
    },
}

_TS1_STANDALONE = {
    "equilibria": {"region": [None, [-5.0, 5.0]]},
    "chainrec": {"region": [None, [-3.0, 3.0]]},
    "basin": {"region": [None, [-4.0, 4.0]], "horizon": 100.0},
    "simulate": {"from": [[3.0, 0.0]], "t": 50.0, "axes": [0, 1]},
}
_PLANE_STANDALONE = {
    "equilibria": {"region": [[-2.0, 2.0], [-2.0, 2.0]]},
    "chainrec": {"region": [[-2.0, 2.0], [-2.0, 2.0]]},
    "basin": {"region": [[-2.0, 2.0], [-2.0, 2.0]], "horizon": 100.0},
    "simulate": {"from": [[0.1, 0.0]], "t": 50.0, "axes": [0, 1]},
}

EXAMPLES: dict[str, Example] = {e.name: e for e in [
    Example("paper-example", "torus cascade: damped pendulum driving a cos(2 phi)-modulated pendulum",
            torus_cascade, outer_energy, torus_certificate, _CASCADE_BLOCKS,
            ("theta", "thetadot", "phi", "phidot")),
    Example("pendulum", "damped pendulum phi'' = -(sin phi + phi') on TS1",
            pendulum, pendulum_energy, None, _TS1_STANDALONE, ("phi", "phidot")),
    Example("gradient-circle", "gradient flow of 1 - cos(theta) on S1",
            gradient_circle, cosine_potential, None,
            {"equilibria": {"region": [None]}, "chainrec": {"region": [None]},
             "basin": {"region": [None], "horizon": 100.0},
             "simulate": {"from": [[3.0]], "t": 30.0, "axes": [-1, 0]}},
            ("theta",)),
    Example("undamped-pendulum", "conservative pendulum phi'' = -sin phi (negative control)",
            undamped_pendulum, pendulum_energy, None, _TS1_STANDALONE, ("phi", "phidot")),
    Example("harmonic-oscillator", "x' = y, y' = -x (negative control)",
            harmonic_oscillator, quadratic_energy, None, _PLANE_STANDALONE, ("x", "y")),
    Example("limit-cycle", "planar system with an attracting unit-circle limit cycle",
            limit_cycle, quadratic_energy, None, _PLANE_STANDALONE, ("x", "y")),
    Example("linear-stable", "x' = -x on R",
            linear_stable, lambda: quadratic_energy(LINE), None,
            {"equilibria": {"region": [[-10.0, 10.0]]}, "chainrec": {"region": [[-1.0, 1.0]]},
             "basin": {"region": [[-10.0, 10.0]], "horizon": 50.0},
             "simulate": {"from": [[1.0]], "t": 10.0, "axes": [-1, 0]}},
            ("x",)),
    Example("undamped-inner-cascade", "modulated pendulum outer loop driven by an undamped pendulum",
            undamped_inner_cascade, outer_energy, torus_certificate, _CASCADE_BLOCKS,
            ("theta", "thetadot", "phi", "phidot")),
    Example("limit-cycle-cascade", "limit-cycle outer loop driven by the damped pendulum",
            limit_cycle_cascade, quadratic_energy, _lc_certificate, _PLANE_CASCADE_BLOCKS,
            ("x1", "x2", "phi", "phidot")),
    Example("unbounded-cascade", "interconnection phi^2 thetadot^3 with no linear-growth bound",
            unbounded_cascade, outer_energy, torus_certificate, _CASCADE_BLOCKS,
            ("theta", "thetadot", "phi", "phidot")),
    Example("decoupled-cascade", "torus cascade with the interconnection removed",
            decoupled_cascade, outer_energy, torus_certificate, _CASCADE_BLOCKS,
            ("theta", "thetadot", "phi", "phidot")),
]}
