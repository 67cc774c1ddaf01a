"""Equilibrium search, linearization, hyperbolicity classification and the
block-triangular structure of cascade Jacobians."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry as geo
from .dynamics import CascadeDef, SystemDef, eval_field, jacobian, unforced_outer
from .errors import InputError, NumericError

log = logging.getLogger(__name__)

HYP_TOL = 1e-6
DEDUP_RADIUS = 1e-4
NEWTON_MAX_ITER = 50
PI_SNAP = 1e-12


@dataclass(frozen=True)
class Classification:
    kind: str  # "stable" | "unstable" | "nonhyperbolic"
    unstable_count: int = 0

    @property
    def hyperbolic(self) -> bool:
        return self.kind != "nonhyperbolic"

    def __str__(self):
        if self.kind == "unstable":
            return f"Unstable({self.unstable_count})"
        return {"stable": "Stable", "nonhyperbolic": "NonHyperbolic"}[self.kind]


STABLE = Classification("stable")
NONHYPERBOLIC = Classification("nonhyperbolic")


def classify(eigs, hyp_tol: float = HYP_TOL) -> Classification:
    if not hyp_tol > 0:
        raise InputError("hyp_tol must be positive")
    re = np.real(np.asarray(eigs, dtype=complex))
    if np.any(np.abs(re) < hyp_tol):
        return NONHYPERBOLIC
    if np.all(re < -hyp_tol):
        return STABLE
    return Classification("unstable", int(np.sum(re > hyp_tol)))


@dataclass
class EquilibriumRecord:
    point: np.ndarray
    eigenvalues: np.ndarray
    classification: Classification
    residual: float

    def to_json(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "classification": str(self.classification),
            "residual": float(self.residual),
        }


def linearize(sys: SystemDef, p) -> np.ndarray:
    J = jacobian(sys, np.asarray(p, dtype=float))
    if not np.all(np.isfinite(J)):
        raise NumericError(f"non-finite Jacobian at {np.asarray(p).tolist()}", point=p)
    return J


def sorted_eigenvalues(J) -> np.ndarray:
    ev = np.linalg.eigvals(J)
    return ev[np.lexsort((ev.imag, ev.real))]


def _grid(region: geo.RegionSpec, k: int) -> np.ndarray:
    axes = []
    for b in region.bounds:
        if b is None:
            axes.append(-np.pi + 2.0 * np.pi * np.arange(k) / k)
        else:
            axes.append(np.linspace(b[0], b[1], k))
    return np.array(list(itertools.product(*axes)), dtype=float)


def _snap(space: geo.SpaceSpec, p: np.ndarray) -> np.ndarray:
    p = geo.canonicalize(space, p)
    c = space.circle_mask
    near = c & (np.abs(p - np.pi) < PI_SNAP)
    p[..., near] = -np.pi
    return p


def newton_batch(sys: SystemDef, seeds: np.ndarray, newton_tol: float):
    """Damped Newton from every seed; returns (points, residuals, converged mask)."""
    space = sys.space
    x = geo.canonicalize(space, np.atleast_2d(seeds).astype(float))
    F = sys.field(x)
    r = np.linalg.norm(F, axis=-1)
    alive = np.all(np.isfinite(F), axis=-1)
    # iterate well past newton_tol so roots are accurate to roundoff
    target = newton_tol * 1e-4
    done = alive & (r < target)
    for _ in range(NEWTON_MAX_ITER):
        work = alive & ~done
        if not work.any():
            break
        idx = np.flatnonzero(work)
        J = jacobian(sys, x[idx])
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(J)
        singular = ~np.isfinite(cond) | (cond > 1e13)
        if singular.any():
            log.debug("discarding %d seeds with singular Jacobian", singular.sum())
            alive[idx[singular]] = False
        idx = idx[~singular]
        if idx.size == 0:
            continue
        dx = np.linalg.solve(J[~singular], -F[idx][..., None])[..., 0]
        lam = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        xn = x[idx].copy()
        Fn = F[idx].copy()
        rn = r[idx].copy()
        # halve the step while the residual grows
        for _ in range(30):
            if not pending.any():
                break
            p = np.flatnonzero(pending)
            trial = geo.canonicalize(space, x[idx[p]] + lam[p, None] * dx[p])
            Ft = sys.field(trial)
            rt = np.linalg.norm(Ft, axis=-1)
            ok = np.isfinite(rt) & (rt <= r[idx[p]])
            xn[p[ok]], Fn[p[ok]], rn[p[ok]] = trial[ok], Ft[ok], rt[ok]
            pending[p[ok]] = False
            lam[p[~ok]] *= 0.5
        stuck = idx[pending]
        done[stuck] = r[stuck] < newton_tol
        alive[stuck] = done[stuck]
        good = idx[~pending]
        x[good], F[good], r[good] = xn[~pending], Fn[~pending], rn[~pending]
        done[good] = r[good] < target
    return x, r, alive & (r < newton_tol)


def find_equilibria(sys: SystemDef, region: geo.RegionSpec, grid_per_dim: int = 8,
                    newton_tol: float = 1e-10, hyp_tol: float = HYP_TOL) -> list[EquilibriumRecord]:
    if grid_per_dim < 2:
        raise InputError("grid_per_dim must be at least 2")
    space = sys.space
    seeds = _grid(region, grid_per_dim)
    x, r, conv = newton_batch(sys, seeds, newton_tol)
    x = _snap(space, x[conv])
    x = x[region.contains(x)]
    order = np.lexsort(x.T[::-1]) if len(x) else np.array([], dtype=int)
    roots: list[np.ndarray] = []
    for p in x[order]:
        if all(geo.dist(space, p, q) >= DEDUP_RADIUS for q in roots):
            roots.append(p)
    records = []
    for p in roots:
        res = float(np.linalg.norm(eval_field(sys, p)))
        eigs = sorted_eigenvalues(linearize(sys, p))
        records.append(EquilibriumRecord(p, eigs, classify(eigs, hyp_tol), res))
    # round the key so roundoff in a root does not reorder the list
    records.sort(key=lambda e: tuple(np.round(e.point, 9) + 0.0))
    return records


def pair_eigenvalues(a, b) -> tuple[float, list]:
    """Greedy nearest pairing of two eigenvalue multisets; returns (max gap, pairs)."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    if len(a) != len(b):
        return np.inf, []
    pairs = []
    worst = 0.0
    for ev in sorted(a, key=lambda z: (z.real, z.imag)):
        j = int(np.argmin([abs(ev - w) for w in b]))
        gap = abs(ev - b[j])
        worst = max(worst, gap)
        pairs.append((ev, b.pop(j)))
    return float(worst), pairs


@dataclass
class BlockStructure:
    point: np.ndarray
    jacobian: np.ndarray
    lower_left_norm: float
    full_eigenvalues: np.ndarray
    outer_eigenvalues: np.ndarray
    inner_eigenvalues: np.ndarray
    pairing_error: float
    classification: Classification
    ok: bool
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        def cj(v):
            return [[float(z.real), float(z.imag)] for z in v]
        return {
            "point": [float(v) for v in self.point],
            "lower_left_norm": self.lower_left_norm,
            "full_eigenvalues": cj(self.full_eigenvalues),
            "outer_block_eigenvalues": cj(self.outer_eigenvalues),
            "inner_block_eigenvalues": cj(self.inner_eigenvalues),
            "pairing_error": self.pairing_error,
            "classification": str(self.classification),
            "ok": self.ok,
            "notes": list(self.notes),
        }


def cascade_block_structure(cas: CascadeDef, point, hyp_tol: float = HYP_TOL,
                            block_tol: float = 1e-8, pair_tol: float = 1e-6) -> BlockStructure:
    """Check that dF at (x, 0_Y) is block upper-triangular with the expected spectrum.

    ``point`` is either the full cascade state or just the outer coordinates.
    """
    point = np.asarray(point, dtype=float)
    nx = cas.outer_space.dim
    if point.shape[-1] == nx:
        point = cas.join(point, cas.inner_equilibrium)
    x, y = cas.split(point)
    if geo.dist(cas.inner_space, y, cas.inner_equilibrium) > 1e-8:
        raise InputError("point is not on the slice y = 0_Y")
    J = linearize(cas.full, point)
    lower_left = J[nx:, :nx]
    ll = float(np.linalg.norm(lower_left))
    full_eigs = sorted_eigenvalues(J)
    outer_eigs = sorted_eigenvalues(linearize(unforced_outer(cas), x))
    inner_eigs = sorted_eigenvalues(linearize(cas.inner, cas.inner_equilibrium))
    err, _ = pair_eigenvalues(full_eigs, np.concatenate([outer_eigs, inner_eigs]))
    notes = []
    if ll >= block_tol:
        notes.append(f"lower-left block norm {ll:.3g} exceeds {block_tol:g}")
    if err > pair_tol:
        notes.append(f"spectrum pairing error {err:.3g} exceeds {pair_tol:g}")
    return BlockStructure(point, J, ll, full_eigs, outer_eigs, inner_eigs, err,
                          classify(full_eigs, hyp_tol), not notes, notes)
