"""Adaptive Dormand-Prince 5(4) integration, batched over initial conditions.

Each trajectory in a batch carries its own time, step size and controller
state; the arithmetic is elementwise, so a trajectory's result does not depend
on which other trajectories share its batch.  Circle coordinates are wrapped
only after accepted steps, never between stages.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry as geo
from .dynamics import SystemDef
from .errors import DivergenceError, InputError, NumericError

OK = 0
DIVERGED = 1
NONFINITE = 2

LINE_LIMIT = 1e6
H_MIN = 1e-12
SAFETY = 0.9
FAC_MIN, FAC_MAX = 0.2, 5.0
# PI controller exponents (Gustafsson), order-5 pair
ALPHA, BETA = 0.7 / 5.0, 0.4 / 5.0

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4
# Shampine's continuous extension, y(t0 + s h) = y0 + h * K^T P [s, s^2, s^3, s^4]
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class Trajectory:
    space: geo.SpaceSpec
    times: np.ndarray
    points: np.ndarray
    steps: int = 0
    rejected: int = 0
    max_error: float = 0.0

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]


@dataclass
class BatchFlow:
    """Result of :func:`flow_batch`; ``samples`` is NaN after a trajectory stops early."""

    final: np.ndarray
    t_reached: np.ndarray
    status: np.ndarray
    steps: np.ndarray
    rejected: np.ndarray
    max_error: np.ndarray
    t_eval: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK


def _rms(x):
    return np.sqrt(np.mean(x * x, axis=-1))


def _initial_step(fun, y, f0, tol, horizon):
    sc = tol + tol * np.abs(y)
    d0 = _rms(y / sc)
    d1 = _rms(f0 / sc)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, horizon)
    f1 = fun(y + h0[:, None] * f0)
    d2 = _rms((f1 - f0) / sc) / h0
    dmax = np.maximum(d1, d2)
    h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3),
                  (0.01 / np.maximum(dmax, 1e-300)) ** (1.0 / 5.0))
    h = np.minimum(100.0 * h0, h1)
    return np.where(np.isfinite(h) & (h > 0), h, 1e-6)


def flow_batch(sys: SystemDef, p0, t_end: float, tol: float = 1e-6, t_eval=None,
               line_limit: float = LINE_LIMIT, max_steps: int = 1_000_000) -> BatchFlow:
    """Integrate every row of ``p0`` to ``t_end`` (or until it diverges)."""
    if not t_end > 0:
        raise InputError("t_end must be positive")
    if not tol > 0:
        raise InputError("tol must be positive")
    space = sys.space
    y = geo.canonicalize(space, np.atleast_2d(np.asarray(p0, dtype=float)))
    N, n = y.shape
    fun = sys.field
    line = ~space.circle_mask

    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.ndim != 1 or np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0 or t_eval[-1] > t_end:
            raise InputError("t_eval must be strictly increasing within [0, t_end]")
        samples = np.full((N, len(t_eval), n), np.nan)
        nxt = np.zeros(N, dtype=int)
        if t_eval[0] == 0.0:
            samples[:, 0] = y
            nxt[:] = 1
    else:
        samples = None

    t = np.zeros(N)
    status = np.full(N, OK)
    steps = np.zeros(N, dtype=int)
    rejected = np.zeros(N, dtype=int)
    max_err = np.zeros(N)
    f = np.asarray(fun(y), dtype=float)
    bad0 = ~np.all(np.isfinite(f), axis=-1) | ~np.all(np.isfinite(y), axis=-1)
    status[bad0] = NONFINITE
    active = status == OK
    h = np.zeros(N)
    if active.any():
        h[active] = _initial_step(fun, y[active], f[active], tol, t_end)
    err_prev = np.full(N, 1e-4)

    total = 0
    while active.any():
        total += 1
        if total > max_steps:
            status[active] = DIVERGED
            break
        idx = np.flatnonzero(active)
        yi, ti = y[idx], t[idx]
        remaining = t_end - ti
        last = h[idx] >= remaining
        hh = np.where(last, remaining, h[idx])
        hc = hh[:, None]

        K = np.empty((7, len(idx), n))
        K[0] = f[idx]
        for s in range(1, 6):
            dy = sum(a * K[j] for j, a in enumerate(_A[s]))
            K[s] = fun(yi + hc * dy)
        ynew = yi + hc * np.tensordot(_B[:6], K[:6], axes=1)
        K[6] = fun(ynew)
        err = hc * np.tensordot(_E, K, axes=1)
        sc = tol + tol * np.maximum(np.abs(yi), np.abs(ynew))
        errn = _rms(err / sc)
        finite = np.isfinite(errn) & np.all(np.isfinite(ynew), axis=-1) & np.all(np.isfinite(K[6]), axis=-1)
        errn = np.where(finite, errn, np.inf)
        accept = errn <= 1.0

        # step-size update
        with np.errstate(divide="ignore", over="ignore"):
            fac_acc = SAFETY * np.where(errn > 0, errn, 1e-10) ** (-ALPHA) * err_prev[idx] ** BETA
            fac_rej = SAFETY * np.where(np.isfinite(errn), errn, 1e10) ** (-1.0 / 5.0)
        fac = np.where(accept, np.clip(fac_acc, FAC_MIN, FAC_MAX), np.clip(fac_rej, FAC_MIN, 1.0))
        h_new = hh * fac

        acc = idx[accept]
        rej = idx[~accept]
        rejected[rej] += 1

        if acc.size:
            a_loc = np.flatnonzero(accept)
            y0a, t0a, ha = yi[a_loc], ti[a_loc], hh[a_loc]
            t1a = np.where(last[a_loc], t_end, t0a + ha)
            if samples is not None:
                Q = np.einsum("sbn,sk->bnk", K[:, a_loc], _P)
                pending = (nxt[acc] < len(t_eval))
                while True:
                    te = np.where(pending, t_eval[np.minimum(nxt[acc], len(t_eval) - 1)], np.inf)
                    due = pending & (te <= t1a)
                    if not due.any():
                        break
                    d = np.flatnonzero(due)
                    x = (te[d] - t0a[d]) / ha[d]
                    powers = np.stack([x, x ** 2, x ** 3, x ** 4], axis=-1)
                    yd = y0a[d] + ha[d, None] * np.einsum("bnk,bk->bn", Q[d], powers)
                    samples[acc[d], nxt[acc[d]]] = geo.canonicalize(space, yd)
                    nxt[acc[d]] += 1
                    pending = nxt[acc] < len(t_eval)
            y[acc] = geo.canonicalize(space, ynew[a_loc])
            f[acc] = K[6][a_loc]
            t[acc] = t1a
            steps[acc] += 1
            max_err[acc] = np.maximum(max_err[acc], errn[a_loc] * tol)
            err_prev[acc] = np.maximum(errn[a_loc], 1e-4)
            blown = np.any(np.abs(y[acc][:, line]) > line_limit, axis=-1) if line.any() \
                else np.zeros(acc.size, dtype=bool)
            status[acc[blown]] = DIVERGED
            active[acc[blown]] = False
            active[acc[last[a_loc] & ~blown]] = False

        h[idx] = h_new
        tiny = idx[(h_new < H_MIN) & active[idx]]
        if tiny.size:
            nonfin = ~finite[np.searchsorted(idx, tiny)]
            status[tiny] = np.where(nonfin, NONFINITE, DIVERGED)
            active[tiny] = False

    return BatchFlow(final=y, t_reached=t, status=status, steps=steps, rejected=rejected,
                     max_error=max_err, t_eval=t_eval, samples=samples)


def flow(sys: SystemDef, p0, t_end: float, tol: float = 1e-9, t_eval=None,
         n_samples: Optional[int] = None) -> Trajectory:
    """Single trajectory sampled at ``t_eval`` (default: ``n_samples`` uniform times, 1001)."""
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 1001 if n_samples is None else n_samples)
    res = flow_batch(sys, np.atleast_2d(p0), t_end, tol, t_eval)
    if res.status[0] != OK:
        last = float(res.t_reached[0])
        point = res.final[0]
        if res.status[0] == NONFINITE:
            raise NumericError(f"non-finite state near t={last:.6g}", point=point)
        raise DivergenceError(f"integration diverged at t={last:.6g}", last_time=last, point=point)
    return Trajectory(space=sys.space, times=res.t_eval.copy(), points=res.samples[0],
                      steps=int(res.steps[0]), rejected=int(res.rejected[0]),
                      max_error=float(res.max_error[0]))


def flow_to(sys: SystemDef, p0, t_end: float, tol: float = 1e-9) -> np.ndarray:
    """Endpoint of a single flow; raises like :func:`flow`."""
    return flow(sys, p0, t_end, tol, t_eval=np.array([0.0, t_end])).final
