"""Sampled evidence for the cascade stability hypotheses.

Each checker returns a :class:`~cascadecert.verdicts.CheckResult`.  A PASS
means "held at every sample drawn, at the stated parameters"; nothing here is
a proof, and every report says so.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import chainrec as cr
from . import geometry as geo
from .dynamics import (CascadeDef, ScalarField, SystemDef, interconnection, lie_derivative,
                       unforced_outer)
from .equilibria import (cascade_block_structure, classify, find_equilibria, linearize,
                         sorted_eigenvalues)
from .errors import InputError
from .integrate import OK, flow, flow_batch
from .streams import stream
from .systems import GrowthCertificate
from .verdicts import CheckResult, Verdict, combine, jsonable

log = logging.getLogger(__name__)

WILSON_Z95 = 1.959963984540054
GROWTH_SLACK = 1e-9
MAX_WITNESSES = 100
DISCLAIMER = ("PASS means every sampled check held at the stated numerical parameters "
              "and finite horizons; it is evidence, not a proof.")


def wilson_interval(k: int, n: int, z: float = WILSON_Z95) -> tuple[float, float]:
    if n <= 0:
        raise InputError("n must be positive")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class BasinEstimate:
    n_samples: int
    n_converged: int
    n_diverged: int
    n_other: int
    fraction: float
    wilson_lower: float
    witnesses: list  # starting points of non-converged samples, at most MAX_WITNESSES
    target: list = field(default_factory=list)
    # per-sample data, kept for plotting; not serialized
    starts: Optional[np.ndarray] = field(default=None, repr=False)
    labels: Optional[np.ndarray] = field(default=None, repr=False)
    finals: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return jsonable({
            "n_samples": self.n_samples, "n_converged": self.n_converged,
            "n_diverged": self.n_diverged, "n_other": self.n_other,
            "fraction": self.fraction, "wilson_lower_95": self.wilson_lower,
            "target": self.target, "witnesses": self.witnesses,
        })


CONVERGED, DIVERGED, OTHER = 0, 1, 2


def monte_carlo_basin(sys: SystemDef, target, region: geo.RegionSpec, n: int, horizon: float,
                      conv_tol: float = 1e-3, seed: int = 0, tol: float = 1e-6,
                      prior_witnesses: Optional[Sequence] = None,
                      stream_name: str = "basin") -> BasinEstimate:
    """Uniform samples of ``region`` flowed to ``horizon``; converged iff final dist < conv_tol.

    Samples come from a sequential stream, so a run with smaller ``n`` sees a
    prefix of the samples of a larger run.  ``prior_witnesses`` are re-run and
    counted on top of the fresh samples.
    """
    if n < 1:
        raise InputError("n must be at least 1")
    space = sys.space
    target = geo.canonicalize(space, target)
    starts = region.sample(stream(seed, stream_name), n)
    if prior_witnesses is not None and len(prior_witnesses):
        starts = np.concatenate([starts, np.asarray(prior_witnesses, dtype=float).reshape(-1, space.dim)])
    res = flow_batch(sys, starts, horizon, tol)
    ok = res.status == OK
    d = np.where(ok, geo.dist(space, np.nan_to_num(res.final), target), np.inf)
    labels = np.where(~ok, DIVERGED, np.where(d < conv_tol, CONVERGED, OTHER))
    n_tot = len(starts)
    k = int(np.sum(labels == CONVERGED))
    lo, _ = wilson_interval(k, n_tot)
    bad = np.flatnonzero(labels != CONVERGED)
    # divergences first: they are the witnesses that decide FAIL verdicts
    bad = np.concatenate([bad[labels[bad] == DIVERGED], bad[labels[bad] == OTHER]])
    return BasinEstimate(
        n_samples=n_tot, n_converged=k, n_diverged=int(np.sum(labels == DIVERGED)),
        n_other=int(np.sum(labels == OTHER)), fraction=k / n_tot, wilson_lower=lo,
        witnesses=starts[bad[:MAX_WITNESSES]].tolist(), target=target.tolist(),
        starts=starts, labels=labels, finals=res.final,
    )


def _basin_evidence(b: BasinEstimate, threshold: float) -> dict:
    return {"fraction": b.fraction, "wilson_lower_95": b.wilson_lower, "threshold": threshold,
            "n_samples": b.n_samples, "n_converged": b.n_converged, "n_diverged": b.n_diverged,
            "n_other": b.n_other}


def _eq_json(records) -> list:
    return [r.to_json() for r in records]


def certify_inner_loop(g: SystemDef, eq0, region: geo.RegionSpec, n: int = 10_000,
                       horizon: float = 100.0, conv_tol: float = 1e-3, threshold: float = 0.999,
                       seed: int = 0, tol: float = 1e-6, hyp_tol: float = 1e-6,
                       grid_per_dim: int = 8, saddle_radius: float = 1e-2) -> CheckResult:
    """Hyperbolic stability of ``eq0`` plus a Monte Carlo basin estimate."""
    space = g.space
    eq0 = geo.canonicalize(space, eq0)
    residual = float(np.linalg.norm(g.field(eq0)))
    if residual >= 1e-8:
        raise InputError(f"inner equilibrium residual {residual:.3g} is not below 1e-8")
    eigs = sorted_eigenvalues(linearize(g, eq0))
    cls = classify(eigs, hyp_tol)
    params = {"n": n, "horizon": horizon, "conv_tol": conv_tol, "threshold": threshold,
              "seed": seed, "tol": tol, "hyp_tol": hyp_tol, "region": region.to_json()}
    evidence = {"equilibrium": eq0.tolist(), "classification": str(cls),
                "eigenvalues": [[e.real, e.imag] for e in eigs]}
    if cls.kind != "stable":
        return CheckResult("inner_loop", Verdict.FAIL, evidence, params,
                           [{"kind": "not_hyperbolic_stable", "point": eq0.tolist(),
                             "classification": str(cls)}])
    basin = monte_carlo_basin(g, eq0, region, n, horizon, conv_tol, seed, tol, stream_name="inner-basin")
    evidence.update(_basin_evidence(basin, threshold))
    others = basin.finals[basin.labels == OTHER]
    unstable = [r.point for r in find_equilibria(g, region, grid_per_dim, 1e-10, hyp_tol)
                if r.classification.kind != "stable"]
    if len(others) and unstable:
        dmin = geo.dist(space, others[:, None, :], np.array(unstable)[None]).min(axis=1)
        unexplained = int(np.sum(dmin >= saddle_radius))
    else:
        unexplained = len(others)
    evidence["non_converged_near_unstable_equilibria"] = len(others) - unexplained
    evidence["non_converged_unexplained"] = unexplained
    ok = basin.fraction >= threshold and basin.n_diverged == 0 and unexplained == 0
    witnesses = [{"kind": "non_converged", "point": p} for p in basin.witnesses]
    return CheckResult("inner_loop", Verdict.PASS if ok else Verdict.FAIL, evidence, params, witnesses)


def certify_unforced_outer(cas: CascadeDef, V: ScalarField, eq_region: geo.RegionSpec,
                           chain_region: geo.RegionSpec, basin_region: geo.RegionSpec, *,
                           grid_per_dim: int = 8, hyp_tol: float = 1e-6, depth: int = 6,
                           rounds: int = 3, T: Optional[float] = None, eps: Optional[float] = None,
                           chain_tol: float = 1e-6, n_traj: int = 100, gradient_horizon: float = 50.0,
                           gradient_tol: float = 1e-9, n: int = 10_000, horizon: float = 100.0,
                           conv_tol: float = 1e-3, threshold: float = 0.999, seed: int = 0,
                           tol: float = 1e-6, target=None) -> CheckResult:
    """Hyperbolic equilibria, R = E by box covers, V decreasing, and a basin estimate."""
    sys = unforced_outer(cas)
    params = {"grid_per_dim": grid_per_dim, "hyp_tol": hyp_tol, "depth": depth, "rounds": rounds,
              "T": T, "eps": eps, "chain_tol": chain_tol, "n_traj": n_traj,
              "gradient_horizon": gradient_horizon, "gradient_tol": gradient_tol, "n": n,
              "horizon": horizon, "conv_tol": conv_tol, "threshold": threshold, "seed": seed,
              "tol": tol, "equilibrium_region": eq_region.to_json(),
              "chain_region": chain_region.to_json(), "basin_region": basin_region.to_json()}
    eqs = find_equilibria(sys, eq_region, grid_per_dim, 1e-10, hyp_tol)
    evidence: dict = {"equilibria": _eq_json(eqs)}
    witnesses = []
    failed = []
    nonhyp = [r for r in eqs if not r.classification.hyperbolic]
    for r in nonhyp:
        witnesses.append({"kind": "nonhyperbolic_equilibrium", "point": r.point.tolist()})
    if nonhyp:
        failed.append("hyperbolicity")
    stable = [r for r in eqs if r.classification.kind == "stable"]
    if len(stable) != 1:
        failed.append("unique_stable_equilibrium")
        witnesses.append({"kind": "stable_equilibria_count", "count": len(stable)})
    if target is not None:
        x0 = geo.canonicalize(sys.space, target)
        if not any(geo.dist(sys.space, r.point, x0) < 1e-6 for r in stable):
            failed.append("target_is_stable_equilibrium")
    else:
        x0 = stable[0].point if stable else None
    evidence["target"] = None if x0 is None else x0.tolist()

    blocks = [cascade_block_structure(cas, r.point, hyp_tol) for r in eqs]
    evidence["block_structure"] = [b.to_json() for b in blocks]
    if not all(b.ok for b in blocks):
        failed.append("block_structure")

    grad = cr.verify_gradient_like(sys, V, eqs, n_traj, gradient_horizon, basin_region,
                                   gradient_tol, seed)
    evidence["gradient_like"] = grad.to_json()
    if not grad.passed:
        failed.append("gradient_like")
        witnesses += grad.witnesses[:20]

    run = cr.subdivide(sys, chain_region, depth, rounds, T, eps, None, chain_tol, eqs)
    chk = cr.check_R_equals_E(run.approx, run.cover, eqs)
    evidence["chain_recurrence"] = chk.to_json()
    evidence["chain_recurrence"]["rounds"] = [
        {"depth": c.depth, "boxes": len(c), "recurrent": len(a), "eps": a.eps, "T": a.T}
        for c, a in zip(run.covers, run.approxes)]
    if not chk.passed:
        failed.append("R_equals_E")
        witnesses += chk.witnesses[:20]
    loc = cr.localization_check(run.approx, run.cover, V, eqs)
    evidence["localization"] = loc.to_json()
    if not loc.passed:
        failed.append("localization")

    if x0 is not None:
        basin = monte_carlo_basin(sys, x0, basin_region, n, horizon, conv_tol, seed, tol,
                                  stream_name="outer-basin")
        evidence["basin"] = _basin_evidence(basin, threshold)
        if basin.fraction < threshold or basin.n_diverged:
            failed.append("basin")
            witnesses += [{"kind": "non_converged", "point": p} for p in basin.witnesses[:20]]
    evidence["failed_checks"] = failed
    return CheckResult("unforced_outer", Verdict.FAIL if failed else Verdict.PASS, evidence, params,
                       witnesses[:MAX_WITNESSES])


def _sample_superlevel(W: ScalarField, region: geo.RegionSpec, c: float, n: int,
                       rng: np.random.Generator, proposals: int, escalations: int = 3):
    """Rejection-sample {W >= c}; doubles line bounds on starvation. Returns (points, region) or (None, region)."""
    reg = region
    for attempt in range(escalations + 1):
        got = []
        total = 0
        batch = min(proposals, max(4 * n, 10_000))
        while total < proposals:
            cand = reg.sample(rng, batch)
            total += batch
            got.append(cand[W(cand) >= c])
            if sum(len(g) for g in got) >= n:
                return np.concatenate(got)[:n], reg
        if attempt < escalations:
            reg = reg.scaled(2.0)
    return None, reg


def _sample_inner_basin(cas: CascadeDef, region: geo.RegionSpec, n: int, rng, horizon: float,
                        conv_tol: float, tol: float):
    g = cas.inner
    out = []
    have = 0
    for _ in range(50):
        cand = region.sample(rng, max(2 * n, 16))
        res = flow_batch(g, cand, horizon, tol)
        ok = (res.status == OK) & (geo.dist(g.space, np.nan_to_num(res.final), cas.inner_equilibrium) < conv_tol)
        out.append(cand[ok])
        have += int(ok.sum())
        if have >= n:
            break
    return np.concatenate(out)[:n]


def growth_gap(cas: CascadeDef, cert: GrowthCertificate, x, y) -> tuple:
    """(L_h W, alpha W + beta) at paired points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lhs = lie_derivative(cert.W, interconnection(cas, x, y), x)
    rhs = cert.alpha(y) * cert.W(x) + cert.beta(y)
    return lhs, rhs


def difference_quotients(fun: ScalarField, center, space: geo.SpaceSpec, radii, rng, n_dir: int = 64):
    """max |fun(center + r u)| / r over random metric-unit directions u, per radius."""
    dirs = rng.standard_normal((n_dir, space.dim))
    dirs /= geo.norm(space, dirs)[:, None]
    out = []
    for r in radii:
        pts = geo.canonicalize(space, center + r * dirs)
        out.append(float(np.max(np.abs(fun(pts))) / r))
    return out


def verify_growth_certificate(cas: CascadeDef, cert: GrowthCertificate, n_x: int, n_y: int,
                              region_x: geo.RegionSpec, region_y: geo.RegionSpec, seed: int = 0,
                              inner_horizon: float = 100.0, conv_tol: float = 1e-3, tol: float = 1e-6,
                              proposals: int = 1_000_000,
                              radii=(1e-2, 1e-3, 1e-4, 1e-5)) -> CheckResult:
    """Check L_h W <= alpha(y) W(x) + beta(y) on sampled pairs with W(x) >= c."""
    params = {"n_x": n_x, "n_y": n_y, "c": cert.c, "seed": seed, "inner_horizon": inner_horizon,
              "conv_tol": conv_tol, "tol": tol, "proposals": proposals, "slack": GROWTH_SLACK,
              "region_x": region_x.to_json(), "region_y": region_y.to_json(),
              "y_sampling": "uniform in region_y, kept if the inner flow converges (empirical basin)"}
    y0 = cas.inner_equilibrium
    evidence: dict = {}
    witnesses = []
    failed = []
    a0, b0 = float(cert.alpha(y0)), float(cert.beta(y0))
    evidence["alpha_at_rest"], evidence["beta_at_rest"] = a0, b0
    if abs(a0) > 1e-10 or abs(b0) > 1e-10:
        failed.append("alpha_beta_vanish_at_rest")

    rng = stream(seed, "growth")
    q_rng = stream(seed, "growth-quotients")
    qa = difference_quotients(cert.alpha, y0, cas.inner_space, radii, q_rng)
    qb = difference_quotients(cert.beta, y0, cas.inner_space, radii, q_rng)
    bounded = all(max(q) <= 10.0 * q[0] + 1e-8 for q in (qa, qb))
    evidence["difference_quotients"] = {"radii": list(radii), "alpha": qa, "beta": qb,
                                        "bounded": bounded}
    if not bounded:
        failed.append("differentiable_at_rest")

    # W is a (non-strict) Lyapunov function of the unforced outer loop
    xs_all = region_x.sample(rng, n_x)
    unforced = unforced_outer(cas)
    wdot = lie_derivative(cert.W, unforced.field(xs_all), xs_all)
    wmin = float(np.min(cert.W(xs_all)))
    evidence["W_min_sampled"] = wmin
    evidence["max_unforced_W_rate"] = float(np.max(wdot))
    if wmin < -1e-12:
        failed.append("W_nonnegative")
    if np.max(wdot) > GROWTH_SLACK:
        failed.append("W_lyapunov_for_unforced_outer")
        k = int(np.argmax(wdot))
        witnesses.append({"kind": "W_increases_unforced", "x": xs_all[k].tolist(), "rate": float(wdot[k])})

    xs, used_region = _sample_superlevel(cert.W, region_x, cert.c, n_x, rng, proposals)
    params["region_x_used"] = used_region.to_json()
    if xs is None:
        evidence["failed_checks"] = failed
        evidence["sampler"] = "starved: could not find enough points with W >= c"
        verdict = Verdict.FAIL if failed else Verdict.INCONCLUSIVE
        return CheckResult("growth_certificate", verdict, evidence, params, witnesses)
    ys = _sample_inner_basin(cas, region_y, n_y, rng, inner_horizon, conv_tol, tol)
    if len(ys) == 0:
        evidence["sampler"] = "no inner sample converged to the rest point"
        evidence["failed_checks"] = failed
        verdict = Verdict.FAIL if failed else Verdict.INCONCLUSIVE
        return CheckResult("growth_certificate", verdict, evidence, params, witnesses)
    X = np.repeat(xs, len(ys), axis=0)
    Y = np.tile(ys, (len(xs), 1))
    lhs, rhs = growth_gap(cas, cert, X, Y)
    gap = lhs - rhs
    k = int(np.argmax(gap))
    max_gap = float(gap[k])
    evidence.update({"pairs": int(len(gap)), "n_x": int(len(xs)), "n_y": int(len(ys)),
                     "max_violation": max_gap, "violations": int(np.sum(gap > GROWTH_SLACK)),
                     "max_point": {"x": X[k].tolist(), "y": Y[k].tolist(),
                                   "lhs": float(lhs[k]), "rhs": float(rhs[k])}})
    if max_gap > GROWTH_SLACK:
        failed.append("growth_inequality")
        worst = np.argsort(-gap)[:10]
        witnesses += [{"kind": "growth_violation", "x": X[i].tolist(), "y": Y[i].tolist(),
                       "lhs": float(lhs[i]), "rhs": float(rhs[i]), "gap": float(gap[i])}
                      for i in worst if gap[i] > GROWTH_SLACK]
    if len(ys) < n_y:
        evidence["sampler"] = f"only {len(ys)} of {n_y} inner samples converged"
        if not failed:
            evidence["failed_checks"] = failed
            return CheckResult("growth_certificate", Verdict.INCONCLUSIVE, evidence, params, witnesses)
    evidence["failed_checks"] = failed
    return CheckResult("growth_certificate", Verdict.FAIL if failed else Verdict.PASS, evidence,
                       params, witnesses)


@dataclass
class DecayEnvelope:
    """alpha(y(t)) <= A exp(-omega t) and beta(y(t)) <= B exp(-omega t)."""

    A: float
    B: float
    omega: float
    fitted_rate: float = float("nan")
    distance_rate: float = float("nan")

    def alpha_bound(self, t):
        return self.A * np.exp(-self.omega * np.asarray(t))

    def beta_bound(self, t):
        return self.B * np.exp(-self.omega * np.asarray(t))


def tail_rate(times, values, tail_fraction: float = 0.5, valid=None) -> float:
    """Decay rate from a least-squares fit of log(suffix max) over the tail of the record.

    ``valid`` masks out samples below the integrator's noise floor; the tail is
    taken from the span of valid samples.
    """
    times = np.asarray(times, dtype=float)
    env = np.maximum.accumulate(np.asarray(values, dtype=float)[::-1])[::-1]
    if valid is not None and np.count_nonzero(valid) >= 10:
        t_hi = times[np.flatnonzero(valid)[-1]]
    else:
        valid = np.ones(len(times), dtype=bool)
        t_hi = times[-1]
    sel = (valid & (times >= times[0] + (1.0 - tail_fraction) * (t_hi - times[0]))
           & (times <= t_hi) & (env > 1e-300))
    if sel.sum() < 2:
        return float("nan")
    slope = np.polyfit(times[sel], np.log(env[sel]), 1)[0]
    return float(-slope)


def estimate_decay_envelope(traj, cert: GrowthCertificate, target=None,
                            converge_tol: float = 1e-6, noise_floor: float = 1e-7) -> tuple[DecayEnvelope, CheckResult]:
    """Fit an exponential envelope to alpha, beta along an inner-loop trajectory.

    The rate is fitted to the suffix maximum of max(alpha, beta) (falling back to
    the distance to the rest point when both vanish), ignoring samples closer to
    the rest point than ``noise_floor``.  The envelope uses half the
    fitted rate as a safety margin, and A, B are the smallest constants that
    dominate the samples at that rate.
    """
    space = traj.space
    target = np.zeros(space.dim) if target is None else np.asarray(target, dtype=float)
    d = geo.dist(space, traj.points, target)
    if d[-1] >= converge_tol:
        raise InputError(f"trajectory does not converge: final distance {d[-1]:.3g}")
    t = traj.times
    a = np.asarray(cert.alpha(traj.points), dtype=float)
    b = np.asarray(cert.beta(traj.points), dtype=float)
    valid = d > noise_floor
    dist_rate = tail_rate(t, d, valid=valid)
    ab = np.maximum(a, b)
    if np.max(ab) > 0:
        rate = tail_rate(t, ab, valid=valid)
    else:
        rate = dist_rate
    if not np.isfinite(rate) or rate <= 0:
        rate = dist_rate if np.isfinite(dist_rate) and dist_rate > 0 else 1.0
        if np.max(d) == 0.0:
            rate = 1.0
    omega = 0.5 * rate
    grow = np.exp(omega * t)
    A = float(np.max(a * grow))
    B = float(np.max(b * grow))
    env = DecayEnvelope(max(A, 0.0), max(B, 0.0), omega, rate, dist_rate)
    ok_a = np.all(env.alpha_bound(t) >= a * (1 - 1e-12))
    ok_b = np.all(env.beta_bound(t) >= b * (1 - 1e-12))
    verdict = Verdict.PASS if (omega > 0 and ok_a and ok_b) else Verdict.FAIL
    return env, CheckResult("decay_envelope", verdict,
                            {"A": env.A, "B": env.B, "omega": omega, "fitted_rate": rate,
                             "distance_rate": dist_rate, "final_distance": float(d[-1])},
                            {"horizon": float(t[-1]), "samples": int(len(t))})


def comparison_bound_check(cas: CascadeDef, traj, cert: GrowthCertificate,
                           env: DecayEnvelope) -> CheckResult:
    """W(x(t)) <= exp(A/omega) (max(c, W(x(t1))) + B/omega) for t >= t1, the first time W >= c."""
    x, y = cas.split(traj.points)
    t = traj.times
    a, b = cert.alpha(y), cert.beta(y)
    params = {"A": env.A, "B": env.B, "omega": env.omega, "c": cert.c}
    env_ok = np.all(env.alpha_bound(t) >= a * (1 - 1e-12)) and np.all(env.beta_bound(t) >= b * (1 - 1e-12))
    if not env_ok:
        k = int(np.argmax(np.maximum(a - env.alpha_bound(t), b - env.beta_bound(t))))
        return CheckResult("comparison_bound", Verdict.FAIL,
                           {"flag": "envelope", "time": float(t[k]),
                            "alpha": float(a[k]), "alpha_bound": float(env.alpha_bound(t[k]))},
                           params)
    W = cert.W(x)
    above = np.flatnonzero(W >= cert.c)
    if above.size == 0:
        return CheckResult("comparison_bound", Verdict.PASS,
                           {"vacuous": True, "max_W": float(W.max())}, params)
    t1 = int(above[0])
    log_bound = env.A / env.omega + np.log(max(cert.c, float(W[t1])) + env.B / env.omega)
    peak = float(W[t1:].max())
    log_margin = log_bound - np.log(peak) if peak > 0 else np.inf
    ok = log_margin >= 0
    return CheckResult("comparison_bound", Verdict.PASS if ok else Verdict.FAIL,
                       {"vacuous": False, "t1": float(t[t1]), "W_t1": float(W[t1]), "max_W_after_t1": peak,
                        "log_bound": float(log_bound), "log_margin": float(log_margin),
                        "flag": None if ok else "trajectory"},
                       params)


def local_exponential_rate(sys: SystemDef, target, radius: float = 1e-3, n: int = 16,
                           horizon: float = 20.0, seed: int = 0, tol: float = 1e-12) -> float:
    """Slowest fitted decay rate of perturbations of size ``radius`` around ``target``."""
    space = sys.space
    target = np.asarray(target, dtype=float)
    dirs = stream(seed, "local-rate").standard_normal((n, space.dim))
    dirs /= geo.norm(space, dirs)[:, None]
    starts = geo.canonicalize(space, target + radius * dirs)
    t_eval = np.linspace(0.0, horizon, 401)
    res = flow_batch(sys, starts, horizon, tol, t_eval)
    rates = []
    for i in range(n):
        d = geo.dist(space, res.samples[i], target)
        rates.append(tail_rate(t_eval, d, tail_fraction=0.75))
    return float(np.min(rates))


@dataclass
class CertifyParams:
    seed: int = 0
    hyp_tol: float = 1e-6
    grid_per_dim: int = 8
    # inner loop
    inner_n: int = 10_000
    inner_horizon: float = 100.0
    inner_threshold: float = 0.999
    conv_tol: float = 1e-3
    basin_tol: float = 1e-6
    # unforced outer loop
    outer_n: int = 10_000
    outer_horizon: float = 100.0
    outer_threshold: float = 0.999
    depth: int = 6
    rounds: int = 3
    T: Optional[float] = None
    eps: Optional[float] = None
    chain_tol: float = 1e-6
    n_traj: int = 100
    gradient_horizon: float = 50.0
    gradient_tol: float = 1e-9
    # growth certificate
    n_x: int = 1000
    n_y: int = 100
    proposals: int = 1_000_000
    # decay envelope / comparison bound
    n_comparison: int = 20
    comparison_horizon: float = 100.0
    comparison_dt: float = 0.05
    comparison_tol: float = 1e-9
    extra_initial_conditions: list = field(default_factory=list)
    # full cascade
    cascade_n: int = 10_000
    cascade_horizon: float = 200.0
    cascade_threshold: float = 0.99
    local_rate_min: float = 0.4


@dataclass
class CertificationReport:
    system: str
    entries: list
    parameters: dict

    @property
    def overall(self) -> Verdict:
        return combine(e.verdict for e in self.entries)

    def entry(self, condition: str) -> CheckResult:
        for e in self.entries:
            if e.condition == condition:
                return e
        raise KeyError(condition)

    def to_json(self) -> dict:
        return jsonable({
            "schema_version": 1,
            "system": self.system,
            "overall": self.overall.value,
            "evidence_grade": "sampled",
            "disclaimer": DISCLAIMER,
            "parameters": self.parameters,
            "conditions": [e.to_json() for e in self.entries],
        })

    def witness_rows(self) -> list[tuple]:
        rows = []
        for e in self.entries:
            for w in e.witnesses:
                coords = w.get("point") or (list(w.get("x", [])) + list(w.get("y", [])))
                rows.append((e.condition, w.get("kind", ""), coords))
        return rows


def check_decay_and_comparison(cas: CascadeDef, cert: GrowthCertificate, region: geo.RegionSpec,
                               p: CertifyParams) -> CheckResult:
    """Envelope fit on the inner part and comparison bound on the outer part of sampled trajectories."""
    rng = stream(p.seed, "comparison")
    starts = region.sample(rng, p.n_comparison)
    if p.extra_initial_conditions:
        extra = geo.canonicalize(cas.space, np.asarray(p.extra_initial_conditions, dtype=float))
        starts = np.concatenate([starts, extra.reshape(-1, cas.space.dim)])
    t_eval = np.arange(0.0, p.comparison_horizon + 0.5 * p.comparison_dt, p.comparison_dt)
    t_eval = t_eval[t_eval <= p.comparison_horizon]
    res = flow_batch(cas.full, starts, p.comparison_horizon, p.comparison_tol, t_eval)
    per = []
    witnesses = []
    verdicts = []
    worst_margin = np.inf
    from .integrate import Trajectory
    for i, s in enumerate(starts):
        if res.status[i] != OK:
            verdicts.append(Verdict.FAIL)
            witnesses.append({"kind": "divergence", "point": s.tolist(), "time": float(res.t_reached[i])})
            per.append({"start": s.tolist(), "verdict": "FAIL", "reason": "divergence"})
            continue
        full = Trajectory(cas.space, t_eval, res.samples[i])
        _, y = cas.split(full.points)
        ytraj = Trajectory(cas.inner_space, t_eval, y)
        try:
            env, env_chk = estimate_decay_envelope(ytraj, cert, cas.inner_equilibrium)
        except InputError as exc:
            verdicts.append(Verdict.INCONCLUSIVE)
            per.append({"start": s.tolist(), "verdict": "INCONCLUSIVE", "reason": str(exc)})
            continue
        cmp_chk = comparison_bound_check(cas, full, cert, env)
        v = combine([env_chk.verdict, cmp_chk.verdict])
        verdicts.append(v)
        margin = cmp_chk.evidence.get("log_margin", np.inf)
        worst_margin = min(worst_margin, margin)
        per.append({"start": s.tolist(), "verdict": v.value, "envelope": env_chk.evidence,
                    "comparison": cmp_chk.evidence})
        if v is not Verdict.PASS:
            witnesses.append({"kind": "comparison_bound", "point": s.tolist(), "flag": cmp_chk.evidence.get("flag")})
    return CheckResult(
        "decay_comparison", combine(verdicts),
        {"trajectories": len(starts), "passed": int(sum(v is Verdict.PASS for v in verdicts)),
         "worst_log_margin": worst_margin, "per_trajectory": per},
        {"n": p.n_comparison, "horizon": p.comparison_horizon, "dt": p.comparison_dt,
         "tol": p.comparison_tol, "extra_initial_conditions": p.extra_initial_conditions,
         "region": region.to_json(), "seed": p.seed},
        witnesses)


def check_cascade_basin(cas: CascadeDef, region: geo.RegionSpec, target, p: CertifyParams) -> CheckResult:
    target = geo.canonicalize(cas.space, target)
    basin = monte_carlo_basin(cas.full, target, region, p.cascade_n, p.cascade_horizon, p.conv_tol,
                              p.seed, p.basin_tol, stream_name="cascade-basin")
    eigs = sorted_eigenvalues(linearize(cas.full, target))
    cls = classify(eigs, p.hyp_tol)
    rate = local_exponential_rate(cas.full, target, seed=p.seed)
    evidence = _basin_evidence(basin, p.cascade_threshold)
    evidence.update({"target": target.tolist(), "classification": str(cls),
                     "eigenvalues": [[e.real, e.imag] for e in eigs],
                     "local_exponential_rate": rate, "local_rate_min": p.local_rate_min})
    ok = (basin.fraction >= p.cascade_threshold and basin.n_diverged == 0
          and cls.kind == "stable" and rate >= p.local_rate_min)
    return CheckResult("cascade_basin", Verdict.PASS if ok else Verdict.FAIL, evidence,
                       {"n": p.cascade_n, "horizon": p.cascade_horizon, "conv_tol": p.conv_tol,
                        "threshold": p.cascade_threshold, "seed": p.seed, "tol": p.basin_tol,
                        "region": region.to_json()},
                       [{"kind": "non_converged", "point": w} for w in basin.witnesses])


def certify_cascade(cas: CascadeDef, V_outer: ScalarField, cert: GrowthCertificate, *,
                    inner_region: geo.RegionSpec, outer_region: geo.RegionSpec,
                    outer_equilibrium_region: geo.RegionSpec, chain_region: geo.RegionSpec,
                    cascade_region: geo.RegionSpec, params: Optional[CertifyParams] = None,
                    outer_target=None) -> CertificationReport:
    p = params or CertifyParams()
    entries = []
    inner = certify_inner_loop(cas.inner, cas.inner_equilibrium, inner_region, p.inner_n,
                               p.inner_horizon, p.conv_tol, p.inner_threshold, p.seed, p.basin_tol,
                               p.hyp_tol, p.grid_per_dim)
    entries.append(inner)
    outer = certify_unforced_outer(
        cas, V_outer, outer_equilibrium_region, chain_region, outer_region,
        grid_per_dim=p.grid_per_dim, hyp_tol=p.hyp_tol, depth=p.depth, rounds=p.rounds, T=p.T,
        eps=p.eps, chain_tol=p.chain_tol, n_traj=p.n_traj, gradient_horizon=p.gradient_horizon,
        gradient_tol=p.gradient_tol, n=p.outer_n, horizon=p.outer_horizon, conv_tol=p.conv_tol,
        threshold=p.outer_threshold, seed=p.seed, tol=p.basin_tol, target=outer_target)
    entries.append(outer)
    entries.append(verify_growth_certificate(
        cas, cert, p.n_x, p.n_y, outer_region, inner_region, p.seed, p.inner_horizon, p.conv_tol,
        p.basin_tol, p.proposals))
    entries.append(check_decay_and_comparison(cas, cert, cascade_region, p))
    x0 = outer.evidence.get("target")
    if x0 is None:
        x0 = np.zeros(cas.outer_space.dim) if outer_target is None else outer_target
    entries.append(check_cascade_basin(cas, cascade_region, cas.join(np.asarray(x0), cas.inner_equilibrium), p))
    parameters = asdict(p)
    parameters.update({"inner_region": inner_region.to_json(), "outer_region": outer_region.to_json(),
                       "outer_equilibrium_region": outer_equilibrium_region.to_json(),
                       "chain_region": chain_region.to_json(), "cascade_region": cascade_region.to_json(),
                       "certificate_c": cert.c,
                       "horizon_note": "all limits are certified only up to the stated finite horizons"})
    return CertificationReport(cas.name, entries, parameters)
