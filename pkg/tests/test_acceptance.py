"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[PASS]`` or ``[FAIL]`` line with the measured
quantity next to its tolerance. Run ``python3 tests/test_acceptance.py`` to see
only these lines.
"""
import io
import json
import math
import sys

import numpy as np
import pytest

from cascadecert import certify as K
from cascadecert import chainrec as C
from cascadecert import cli
from cascadecert import dynamics as dyn
from cascadecert import equilibria as E
from cascadecert import geometry as geo
from cascadecert import integrate as I
from cascadecert import systems as S
from cascadecert.verdicts import Verdict

TS1_3 = geo.RegionSpec(S.TS1, (None, (-3.0, 3.0)))
TS1_4 = geo.RegionSpec(S.TS1, (None, (-4.0, 4.0)))
TS1_5 = geo.RegionSpec(S.TS1, (None, (-5.0, 5.0)))
BOX2 = geo.RegionSpec(S.PLANE, ((-2.0, 2.0), (-2.0, 2.0)))
T2R2 = S.torus_cascade().full.space


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return emit


def _certify(tmp_path, name):
    out = tmp_path / name
    code = cli.main(["certify", "paper-example", "--out", str(out)], stdout=io.StringIO())
    return code, out / "report.json"


def test_01_end_to_end_certification(tmp_path, report):
    code, path = _certify(tmp_path, "run")
    rep = json.loads(path.read_text())
    verdicts = {c["condition"]: c["verdict"] for c in rep["conditions"]}
    growth = next(c for c in rep["conditions"] if c["condition"] == "growth_certificate")
    pairs = growth["parameters"]["n_x"] * growth["parameters"]["n_y"]
    viol = growth["evidence"]["max_violation"]
    cert = S.torus_certificate()
    y = np.array([[0.3, 0.0], [math.pi / 2, 0.0]])
    exact = np.allclose(cert.alpha(y), 4.0 * (1.0 - np.cos(2.0 * y[:, 0])), rtol=0, atol=0) \
        and np.all(cert.beta(y) == 0.0) and cert.c == 4.0
    ok = (code == 0 and rep["overall"] == "PASS" and len(verdicts) == 5
          and set(verdicts.values()) == {"PASS"} and pairs >= 100_000 and viol <= 1e-9 and exact)
    report(1, ok, f"overall={rep['overall']} conditions={verdicts} growth pairs={pairs} "
                  f"max violation={viol:.3e} (<= 1e-9)")


@pytest.mark.parametrize("order", ["theta,thetadot,phi,phidot", "phi,phidot,theta,thetadot"])
def test_02_reference_tuples_converge(order, report):
    cas = S.torus_cascade()
    finals = []
    for tup in S.REFERENCE_INITIAL_CONDITIONS:
        z = np.array(tup) if order.startswith("theta") else np.array(tup[2:] + tup[:2])
        tr = I.flow(cas.full, z, 200.0, 1e-9)
        finals.append(float(geo.dist(T2R2, tr.points[-1], np.zeros(4))))
    ok = max(finals) < 1e-3
    report(2, ok, f"ordering ({order}): {len(finals)} tuples, final distances "
                  f"{', '.join(f'{d:.2e}' for d in finals)} (< 1e-3)")


def test_03_pendulum_equilibria_and_eigenvalues(report):
    eqs = E.find_equilibria(S.pendulum(), TS1_5)
    pts = np.array([e.point for e in eqs])
    found = len(eqs) == 2 and np.allclose(pts, [[-math.pi, 0.0], [0.0, 0.0]], atol=1e-10)
    # independent oracle: companion-matrix roots of the characteristic polynomials
    oracle = {0.0: np.roots([1.0, 1.0, 1.0]), -math.pi: np.roots([1.0, 1.0, -1.0])}
    errs = []
    for e in eqs:
        ref = oracle[min(oracle, key=lambda k: abs(k - e.point[0]))]
        err, _ = E.pair_eigenvalues(e.eigenvalues, ref)
        errs.append(err)
    closed = np.sort_complex(np.array([(-1 + 1j * math.sqrt(3)) / 2, (-1 - 1j * math.sqrt(3)) / 2]))
    agree = np.allclose(np.sort_complex(oracle[0.0]), closed, atol=1e-14)
    ok = found and agree and max(errs) <= 1e-8
    report(3, ok, f"equilibria={pts.round(12).tolist()} max eigenvalue error={max(errs):.2e} (<= 1e-8)")


def test_04_block_triangular_spectrum(report):
    cas = S.torus_cascade()
    slice_eqs = E.find_equilibria(dyn.unforced_outer(cas), TS1_5)
    errs = []
    for e in slice_eqs:
        z = cas.join(e.point, cas.inner_equilibrium)
        full = np.linalg.eigvals(dyn.jacobian(cas.full, z))
        # independent blocks: finite-difference Jacobians of each loop on its own
        a = dyn.fd_jacobian(lambda x: cas.f(x, cas.inner_equilibrium), e.point)
        b = dyn.fd_jacobian(cas.inner.field, cas.inner_equilibrium)
        union = np.concatenate([np.linalg.eigvals(a), np.linalg.eigvals(b)])
        err, _ = E.pair_eigenvalues(full, union)
        errs.append(err)
    ok = len(slice_eqs) == 2 and max(errs) <= 1e-6
    report(4, ok, f"{len(slice_eqs)} slice equilibria, max spectrum mismatch={max(errs):.2e} (<= 1e-6)")


def test_05_chain_recurrence(report):
    pend = S.pendulum()
    eqs = E.find_equilibria(pend, TS1_3)
    run = C.subdivide(pend, TS1_3, depth=6, rounds=3, T=5.0, equilibria=eqs)
    cover = run.cover
    eps = cover.diameter
    W = S.pendulum_energy()
    centers = cover.centers[run.approx.recurrent]
    lo, _ = C.box_value_ranges(cover, run.approx.recurrent, W)
    inside = centers[lo <= 4.5]
    eq_pts = np.array([e.point for e in eqs])
    d = geo.dist(S.TS1, inside[:, None], eq_pts[None]).min(axis=1)
    pend_ok = cover.depth >= 6 and len(inside) > 0 and d.max() <= 2 * (cover.diameter + eps)

    lc = S.limit_cycle()
    lc_eqs = E.find_equilibria(lc, BOX2)
    lc_run = C.subdivide(lc, BOX2, depth=6, rounds=3, T=5.0, equilibria=lc_eqs)
    verdict = C.check_R_equals_E(lc_run.approx, lc_run.cover, lc_eqs).verdict
    ang = np.linspace(-math.pi, math.pi, 360, endpoint=False)
    circle = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rec = lc_run.cover.centers[lc_run.approx.recurrent]
    covered = np.all(np.abs(circle[:, None] - rec[None]) <= lc_run.cover.half_widths + 1e-12, axis=-1).any(axis=1)
    lc_ok = verdict == Verdict.FAIL and covered.all()
    report(5, pend_ok and lc_ok,
           f"pendulum depth={cover.depth} max dist to equilibria={d.max():.3f} "
           f"(<= {2 * (cover.diameter + eps):.3f}); limit cycle verdict={verdict.value}, "
           f"unit circle covered at {covered.mean():.0%} of 360 angles")


def test_06_energy_monotonicity(report):
    tol = 1e-9
    rng = np.random.default_rng(6)
    kappa = np.array([[2.0, 0.3], [0.3, 1.0]])
    nu = np.array([[0.5, 0.1], [0.1, 0.8]])
    V = S.cosine_potential(geo.SpaceSpec((geo.Factor.CIRCLE, geo.Factor.CIRCLE)))
    mech = [(S.pendulum(), S.pendulum_energy(), TS1_4),
            (dyn.make_mechanical_system(V.space, kappa, nu, V), dyn.total_energy(kappa, V),
             None)]
    worst, count = -np.inf, 0
    for sys_, W, region in mech:
        if region is None:
            region = geo.RegionSpec(sys_.space, (None, None, (-3.0, 3.0), (-3.0, 3.0)))
        starts = region.sample(rng, 50)
        te = np.linspace(0.0, 30.0, 601)
        res = I.flow_batch(sys_, starts, 30.0, tol, te)
        assert res.ok.all()
        worst = max(worst, float(np.diff(W(res.samples), axis=1).max()))
        count += len(starts)
    eqs = E.find_equilibria(S.undamped_pendulum(), TS1_4)
    neg = C.verify_gradient_like(S.undamped_pendulum(), S.pendulum_energy(), eqs, n_traj=100,
                                 horizon=50.0, region=TS1_4)
    ok = count == 100 and worst <= 10 * tol and neg.verdict == Verdict.FAIL
    report(6, ok, f"{count} trajectories, max energy increase={worst:.2e} (<= {10 * tol:.0e}); "
                  f"undamped verify_gradient_like={neg.verdict.value}")


def test_07_basin_estimation(report):
    pb = K.monte_carlo_basin(S.pendulum(), [0.0, 0.0], TS1_4, 10_000, 100.0, seed=0)
    cas = S.torus_cascade()
    region = geo.RegionSpec(T2R2, (None, (-4.0, 4.0), None, (-4.0, 4.0)))
    cb = K.monte_carlo_basin(cas.full, np.zeros(4), region, 10_000, 200.0, seed=0)
    ok = pb.fraction >= 0.999 and cb.fraction >= 0.99 and 0.0 < pb.wilson_lower <= pb.fraction
    report(7, ok, f"pendulum fraction={pb.fraction:.4f} (>= 0.999, Wilson low={pb.wilson_lower:.4f}); "
                  f"cascade fraction={cb.fraction:.4f} (>= 0.99, Wilson low={cb.wilson_lower:.4f})")


def test_08_comparison_bound(report):
    cas, cert = S.torus_cascade(), S.torus_certificate()
    region = geo.RegionSpec(T2R2, (None, (-4.0, 4.0), None, (-4.0, 4.0)))
    starts = region.sample(np.random.default_rng(8), 20)
    te = np.arange(0.0, 100.0 + 0.025, 0.05)
    margins, fails = [], 0
    for s in starts:
        tr = I.flow(cas.full, s, 100.0, 1e-9, t_eval=te)
        x, y = cas.split(tr.points)
        env, _ = K.estimate_decay_envelope(I.Trajectory(S.TS1, tr.times, y), cert)
        a = cert.alpha(y)
        if np.any(a > env.A * np.exp(-env.omega * tr.times) * (1 + 1e-12)):
            fails += 1
            continue
        Wx = cert.W(x)
        above = np.flatnonzero(Wx >= cert.c)
        if above.size == 0:
            continue
        t1 = above[0]
        bound = math.exp(env.A / env.omega) * (max(cert.c, Wx[t1]) + env.B / env.omega)
        margins.append(math.log(bound) - math.log(Wx[t1:].max()))
        fails += int(margins[-1] < 0)
    ok = fails == 0
    report(8, ok, f"20 trajectories, {len(margins)} non-vacuous, "
                  f"min log margin={min(margins) if margins else float('inf'):.3f} (>= 0)")


def test_09_determinism(tmp_path, report):
    _, a = _certify(tmp_path, "a")
    _, b = _certify(tmp_path, "b")
    ok = a.read_bytes() == b.read_bytes()
    report(9, ok, f"report.json byte-identical across two runs ({len(a.read_bytes())} bytes)")


def test_10_negative_controls(report):
    und = S.undamped_inner_cascade()
    c1 = K.certify_inner_loop(und.inner, und.inner_equilibrium, TS1_4)
    lc = S.limit_cycle_cascade()
    c2 = K.certify_unforced_outer(lc, S.quadratic_energy(), BOX2, BOX2, BOX2, target=[0.0, 0.0])
    c3 = K.verify_growth_certificate(S.unbounded_cascade(), S.torus_certificate(), 1000, 100,
                                     TS1_4, TS1_4)
    ok = (c1.verdict == Verdict.FAIL and c2.verdict == Verdict.FAIL
          and c3.verdict in (Verdict.FAIL, Verdict.INCONCLUSIVE))
    report(10, ok, f"undamped inner: inner_loop={c1.verdict.value}; limit-cycle outer: "
                   f"unforced_outer={c2.verdict.value}; unbounded h: growth_certificate={c3.verdict.value}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
