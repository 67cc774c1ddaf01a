"""Box-cover approximation of the chain recurrent set.

A :class:`BoxCover` is a set of equal-size boxes from a uniform dyadic grid on
a :class:`~cascadecert.geometry.RegionSpec`.  Flowing sample points of every
box for time ``T`` and linking each endpoint to all boxes within ``eps`` of it
gives a transition graph whose cycles carry every closed (eps, T)-chain seen
at this resolution.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.stats import qmc

from . import geometry as geo
from .dynamics import ScalarField, SystemDef
from .equilibria import EquilibriumRecord, find_equilibria
from .errors import InputError, ResourceError
from .integrate import OK, flow_batch
from .verdicts import CheckResult, Verdict

log = logging.getLogger(__name__)

MAX_BOXES = 10_000_000
LATTICE_POINTS = 16
LATTICE_SEED = 20240611


@dataclass(frozen=True, eq=False)
class BoxCover:
    region: geo.RegionSpec
    depth: int
    # integer grid coordinates of each box, shape (n_boxes, dim), lexicographically sorted
    index: np.ndarray

    def __len__(self):
        return len(self.index)

    @property
    def space(self) -> geo.SpaceSpec:
        return self.region.space

    @property
    def cells_per_axis(self) -> int:
        return 2 ** self.depth

    @property
    def widths(self) -> np.ndarray:
        return (self.region.highs - self.region.lows) / self.cells_per_axis

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * self.widths

    @property
    def centers(self) -> np.ndarray:
        return self.region.lows + (self.index + 0.5) * self.widths

    @property
    def diameter(self) -> float:
        return float(geo.norm(self.space, self.widths))

    @property
    def volume(self) -> float:
        return float(len(self) * np.prod(self.widths))

    def linear_index(self, idx: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(idx).T), (self.cells_per_axis,) * self.space.dim)

    def lookup(self, idx: np.ndarray) -> np.ndarray:
        """Box ids for grid coordinates ``idx`` (``-1`` where the box is not in the cover)."""
        keys = self.linear_index(self.index)
        q = self.linear_index(idx)
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, len(keys) - 1)
        return np.where(keys[pos] == q, pos, -1)

    def locate(self, p: np.ndarray) -> np.ndarray:
        """Grid coordinates of the cell containing each point (clipped into range)."""
        u = (np.asarray(p) - self.region.lows) / self.widths
        return np.clip(np.floor(u).astype(int), 0, self.cells_per_axis - 1)


def _check_count(n_per_axis: int, dim: int, count: Optional[int] = None):
    total = count if count is not None else n_per_axis ** dim
    if total > MAX_BOXES:
        raise ResourceError(f"{total} boxes exceeds the limit of {MAX_BOXES}")


def build_cover(region: geo.RegionSpec, depth: int) -> BoxCover:
    if depth < 0:
        raise InputError("depth must be nonnegative")
    k = 2 ** depth
    dim = region.space.dim
    _check_count(k, dim)
    grids = np.meshgrid(*([np.arange(k)] * dim), indexing="ij")
    index = np.stack([g.ravel() for g in grids], axis=-1)
    return BoxCover(region, depth, index)


def refine(cover: BoxCover, keep: Iterable[int]) -> BoxCover:
    keep = np.unique(np.asarray(list(keep), dtype=int))
    if keep.size == 0:
        raise InputError("refine needs a nonempty set of boxes to keep")
    dim = cover.space.dim
    _check_count(0, dim, keep.size * 2 ** dim)
    bits = np.array(list(itertools.product((0, 1), repeat=dim)))
    children = (2 * cover.index[keep])[:, None, :] + bits[None, :, :]
    children = children.reshape(-1, dim)
    order = np.lexsort(children.T[::-1])
    return BoxCover(cover.region, cover.depth + 1, children[order])


def sample_offsets(dim: int, samples_per_box: Optional[int] = None) -> np.ndarray:
    """Unit-box offsets in [-1, 1]^dim: center, corners, then a scrambled Sobol' set."""
    center = np.zeros((1, dim))
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=dim)))
    lattice = qmc.Sobol(dim, scramble=True, seed=LATTICE_SEED).random(LATTICE_POINTS) * 2.0 - 1.0
    offsets = np.concatenate([center, corners, lattice])
    if samples_per_box is None:
        return offsets
    if samples_per_box < 1:
        raise InputError("samples_per_box must be at least 1")
    if samples_per_box > len(offsets):
        extra = qmc.Sobol(dim, scramble=True, seed=LATTICE_SEED + 1).random(
            samples_per_box - len(offsets)) * 2.0 - 1.0
        offsets = np.concatenate([offsets, extra])
    return offsets[:samples_per_box]


@dataclass
class TransitionGraph:
    cover: BoxCover
    # unique sorted edges; node ``exit_node`` (= number of boxes) collects escapes
    src: np.ndarray
    dst: np.ndarray
    eps: float
    T: float
    samples_per_box: int
    n_exit: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.cover) + 1

    @property
    def exit_node(self) -> int:
        return len(self.cover)

    def successors(self) -> list[np.ndarray]:
        order = np.argsort(self.src, kind="stable")
        src, dst = self.src[order], self.dst[order]
        bounds = np.searchsorted(src, np.arange(self.n_nodes + 1))
        return [dst[bounds[i]:bounds[i + 1]] for i in range(self.n_nodes)]

    def edge_set(self) -> set[tuple[int, int]]:
        return set(zip(self.src.tolist(), self.dst.tolist()))


def _candidate_offsets(cover: BoxCover, eps: float) -> np.ndarray:
    # any point within metric distance eps differs by at most eps/sqrt(lambda_min) per axis
    reach = eps / np.sqrt(np.linalg.eigvalsh(cover.space.metric).min())
    span = np.ceil(reach / cover.widths).astype(int)
    ranges = [np.arange(-s, s + 1) for s in span]
    return np.array(list(itertools.product(*ranges)), dtype=int)


def _gap_distance(cover: BoxCover, p: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Distance from points to boxes given by grid coordinates (per-axis gap vector)."""
    centers = cover.region.lows + (idx + 0.5) * cover.widths
    d = geo.difference(cover.space, centers, p)
    gap = np.maximum(np.abs(d) - cover.half_widths, 0.0)
    return geo.norm(cover.space, gap)


def boxes_near(cover: BoxCover, points: np.ndarray, eps: float, chunk: int = 20000):
    """For each point, ids of cover boxes at distance < eps; returns (point_idx, box_id)."""
    offsets = _candidate_offsets(cover, eps)
    k = cover.cells_per_axis
    circle = cover.space.circle_mask
    out_p, out_b = [], []
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk]
        base = cover.locate(p)
        cand = base[:, None, :] + offsets[None, :, :]
        cand[..., circle] %= k
        valid = np.all((cand >= 0) & (cand < k), axis=-1)
        pi, oi = np.nonzero(valid)
        idx = cand[pi, oi]
        near = _gap_distance(cover, p[pi], idx) < eps
        pi, idx = pi[near], idx[near]
        ids = cover.lookup(idx)
        found = ids >= 0
        out_p.append(pi[found] + start)
        out_b.append(ids[found])
    if not out_p:
        return np.array([], dtype=int), np.array([], dtype=int)
    return np.concatenate(out_p), np.concatenate(out_b)


def build_transition_graph(cover: BoxCover, sys: SystemDef, T: float, eps: Optional[float] = None,
                           samples_per_box: Optional[int] = None, tol: float = 1e-6) -> TransitionGraph:
    if not T > 0:
        raise InputError("T must be positive")
    eps = cover.diameter if eps is None else float(eps)
    if not eps > 0:
        raise InputError("eps must be positive")
    space = cover.space
    offsets = sample_offsets(space.dim, samples_per_box)
    S = len(offsets)
    starts = cover.centers[:, None, :] + offsets[None, :, :] * cover.half_widths
    starts = geo.canonicalize(space, starts.reshape(-1, space.dim))
    owner = np.repeat(np.arange(len(cover)), S)

    res = flow_batch(sys, starts, T, tol)
    ends = res.final
    inside = (res.status == OK) & cover.region.contains(ends)
    n_div = int(np.sum(res.status != OK))
    if n_div:
        log.info("%d sample flows diverged; routed to EXIT", n_div)

    pi, bi = boxes_near(cover, ends[inside], eps)
    src = owner[np.flatnonzero(inside)[pi]]
    landed = np.zeros(len(ends), dtype=bool)
    landed[np.flatnonzero(inside)[pi]] = True
    exit_src = owner[~landed]
    exit_node = len(cover)
    src = np.concatenate([src, exit_src])
    dst = np.concatenate([bi, np.full(exit_src.size, exit_node)])
    edges = np.unique(np.stack([src, dst], axis=-1), axis=0) if src.size else np.zeros((0, 2), int)
    return TransitionGraph(cover, edges[:, 0].copy(), edges[:, 1].copy(), eps, float(T), S,
                           int((~landed).sum()))


def tarjan_scc(n: int, successors: list) -> np.ndarray:
    """Iterative Tarjan; returns a component id per node (ids in reverse topological order)."""
    index = np.full(n, -1)
    low = np.zeros(n, dtype=int)
    on_stack = np.zeros(n, dtype=bool)
    comp = np.full(n, -1)
    stack: list[int] = []
    counter = 0
    n_comp = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, i = work[-1]
            succ = successors[v]
            if i < len(succ):
                work[-1] = (v, i + 1)
                w = int(succ[i])
                if index[w] < 0:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = n_comp
                    if w == v:
                        break
                n_comp += 1
    return comp


@dataclass
class ChainRecurrentApprox:
    recurrent: np.ndarray  # sorted box ids
    component: np.ndarray  # SCC id per box (EXIT excluded)
    eps: float
    T: float
    depth: int

    def __len__(self):
        return len(self.recurrent)


def chain_recurrent_approx(g: TransitionGraph) -> ChainRecurrentApprox:
    n = g.n_nodes
    comp = tarjan_scc(n, g.successors())
    sizes = np.bincount(comp, minlength=comp.max() + 1)
    rec = sizes[comp] > 1
    loops = g.src[g.src == g.dst]
    rec[loops] = True
    rec[g.exit_node] = False
    return ChainRecurrentApprox(np.flatnonzero(rec[:-1]), comp[:-1], g.eps, g.T, g.cover.depth)


@dataclass
class ChainRecurrenceRun:
    """All rounds of a subdivision loop, finest last."""

    covers: list
    graphs: list
    approxes: list

    @property
    def cover(self) -> BoxCover:
        return self.covers[-1]

    @property
    def approx(self) -> ChainRecurrentApprox:
        return self.approxes[-1]

    @property
    def graph(self) -> TransitionGraph:
        return self.graphs[-1]


def default_T(eqs: list[EquilibriumRecord]) -> float:
    """Five times the slowest linear time constant over stable equilibria, else 1.0."""
    rates = [float(np.min(-np.real(r.eigenvalues))) for r in eqs if r.classification.kind == "stable"]
    return 5.0 / min(rates) if rates else 1.0


def subdivide(sys: SystemDef, region: geo.RegionSpec, depth: int, rounds: int = 3,
              T: Optional[float] = None, eps: Optional[float] = None,
              samples_per_box: Optional[int] = None, tol: float = 1e-6,
              equilibria: Optional[list[EquilibriumRecord]] = None) -> ChainRecurrenceRun:
    """Uniform cover at ``depth - rounds``, then ``rounds`` refine-and-rebuild passes.

    With ``eps=None`` every pass uses the current box diameter; with ``T=None``
    the flow time comes from :func:`default_T` on ``equilibria`` (searched in
    ``region`` when not given).
    """
    if rounds < 0 or rounds > depth:
        raise InputError("need 0 <= rounds <= depth")
    if T is None:
        T = default_T(find_equilibria(sys, region) if equilibria is None else equilibria)
    cover = build_cover(region, depth - rounds)
    covers, graphs, approxes = [], [], []
    for r in range(rounds + 1):
        g = build_transition_graph(cover, sys, T, eps, samples_per_box, tol)
        a = chain_recurrent_approx(g)
        covers.append(cover)
        graphs.append(g)
        approxes.append(a)
        log.info("depth %d: %d boxes, %d recurrent", cover.depth, len(cover), len(a))
        if r == rounds:
            break
        if len(a) == 0:
            break
        cover = refine(cover, a.recurrent)
    return ChainRecurrenceRun(covers, graphs, approxes)


def _box_contains(cover: BoxCover, ids: np.ndarray, p: np.ndarray, slack: float = 1e-12) -> np.ndarray:
    d = geo.difference(cover.space, cover.centers[ids], p)
    return np.all(np.abs(d) <= cover.half_widths + slack, axis=-1)


def check_R_equals_E(approx: ChainRecurrentApprox, cover: BoxCover, eqs: list[EquilibriumRecord],
                     margin: Optional[float] = None) -> CheckResult:
    """Recurrent boxes must hug equilibria, and every equilibrium must be recurrent."""
    margin = 2.0 * (cover.diameter + approx.eps) if margin is None else float(margin)
    space = cover.space
    pts = np.array([e.point for e in eqs]).reshape(-1, space.dim)
    pts = pts[cover.region.contains(pts)] if len(pts) else pts
    centers = cover.centers[approx.recurrent]
    if len(pts) and len(centers):
        d = geo.dist(space, centers[:, None, :], pts[None, :, :]).min(axis=1)
    else:
        d = np.full(len(centers), np.inf)
    far = approx.recurrent[d > margin]
    uncovered = []
    for p in pts:
        hits = _box_contains(cover, approx.recurrent, p) if len(approx.recurrent) else np.array([])
        if not np.any(hits):
            uncovered.append(p.tolist())
    verdict = Verdict.PASS if far.size == 0 and not uncovered else Verdict.FAIL
    witnesses = [{"kind": "recurrent_box_far_from_equilibria", "point": cover.centers[i].tolist(),
                  "distance": float(dd)} for i, dd in zip(far[:100], d[d > margin][:100])]
    witnesses += [{"kind": "equilibrium_not_recurrent", "point": p} for p in uncovered]
    return CheckResult(
        condition="R_equals_E",
        verdict=verdict,
        evidence={
            "recurrent_boxes": int(len(approx)),
            "boxes_far_from_equilibria": int(far.size),
            "max_distance_to_equilibrium": float(d.max()) if d.size else 0.0,
            "equilibria_checked": int(len(pts)),
            "equilibria_not_recurrent": len(uncovered),
            "recurrent_volume": float(len(approx) * np.prod(cover.widths)),
        },
        parameters={"margin": margin, "eps": approx.eps, "T": approx.T, "depth": cover.depth,
                    "box_diameter": cover.diameter},
        witnesses=witnesses,
    )


def box_value_ranges(cover: BoxCover, ids: np.ndarray, V: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Min/max of V over the sample stencil of each box."""
    offsets = sample_offsets(cover.space.dim)
    pts = cover.centers[ids][:, None, :] + offsets[None] * cover.half_widths
    vals = V(geo.canonicalize(cover.space, pts.reshape(-1, cover.space.dim))).reshape(len(ids), -1)
    return vals.min(axis=1), vals.max(axis=1)


def localization_check(approx: ChainRecurrentApprox, cover: BoxCover, V: ScalarField,
                       eqs: list[EquilibriumRecord]) -> CheckResult:
    """Box-level decreasing-function localization: every recurrent box's V-range,
    widened by its own oscillation, must meet the set of equilibrium V-values."""
    levels = np.array([float(V(e.point)) for e in eqs])
    ids = approx.recurrent
    lo, hi = box_value_ranges(cover, ids, V) if len(ids) else (np.array([]), np.array([]))
    osc = hi - lo
    if len(levels) and len(ids):
        hit = np.any((levels[None, :] >= (lo - osc)[:, None]) & (levels[None, :] <= (hi + osc)[:, None]),
                     axis=1)
    else:
        hit = np.zeros(len(ids), dtype=bool)
    bad = ids[~hit]
    return CheckResult(
        condition="localization",
        verdict=Verdict.PASS if bad.size == 0 else Verdict.FAIL,
        evidence={"recurrent_boxes": int(len(ids)), "boxes_off_equilibrium_levels": int(bad.size),
                  "equilibrium_levels": levels.tolist()},
        parameters={"depth": cover.depth},
        witnesses=[{"kind": "box_off_level", "point": cover.centers[i].tolist()} for i in bad[:100]],
    )


def sample_away_from(region: geo.RegionSpec, rng: np.random.Generator, n: int,
                     points: np.ndarray, min_dist: float, max_draws: int = 100) -> np.ndarray:
    """Uniform samples of ``region`` at distance > ``min_dist`` from every row of ``points``."""
    space = region.space
    points = np.asarray(points, dtype=float).reshape(-1, space.dim)
    out = []
    have = 0
    for _ in range(max_draws):
        cand = region.sample(rng, max(n, 64))
        if len(points):
            d = geo.dist(space, cand[:, None, :], points[None, :, :]).min(axis=1)
            cand = cand[d > min_dist]
        out.append(cand)
        have += len(cand)
        if have >= n:
            break
    return np.concatenate(out)[:n]


def verify_gradient_like(sys: SystemDef, V: ScalarField, eqs: list[EquilibriumRecord], n_traj: int,
                         horizon: float, region: geo.RegionSpec, tol: float = 1e-9, seed: int = 0,
                         sample_dt: float = 0.05, window: float = 1.0,
                         start_radius: float = 1e-2, stop_radius: float = 1e-3) -> CheckResult:
    """Sampled evidence that V decreases along nonequilibrium trajectories.

    Two tests per trajectory, both applied only before it enters the
    ``stop_radius`` ball around an equilibrium:

    * non-increase: V(t_{k+1}) <= V(t_k) + 10 tol between consecutive samples;
    * strict decrease: V(t_k) - V(t_k + window) > 10 tol for every full window.

    A conserved V passes the first test but not the second.
    """
    if n_traj < 1:
        raise InputError("n_traj must be at least 1")
    from .streams import stream

    space = sys.space
    slack = 10.0 * tol
    eq_pts = np.array([e.point for e in eqs]).reshape(-1, space.dim)
    rng = stream(seed, "gradient-like")
    starts = sample_away_from(region, rng, n_traj, eq_pts, start_radius)
    t_eval = np.arange(0.0, horizon + 0.5 * sample_dt, sample_dt)
    t_eval = t_eval[t_eval <= horizon]
    res = flow_batch(sys, starts, horizon, tol, t_eval)
    m = len(t_eval)
    w = max(1, int(round(window / sample_dt)))

    vals = V(np.nan_to_num(res.samples.reshape(-1, space.dim))).reshape(len(starts), m)
    if len(eq_pts):
        dmin = geo.dist(space, res.samples[:, :, None, :], eq_pts[None, None, :, :]).min(axis=-1)
    else:
        dmin = np.full((len(starts), m), np.inf)
    entered = dmin < stop_radius
    entry = np.where(entered.any(axis=1), entered.argmax(axis=1), m - 1)

    witnesses = []
    n_increase = n_flat = n_div = 0
    worst_increase = -np.inf
    for i in range(len(starts)):
        if res.status[i] != OK:
            n_div += 1
            witnesses.append({"kind": "divergence", "point": starts[i].tolist(),
                              "time": float(res.t_reached[i])})
            continue
        e = entry[i]
        v = vals[i, :e + 1]
        dv = np.diff(v)
        if dv.size:
            worst_increase = max(worst_increase, float(dv.max()))
        if dv.size and dv.max() > slack:
            n_increase += 1
            k = int(dv.argmax())
            witnesses.append({"kind": "increase", "point": starts[i].tolist(), "time": float(t_eval[k]),
                              "delta": float(dv[k])})
            continue
        if e >= w:
            drop = v[:e + 1 - w] - v[w:e + 1]
            if drop.min() <= slack:
                n_flat += 1
                k = int(drop.argmin())
                witnesses.append({"kind": "not_strictly_decreasing", "point": starts[i].tolist(),
                                  "time": float(t_eval[k]), "window_drop": float(drop[k])})
    bad = n_increase + n_flat + n_div
    return CheckResult(
        condition="gradient_like",
        verdict=Verdict.PASS if bad == 0 else Verdict.FAIL,
        evidence={"trajectories": int(len(starts)), "increases": n_increase,
                  "not_strictly_decreasing": n_flat, "diverged": n_div,
                  "max_consecutive_increase": worst_increase if np.isfinite(worst_increase) else 0.0},
        parameters={"horizon": horizon, "tol": tol, "slack": slack, "sample_dt": sample_dt,
                    "window": window, "start_radius": start_radius, "stop_radius": stop_radius,
                    "seed": seed},
        witnesses=witnesses[:100],
    )
