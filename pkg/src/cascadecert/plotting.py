"""Static SVG figures: trajectory projections, box covers and basin samples.

Every function returns the SVG document as bytes.  Output is byte-identical
for identical input: the SVG id salt is fixed and no date is embedded.
"""
from __future__ import annotations

import io
from typing import Optional, Sequence

import matplotlib
import numpy as np
from matplotlib.collections import PatchCollection
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from . import geometry as geo
from .errors import InputError

TIME_AXIS = -1
_RC = {"svg.hashsalt": "cascadecert", "svg.fonttype": "path"}


def check_axes(space: geo.SpaceSpec, axes, allow_time: bool = True) -> tuple[int, int]:
    """Validate a pair of coordinate indices; ``-1`` selects time when allowed."""
    try:
        a, b = (int(v) for v in axes)
    except (TypeError, ValueError):
        raise InputError(f"axes must be two integers, got {axes!r}") from None
    lo = TIME_AXIS if allow_time else 0
    for v in (a, b):
        if not lo <= v < space.dim:
            raise InputError(f"axis {v} out of range for a {space.dim}-dim state")
    if a == b:
        raise InputError("the two plot axes must differ")
    return a, b


def default_axes(space: geo.SpaceSpec) -> tuple[int, int]:
    return (0, 1) if space.dim >= 2 else (TIME_AXIS, 0)


def _label(i: int, names: Optional[Sequence[str]]) -> str:
    if i == TIME_AXIS:
        return "t"
    return names[i] if names else f"coord_{i}"


def _limits(space: geo.SpaceSpec, i: int):
    if i >= 0 and space.circle_mask[i]:
        return (-np.pi, np.pi)
    return None


def _column(times, points, i):
    return np.asarray(times, dtype=float) if i == TIME_AXIS else points[:, i]


def projected_path(space: geo.SpaceSpec, times, points, axes) -> np.ndarray:
    """(x, y) polyline with NaN rows inserted where a circle coordinate wraps."""
    points = np.asarray(points, dtype=float).reshape(-1, space.dim)
    if len(points) == 0:
        return np.empty((0, 2))
    xy = np.stack([_column(times, points, a) for a in axes], axis=-1)
    wrap = np.zeros(len(points) - 1, dtype=bool)
    for k, a in enumerate(axes):
        if a >= 0 and space.circle_mask[a]:
            wrap |= np.abs(np.diff(xy[:, k])) > np.pi
    if not wrap.any():
        return xy
    cut = np.flatnonzero(wrap) + 1
    return np.insert(xy, cut, np.nan, axis=0)


def _render(fig: Figure) -> bytes:
    buf = io.BytesIO()
    with matplotlib.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def _new_axes(space, axes, names, title):
    fig = Figure(figsize=(6, 5))
    ax = fig.add_subplot()
    ax.set_xlabel(_label(axes[0], names))
    ax.set_ylabel(_label(axes[1], names))
    for setter, i in ((ax.set_xlim, axes[0]), (ax.set_ylim, axes[1])):
        lim = _limits(space, i)
        if lim is not None:
            setter(*lim)
    if title:
        ax.set_title(title)
    return fig, ax


def trajectory_svg(space: geo.SpaceSpec, trajectories: Sequence, axes=None,
                   names: Optional[Sequence[str]] = None, title: str = "",
                   target=None) -> bytes:
    """Trajectories given as ``(times, points)`` pairs, projected onto ``axes``."""
    axes = check_axes(space, default_axes(space) if axes is None else axes)
    fig, ax = _new_axes(space, axes, names, title)
    for times, points in trajectories:
        xy = projected_path(space, times, points, axes)
        if len(xy):
            ax.plot(xy[:, 0], xy[:, 1], lw=0.8)
            ax.plot(xy[0, 0], xy[0, 1], "o", ms=3, color="k")
    if target is not None and TIME_AXIS not in axes:
        ax.plot(target[axes[0]], target[axes[1]], "o", color="red", ms=5)
    return _render(fig)


def boxes_svg(space: geo.SpaceSpec, centers, half_widths, axes=None,
              names: Optional[Sequence[str]] = None, title: str = "",
              equilibria=None) -> bytes:
    """Box cover projected onto two coordinates, with optional equilibrium markers."""
    axes = check_axes(space, default_axes(space) if axes is None else axes, allow_time=False) \
        if space.dim >= 2 else (0, 0)
    fig, ax = _new_axes(space, axes, names, title)
    centers = np.asarray(centers, dtype=float).reshape(-1, space.dim)
    hw = np.broadcast_to(np.asarray(half_widths, dtype=float), centers.shape)
    a, b = axes
    rects = []
    for c, h in zip(centers, hw):
        hb = h[b] if space.dim >= 2 else 0.05
        cb = c[b] if space.dim >= 2 else 0.0
        rects.append(Rectangle((c[a] - h[a], cb - hb), 2 * h[a], 2 * hb))
    if rects:
        ax.add_collection(PatchCollection(rects, facecolor="tab:blue", edgecolor="navy",
                                          alpha=0.5, linewidth=0.3))
        ax.autoscale_view()
    if equilibria is not None and len(equilibria):
        eq = np.asarray(equilibria, dtype=float).reshape(-1, space.dim)
        ax.plot(eq[:, a], eq[:, b] if space.dim >= 2 else np.zeros(len(eq)), "x", color="red", ms=7)
    return _render(fig)


def basin_svg(space: geo.SpaceSpec, starts, converged, axes=None,
              names: Optional[Sequence[str]] = None, title: str = "", target=None) -> bytes:
    """Scatter of sampled initial conditions, colored by whether they converged."""
    axes = check_axes(space, default_axes(space) if axes is None else axes)
    fig, ax = _new_axes(space, axes, names, title)
    starts = np.asarray(starts, dtype=float).reshape(-1, space.dim)
    ok = np.asarray(converged, dtype=bool).reshape(-1)
    if len(starts):
        t = np.zeros(len(starts))
        x = _column(t, starts, axes[0])
        y = _column(t, starts, axes[1])
        ax.scatter(x[ok], y[ok], s=1, color="tab:green", label="converged", rasterized=False)
        ax.scatter(x[~ok], y[~ok], s=4, color="tab:red", label="not converged")
        ax.legend(loc="upper right", fontsize="small")
    if target is not None and TIME_AXIS not in axes:
        ax.plot(target[axes[0]], target[axes[1]], "*", color="k", ms=8)
    return _render(fig)
