"""Matplotlib renderings: scenes, time-field contours, planned paths, benchmark bars."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle as CirclePatch  # noqa: E402
from matplotlib.patches import Polygon as PolygonPatch  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .scene import JOINT_2LINK, SE2, Circle, CSpace, Workspace, forward_kinematics  # noqa: E402

CONTOUR_LEVELS = 20


def draw_workspace(ax, w: Workspace) -> None:
    lo, hi = np.asarray(w.lower), np.asarray(w.upper)
    ax.add_patch(Rectangle(lo, *(hi - lo), fill=False, lw=1.5, ec="black"))
    for ob in w.obstacles:
        if isinstance(ob, Circle):
            ax.add_patch(CirclePatch(ob.center, ob.radius, fc="0.35", ec="black"))
        else:
            ax.add_patch(PolygonPatch(ob.array, closed=True, fc="0.35", ec="black"))
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])


def draw_time_contours(ax, field, space: CSpace, source, n: int = 96) -> None:
    """Iso-contours of ``T(source, .)`` over the workspace plane (SE2 at the source heading)."""
    xs = np.linspace(space.lower[0], space.upper[0], n)
    ys = np.linspace(space.lower[1], space.upper[1], n)
    X, Y = np.meshgrid(xs, ys)
    q = np.stack([X.ravel(), Y.ravel()], axis=1)
    if space.tag == SE2:
        q = np.concatenate([q, np.full((len(q), 1), float(source[2]))], axis=1)
    T = np.asarray(field.times(np.repeat(np.asarray(source, float)[None], len(q), 0), q)).reshape(n, n)
    ax.contour(X, Y, T, levels=CONTOUR_LEVELS, linewidths=0.6, cmap="viridis")


def _xy(space: CSpace, path, robot=None) -> np.ndarray:
    path = np.asarray(path, float)
    if space.tag == JOINT_2LINK:
        tips = []
        for c in path:
            tf = forward_kinematics(c, robot.link_lengths, robot.base)
            tips.append(tf[-1].apply(np.array([[robot.link_lengths[-1], 0.0]]))[0])
        return np.asarray(tips)
    return path[:, :2]


def render_plan(out_path, w: Workspace, space: CSpace, path, s, g, field=None, robot=None) -> None:
    """Workspace, obstacles, 20 time-field contours from ``s``, path polyline, endpoints.

    The format follows the file suffix (``.svg``, ``.png``, ...). Joint-space paths are
    drawn as end-effector traces with the arm at both endpoints.
    """
    fig, ax = plt.subplots(figsize=(5, 5))
    draw_workspace(ax, w)
    if field is not None and space.tag != JOINT_2LINK:
        draw_time_contours(ax, field, space, s)
    if path is not None and len(path):
        xy = _xy(space, path, robot)
        ax.plot(xy[:, 0], xy[:, 1], "-", color="tab:red", lw=1.8, label="path")
    ends = _xy(space, np.stack([s, g]), robot)
    ax.plot(*ends[0], "o", color="tab:green", ms=8, label="start")
    ax.plot(*ends[1], "*", color="tab:blue", ms=12, label="goal")
    if space.tag == JOINT_2LINK:
        for c, col in ((s, "tab:green"), (g, "tab:blue")):
            tf = forward_kinematics(c, robot.link_lengths, robot.base)
            pts = [robot.base] + [t.apply(np.array([[L, 0.0]]))[0] for t, L in zip(tf, robot.link_lengths)]
            pts = np.asarray(pts)
            ax.plot(pts[:, 0], pts[:, 1], "-", color=col, lw=3, alpha=0.6)
    ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def bench_figure(rows, out_path) -> None:
    names = [r.planner for r in rows]
    x = np.arange(len(rows))
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].bar(x - 0.2, [r.sr for r in rows], 0.4, label="SR")
    axes[0].bar(x + 0.2, [r.csr for r in rows], 0.4, label="CSR")
    axes[0].set_ylabel("%")
    axes[0].set_ylim(0, 100)
    axes[0].legend(fontsize=7)
    lengths = [0.0 if math.isnan(r.mean_length) else r.mean_length for r in rows]
    axes[1].bar(x, lengths, 0.5, color="tab:gray")
    axes[1].set_ylabel("mean length")
    for ax in axes:
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=20, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def paths_figure(w: Workspace, space: CSpace, pairs, results: dict, out_path, n_show: int = 6) -> None:
    """Successful paths of every planner on the first few shared test pairs."""
    fig, ax = plt.subplots(figsize=(5, 5))
    draw_workspace(ax, w)
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    if space.tag != JOINT_2LINK:
        for k, (name, res) in enumerate(results.items()):
            first = True
            for r in res[:n_show]:
                if r.success and len(r.path) > 1:
                    p = np.asarray(r.path)
                    ax.plot(p[:, 0], p[:, 1], color=colors[k % len(colors)], lw=1,
                            label=name if first else None)
                    first = False
        ends = np.asarray(pairs[:n_show])[:, :, :2]
        ax.plot(ends[:, 0, 0], ends[:, 0, 1], "o", color="tab:green", ms=4)
        ax.plot(ends[:, 1, 0], ends[:, 1, 1], "*", color="tab:blue", ms=6)
        ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
