"""Matplotlib figures for reports: semantic maps, ESN evaluation, grasp boxes.

Everything renders off-screen (Agg) and is written straight to a file.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon as PolygonPatch  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
    "svg.hashsalt": "homecore",  # stable element ids in SVG output
}

# box edges as corner-index pairs, matching OrientedBBox3.corners ordering
_BOX_EDGES = [(0, 1), (0, 2), (0, 4), (1, 3), (1, 5), (2, 3), (2, 6), (3, 7), (4, 5), (4, 6), (5, 7), (6, 7)]


def new_figure(width: float = 6.0, height: float = 4.5):
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(width, height))
    return fig


def save_figure(fig, path, dpi: int = 120) -> Path:
    """Write ``fig`` to ``path`` (format from the suffix) and release it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower().lstrip(".") or "png"
    # drop creation-date style metadata so identical inputs give identical files
    metadata = {"png": {"Software": None}, "svg": {"Date": None}, "pdf": {"CreationDate": None}}.get(suffix)
    with plt.rc_context(STYLE):
        fig.savefig(path, dpi=dpi, format=suffix, metadata=metadata)
    plt.close(fig)
    return path


def _rgb(color) -> tuple[float, float, float]:
    return tuple(c / 255.0 for c in color)


def plot_semantic_map(smap, table: dict, world=None, title: str | None = None):
    """Filled room, furniture and door polygons; optional objects, people and robot."""
    x0, y0, x1, y1 = smap.bounds()
    aspect = (y1 - y0) / max(x1 - x0, 1e-9)
    fig = new_figure(7.0, max(2.5, 7.0 * aspect))
    ax = fig.add_subplot(111)
    for name, poly in smap.areas():
        ax.add_patch(PolygonPatch(poly.as_array(), closed=True, facecolor=_rgb(table.get(name, (128, 128, 128))),
                                  edgecolor="black", linewidth=0.8))
        cx, cy = poly.centroid
        ax.text(cx, cy, name, ha="center", va="center", fontsize=7,
                bbox={"boxstyle": "round,pad=0.15", "facecolor": "white", "alpha": 0.7, "linewidth": 0})
    if world is not None:
        for obj in world.objects.values():
            if obj.holder is not None:
                continue
            ax.plot(obj.position[0], obj.position[1], "k.", markersize=4)
        for person in world.persons.values():
            ax.plot(*person.position, marker="o", color="tab:red", markersize=6)
            ax.annotate(person.name, person.position, textcoords="offset points", xytext=(4, 4), fontsize=7)
        pose = world.robot.pose
        ax.arrow(pose.x, pose.y, 0.3 * np.cos(pose.yaw), 0.3 * np.sin(pose.yaw),
                 width=0.03, color="tab:blue", length_includes_head=True)
    ax.set_xlim(x0 - 0.2, x1 + 0.2)
    ax.set_ylim(y0 - 0.2, y1 + 0.2)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    return fig


def plot_esn_evaluation(report: dict, title: str = "ESN evaluation"):
    """Confusion matrix next to per-class readout score histograms."""
    fig = new_figure(8.0, 3.5)
    ax_cm, ax_hist = fig.subplots(1, 2)
    cm = np.asarray(report["confusion"])
    labels = report["labels"]
    ax_cm.imshow(cm, cmap="Blues")
    for (i, j), v in np.ndenumerate(cm):
        ax_cm.text(j, i, str(v), ha="center", va="center",
                   color="white" if v > cm.max() / 2 else "black")
    ax_cm.set_xticks(range(len(labels)), labels)
    ax_cm.set_yticks(range(len(labels)), labels)
    ax_cm.set_xlabel("predicted")
    ax_cm.set_ylabel("true")
    ax_cm.set_title(f"accuracy {report['accuracy']:.3f}")

    scores = np.asarray(report.get("scores", []), float)
    truth = report.get("truth")
    if scores.size:
        bins = np.linspace(scores.min(), scores.max(), 25) if np.ptp(scores) > 0 else 10
        if truth is not None:
            truth = np.asarray(truth)
            for label, color in zip(labels, ("tab:orange", "tab:blue")):
                ax_hist.hist(scores[truth == label], bins=bins, alpha=0.6, color=color, label=label)
            ax_hist.legend()
        else:
            ax_hist.hist(scores, bins=bins, color="tab:gray")
        ax_hist.axvline(0.0, color="black", linestyle="--", linewidth=0.8)
    ax_hist.set_xlabel("readout score")
    ax_hist.set_ylabel("sequences")
    fig.suptitle(title)
    return fig


def plot_grasp(cloud, bbox, pose=None, max_points: int = 4000):
    """Camera-frame cloud with its oriented box and the chosen approach direction.

    Drawn with the vertical axis pointing up (camera ``-y``).
    """
    cloud = np.asarray(cloud, float).reshape(-1, 3)
    if len(cloud) > max_points:
        cloud = cloud[np.linspace(0, len(cloud) - 1, max_points).astype(int)]

    def view(p):
        p = np.asarray(p, float).reshape(-1, 3)
        return p[:, 0], p[:, 2], -p[:, 1]

    fig = new_figure(5.5, 5.0)
    ax = fig.add_subplot(111, projection="3d")
    ax.scatter(*view(cloud), s=1, c="tab:gray", alpha=0.5)
    corners = bbox.corners()
    for a, b in _BOX_EDGES:
        xs, ys, zs = view(corners[[a, b]])
        ax.plot(xs, ys, zs, color="tab:green", linewidth=1.0)
    if pose is not None:
        px, py, pz = view(pose.position)
        if pose.approach.value == "top":
            direction = (0.0, 0.0, -1.0)
        else:
            direction = (np.sin(pose.yaw), np.cos(pose.yaw), 0.0)
        scale = float(np.max(bbox.extents))
        ax.quiver(px[0] - direction[0] * scale, py[0] - direction[1] * scale, pz[0] - direction[2] * scale,
                  *(np.array(direction) * scale), color="tab:red")
        ax.set_title(f"{pose.approach.value} grasp")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("depth [m]")
    ax.set_zlabel("up [m]")
    ax.set_box_aspect(None, zoom=0.85)
    return fig
