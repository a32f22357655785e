"""Static SVG figures.

Points are coloured along a two-colour gradient from purple (start of the
trajectory) to yellow (end). Output is deterministic: the SVG id salt and
the date stamp are fixed.
"""

from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402
from mpl_toolkits.mplot3d import Axes3D  # noqa: E402, F401

START_COLOR = "#440154"
END_COLOR = "#fde725"
GRADIENT_NOTE = "colour runs from purple (start) to yellow (end)"

TIME_GRADIENT = LinearSegmentedColormap.from_list(
    "purple_yellow", [START_COLOR, END_COLOR]
)

plt.rcParams["svg.hashsalt"] = "strange-reservoir"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig: plt.Figure, path: Union[str, Path], title: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(
        path,
        format="svg",
        metadata={"Date": None, "Title": title, "Description": GRADIENT_NOTE},
    )
    plt.close(fig)
    return path


def time_colors(count: int) -> np.ndarray:
    return TIME_GRADIENT(np.linspace(0.0, 1.0, max(count, 1)))[:count]


def scatter(
    points: np.ndarray,
    path: Union[str, Path],
    title: str,
    labels: Sequence[str] = ("u", "v", "w"),
) -> Path:
    """Time-coloured 2-D or 3-D scatter of the rows of ``points``."""
    points = np.asarray(points, dtype=float)
    dim = points.shape[1]
    if dim not in (2, 3):
        raise ValueError(f"cannot draw {dim}-dimensional points")
    colors = time_colors(len(points))
    fig = plt.figure(figsize=(6, 5))
    if dim == 3:
        ax = fig.add_subplot(projection="3d")
        ax.scatter(*points.T, c=colors, s=1, depthshade=False)
        ax.set_zlabel(labels[2])
    else:
        ax = fig.add_subplot()
        ax.scatter(points[:, 0], points[:, 1], c=colors, s=1)
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    ax.set_title(title)
    return _save(fig, path, title)


def overlay_curves(
    curves: Dict[str, np.ndarray],
    path: Union[str, Path],
    title: str,
    labels: Sequence[str] = ("PC1", "PC2"),
) -> Path:
    """Planar curves, one colour per curve along the same gradient."""
    fig, ax = plt.subplots(figsize=(6, 5))
    colors = time_colors(len(curves))
    for color, (name, xy) in zip(colors, curves.items()):
        xy = np.asarray(xy, dtype=float)
        ax.plot(xy[:, 0], xy[:, 1], color=color, linewidth=0.8, label=name)
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    ax.set_title(title)
    ax.legend(loc="best", fontsize="small")
    return _save(fig, path, title)


def forecast_overlay(
    t: np.ndarray,
    truth: np.ndarray,
    predictions: Dict[str, np.ndarray],
    path: Union[str, Path],
    title: str,
    noisy: Optional[np.ndarray] = None,
) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    if noisy is not None:
        ax.plot(t, noisy, color="0.75", linewidth=0.5, label="noisy input")
    ax.plot(t, truth, color=START_COLOR, linewidth=1.0, label="target")
    for name, values in predictions.items():
        ax.plot(t, values, linestyle="--", linewidth=1.0, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("u")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize="small")
    return _save(fig, path, title)
