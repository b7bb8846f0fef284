"""Matplotlib figures written next to the CSV outputs.

Everything renders with the Agg backend and PNG metadata stripped, so the
same inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

from .beams import BeamCodebook, BeamId, direction_to_beam  # noqa: E402
from .materials import RlDatabase  # noqa: E402
from .scene import Scene  # noqa: E402

MATERIAL_COLORS = {
    "glass": "#3b7dd8",
    "plaster": "#e6e6e6",
    "plywood": "#e8c547",
    "glass wool": "#d9534f",
    "polystyrene": "#4caf50",
}
NO_HIT_COLOR = "#404040"
_FALLBACK = plt.get_cmap("tab10").colors


def material_color(name: str, k: int = 0):
    return MATERIAL_COLORS.get(name, _FALLBACK[k % len(_FALLBACK)])


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_rl_curves(db: RlDatabase, path: str | Path) -> Path:
    """Reflection loss against incident angle, one line per material."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, (name, row) in enumerate(db.entries.items()):
        color = material_color(name, k)
        edge = "black" if name == "plaster" else color
        ax.plot(db.angles, row, marker="o", ms=4, color=edge if name == "plaster" else color,
                markerfacecolor=color, label=name)
    ax.set_xlabel("incident angle (deg)")
    ax.set_ylabel("reflection loss (dB)")
    ax.set_title(f"Reflection loss at {db.frequency:g} GHz")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_beam_map(
    codebook: BeamCodebook,
    hits: Mapping[BeamId, str | None],
    scene: Scene,
    path: str | Path,
    markers: Iterable[tuple[BeamId, str]] = (),
    visited: Sequence[BeamId] = (),
    title: str = "",
) -> Path:
    """Codebook grid coloured by the material each beam's center ray hits.

    `markers` are (beam, label) pairs drawn as crosses; `visited` is drawn as
    a polyline through the cells in sweep order.
    """
    materials = sorted({scene.surface(s).material for s in hits.values() if s is not None})
    palette = [NO_HIT_COLOR] + [material_color(m, k) for k, m in enumerate(materials)]
    code = {m: k + 1 for k, m in enumerate(materials)}
    n_az, n_el = codebook.shape
    grid = np.zeros((n_el, n_az), dtype=int)
    for beam, sid in hits.items():
        grid[beam.el, beam.az] = 0 if sid is None else code[scene.surface(sid).material]

    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    ax.imshow(grid, origin="lower", cmap=ListedColormap(palette), vmin=0, vmax=len(palette) - 1,
              interpolation="nearest")
    if len(visited):
        v = np.array([(b.az, b.el) for b in visited])
        ax.plot(v[:, 0], v[:, 1], color="tab:blue", lw=0.8, alpha=0.8)
        ax.plot(v[-1, 0], v[-1, 1], "o", color="tab:blue", ms=6)
    for beam, label in markers:
        ax.plot(beam.az, beam.el, "x", color="black", ms=6, mew=1.5)
        if label:
            ax.annotate(label, (beam.az, beam.el), xytext=(3, 3), textcoords="offset points", fontsize=7)
    ax.set_xlabel("azimuth index (left to right)")
    ax.set_ylabel("elevation index (bottom to top)")
    handles = [Patch(facecolor=material_color(m, k), edgecolor="black", label=m) for k, m in enumerate(materials)]
    handles.append(Patch(facecolor=NO_HIT_COLOR, edgecolor="black", label="no hit"))
    ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_pair_losses(rows: Iterable[tuple[str, int, str, float]], path: str | Path) -> Path:
    """Overall PL of every reflected trajectory, grouped by BS-UE pair."""
    rows = list(rows)
    pairs = list(dict.fromkeys(r[0] for r in rows))
    index = {p: k for k, p in enumerate(pairs)}
    fig, ax = plt.subplots(figsize=(10, 4))
    materials = list(dict.fromkeys(r[2] for r in rows))
    for k, m in enumerate(materials):
        xs = [index[r[0]] for r in rows if r[2] == m]
        ys = [r[3] for r in rows if r[2] == m]
        ax.scatter(xs, ys, s=10, color=material_color(m, k), edgecolors="black", linewidths=0.3, label=m)
    ax.set_xlabel("BS-UE pair index")
    ax.set_ylabel("overall path loss (dB)")
    ax.grid(alpha=0.3)
    if materials:
        ax.legend(fontsize=8, ncol=len(materials))
    fig.tight_layout()
    return _save(fig, Path(path))


def render_report(report, fig_dir: str | Path) -> list[Path]:
    """All figures for an experiment report."""
    from .experiment import loss_rows

    fig_dir = Path(fig_dir)
    out = [plot_rl_curves(report.database, fig_dir / "rl_curves.png")]
    for setup in report.setups:
        # Departure cells of every top-priority-material trajectory from this BS.
        markers = []
        for pair in report.pairs:
            if pair.bs != setup.bs.id:
                continue
            for t in pair.trajectories:
                if t.material == report.top_material:
                    beam = direction_to_beam(setup.codebook, setup.bs.position, t.reflection_point)
                    if beam is not None:
                        markers.append((beam, ""))
        out.append(
            plot_beam_map(
                setup.codebook, setup.hits, report.scene, fig_dir / f"beam_map_{setup.bs.id}.png",
                markers=markers, title=f"{setup.bs.id}: first-hit material per beam",
            )
        )
    out.append(plot_pair_losses(loss_rows(report.pairs), fig_dir / "pair_losses.png"))
    return out
