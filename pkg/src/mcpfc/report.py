"""Run trajectories, summaries and plot-ready/rendered artifacts.

Every solver and baseline run produces the same trajectory schema, a JSON
summary, and optionally density slices (delimited x,y,value grids) with
matplotlib renderings written next to them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .spectral import GridSpec, SpectralField, to_physical

TRAJECTORY_HEADER = ["iter", "block", "energy", "grad_inf", "step", "restarted", "backtracks", "wall_ms"]


@dataclass
class IterationRecord:
    iter: int
    block: int
    energy: float
    grad_inf: float
    step: float
    restarted: bool
    backtracks: int
    wall_ms: float


@dataclass
class RunReport:
    """Per-iteration trajectory plus final state summary of one run."""

    records: list[IterationRecord] = field(default_factory=list)
    final_energy: float = float("nan")
    final_grad_inf: float = float("nan")
    termination: str = "max_iter"
    energy_evals: int = 0
    options_echo: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def add(self, **kwargs) -> None:
        self.records.append(IterationRecord(**kwargs))

    def summary(self) -> dict:
        return {
            "final_energy": self.final_energy,
            "final_grad_inf": self.final_grad_inf,
            "iterations": self.iterations,
            "termination": self.termination,
            "energy_evals": self.energy_evals,
            "options": self.options_echo,
        }


def write_trajectory_csv(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for rec in report.records:
            writer.writerow(
                [
                    rec.iter,
                    rec.block,
                    f"{rec.energy:.17g}",
                    f"{rec.grad_inf:.17g}",
                    f"{rec.step:.17g}",
                    int(rec.restarted),
                    rec.backtracks,
                    f"{rec.wall_ms:.3f}",
                ]
            )


def write_summary_json(report: RunReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# density slices
# ---------------------------------------------------------------------------


def density_slice(fld: SpectralField, samples: int = 0, extent: float = 0.0, threshold: float = 1e-8):
    """2-D physical density section of one component.

    Periodic grids (n == d) are sliced through the collocation values on the
    unit cell.  Quasiperiodic grids (n > d) are synthesized by direct
    summation of the significant modes on a square window of side ``extent``.
    Returns (x, y, values) with broadcastable coordinate arrays.
    """
    grid = fld.grid
    n, d = grid.lattice_dim, grid.physical_dim
    if n == d:
        vals = to_physical(fld)
        # side lengths of the unit cell spanned by the first two lattice axes
        A = 2.0 * np.pi * np.linalg.inv(grid.recip_basis).T
        if d == 1:
            x = np.linalg.norm(A[:, 0]) * np.arange(grid.mode_counts[0]) / grid.mode_counts[0]
            return x, np.zeros(1), vals.reshape(-1, 1)
        section = vals[(slice(None), slice(None)) + (0,) * (d - 2)]
        x = np.linalg.norm(A[:, 0]) * np.arange(grid.mode_counts[0]) / grid.mode_counts[0]
        y = np.linalg.norm(A[:, 1]) * np.arange(grid.mode_counts[1]) / grid.mode_counts[1]
        return x, y, section
    if d != 2:
        raise ValueError("direct synthesis slices are only implemented for d = 2")
    samples = samples or 200
    extent = extent or 8.0 * np.pi
    mask = np.abs(fld.coeffs) > threshold
    ks = fld.grid.wavevectors[mask]  # (m, 2)
    cs = fld.coeffs[mask]
    x = np.linspace(0.0, extent, samples)
    y = np.linspace(0.0, extent, samples)
    phase_x = np.exp(1j * np.outer(x, ks[:, 0]))  # (samples, m)
    phase_y = np.exp(1j * np.outer(y, ks[:, 1]))
    vals = np.real(phase_x @ (cs[None, :] * phase_y).T).T  # (y, x) -> transpose below
    return x, y, vals.T


def write_slice_csv(x, y, values, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for i, xi in enumerate(x):
            for j, yj in enumerate(y):
                writer.writerow([f"{xi:.10g}", f"{yj:.10g}", f"{values[i, j]:.10g}"])


# ---------------------------------------------------------------------------
# rendered figures (matplotlib, file output only)
# ---------------------------------------------------------------------------


def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_trajectory_figure(reports: dict[str, RunReport], path) -> None:
    """Energy and gradient traces over iterations, one curve per labeled run."""
    plt = _mpl()
    fig, (ax_e, ax_g) = plt.subplots(1, 2, figsize=(10, 4))
    for label, rep in reports.items():
        its = [r.iter for r in rep.records]
        ax_e.plot(its, [r.energy for r in rep.records], label=label)
        ax_g.semilogy(its, [max(r.grad_inf, 1e-300) for r in rep.records], label=label)
    ax_e.set_xlabel("iteration")
    ax_e.set_ylabel("energy")
    ax_g.set_xlabel("iteration")
    ax_g.set_ylabel("gradient inf-norm")
    ax_e.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_density_figure(x, y, values, path, title: str = "") -> None:
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(5, 4))
    if len(y) == 1:
        ax.plot(x, values[:, 0])
        ax.set_xlabel("x")
        ax.set_ylabel("density")
    else:
        im = ax.pcolormesh(x, y, values.T, shading="auto", cmap="RdBu_r")
        fig.colorbar(im, ax=ax)
        ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
