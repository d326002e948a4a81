"""Named experiment configurations: grids, model parameters, initial fields.

Each preset bundles a resolution-scalable grid factory, the published model
coefficients, and an initializer that seeds a feasible spectral state.  The
default resolutions are desk scale: large enough to resolve the structures,
small enough for minute-scale runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .model import ModelSpec, State
from .spectral import GridSpec, SpectralField, hermitian_defect, make_grid, zero_field

PRESET_NAMES = ("lamellar_single", "dqc_binary", "chessboard_quinary", "bcc_quinary")


def dqc_projection_matrix() -> np.ndarray:
    """2x4 projection whose columns are unit vectors at angles k*pi/5, k=0..3."""
    angles = np.arange(4) * np.pi / 5.0
    return np.vstack([np.cos(angles), np.sin(angles)])


def init_from_lattice_points(grid: GridSpec, per_component_points, amplitude: float) -> State:
    """Seed each component at its listed modes, conjugate-completed, DC excluded."""
    comps = []
    for points in per_component_points:
        f = zero_field(grid)
        for h in points:
            h = tuple(int(x) for x in h)
            if not grid.mode_in_range(h):
                raise ValueError(f"lattice point {h} outside truncation range")
            if all(x == 0 for x in h):
                continue  # DC is projected away
            f.coeffs[grid.flat_index(h)] = amplitude
            neg = tuple(-x for x in h)
            f.coeffs[grid.flat_index(neg)] = np.conj(amplitude)
        comps.append(f)
    return State(comps)


def init_from_shells(
    grid: GridSpec, qs, amplitude: float, rtol: float = 1e-8, even_index_sum: bool = False
) -> State:
    """Seed component j on the retained modes whose |P B h| is nearest q_j.

    Real equal amplitudes give cosine (even) phases, so Hermitian symmetry
    holds by construction; the DC mode is never part of a nonzero shell.
    With ``even_index_sum`` the candidate modes are restricted to even index
    sums — the dual lattice of a body-centered cell — so every seeded shell
    is an allowed reflection of the same body-centered crystal.
    """
    norms = np.sqrt(grid.ksq)
    gap_base = np.where(norms > 1e-12, 0.0, np.inf)
    if even_index_sum:
        freqs = [np.rint(np.fft.fftfreq(N) * N).astype(int) for N in grid.mode_counts]
        idx = np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1)
        gap_base = np.where(idx.sum(axis=-1) % 2 == 0, gap_base, np.inf)
    comps = []
    for q in qs:
        gap = gap_base + np.abs(norms - q)
        best = float(gap.min())
        mask = gap <= best + rtol * (1.0 + q)
        f = zero_field(grid)
        f.coeffs[mask] = amplitude
        f.coeffs[(0,) * grid.lattice_dim] = 0.0
        if hermitian_defect(f.coeffs) > 1e-12:
            raise AssertionError("shell seed is not Hermitian")
        comps.append(f)
    return State(comps)


@dataclass(frozen=True)
class Preset:
    """One named configuration; grid resolution stays a free knob."""

    name: str
    model: ModelSpec
    default_resolution: int
    grid_factory: Callable[[int], GridSpec]
    initializer: Callable[[GridSpec], State]
    solver_overrides: Mapping[str, object] = field(default_factory=dict)
    baseline_overrides: Mapping[str, Mapping[str, object]] = field(default_factory=dict)

    def build(self, resolution: int | None = None):
        grid = self.grid_factory(resolution or self.default_resolution)
        return grid, self.model, self.initializer(grid)


def _lamellar() -> Preset:
    model = ModelSpec(q=(1.0,), c=1.0, tau={(2,): -0.1, (4,): 1.0})
    return Preset(
        name="lamellar_single",
        model=model,
        default_resolution=32,
        grid_factory=lambda N: make_grid(1, 1, (N,), [[1.0]], [[1.0]]),
        initializer=lambda grid: init_from_lattice_points(grid, [[(1,)]], 0.3),
        solver_overrides={"tol_energy": 1e-16},
    )


def _dqc() -> Preset:
    q2 = 2.0 * math.cos(math.pi / 5.0)
    tau = {
        (0, 2): -0.1, (2, 0): -0.1,
        (0, 3): -0.3, (3, 0): -0.3,
        (1, 2): -2.2, (2, 1): -2.2,
        (0, 4): 1.0, (4, 0): 1.0, (1, 1): 1.0,
        (2, 2): 1.0, (1, 3): 1.0, (3, 1): 1.0,
    }
    model = ModelSpec(q=(1.0, q2), c=20.0, tau=tau)
    return Preset(
        name="dqc_binary",
        model=model,
        default_resolution=24,
        grid_factory=lambda N: make_grid(4, 2, (N,) * 4, np.eye(4), dqc_projection_matrix()),
        initializer=lambda grid: init_from_shells(grid, (1.0, q2), 0.3),
        solver_overrides={"M": 5},
        baseline_overrides={
            "sav": {"C": 1e8, "dt_min": 1e-5, "dt_max": 1.0},
            "ssav": {"C": 1e8, "dt_min": 1e-5, "dt_max": 1.0},
        },
    )


def _chessboard() -> Preset:
    def t(*degs):
        return tuple(degs)

    tau = {}
    for j in range(5):
        cubic = [0] * 5
        cubic[j] = 3
        tau[t(*cubic)] = -0.10
        quart = [0] * 5
        quart[j] = 4
        tau[t(*quart)] = 0.10
    tau[t(1, 0, 1, 0, 0)] = -0.70
    tau[t(0, 1, 0, 1, 1)] = 0.05
    tau[t(1, 1, 0, 0, 1)] = -0.12
    tau[t(0, 1, 0, 1, 0)] = -0.44
    model = ModelSpec(q=(1.0,) * 5, c=10.0, tau=tau)
    points = [
        [(1, 0), (-1, 0)],
        [(0, 1), (0, -1)],
        [(2, 0), (-2, 0)],
        [(0, 2), (0, -2)],
        [(0, 0)],  # annihilated by the zero-mean projection
    ]
    return Preset(
        name="chessboard_quinary",
        model=model,
        default_resolution=256,
        grid_factory=lambda N: make_grid(2, 2, (N, N), np.eye(2), np.eye(2)),
        initializer=lambda grid: init_from_lattice_points(grid, points, 0.3),
        solver_overrides={"M": 5},
    )


def _bcc() -> Preset:
    tau = {
        (3, 0, 0, 0, 0): -0.1,
        (0, 3, 0, 0, 0): -0.6,
        (0, 0, 3, 0, 0): -0.4,
        (0, 0, 0, 3, 0): -0.2,
        (0, 0, 0, 0, 3): -0.1,
        (4, 0, 0, 0, 0): 0.1,
        (0, 4, 0, 0, 0): 0.1,
        (0, 0, 4, 0, 0): 0.1,
        (0, 0, 0, 4, 0): 0.1,
        (0, 0, 0, 0, 4): 0.1,
        (1, 0, 1, 0, 0): 0.4,
        (0, 1, 0, 1, 0): 0.3,
        (0, 1, 1, 1, 0): -0.2,
        (1, 1, 0, 0, 1): 0.8,
    }
    qs = (1.0, 1.5, 2.0, 2.5, 3.0)
    model = ModelSpec(q=qs, c=1.0, tau=tau)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    return Preset(
        name="bcc_quinary",
        model=model,
        default_resolution=48,
        grid_factory=lambda N: make_grid(3, 3, (N,) * 3, np.eye(3) * inv_sqrt2, np.eye(3)),
        initializer=lambda grid: init_from_shells(grid, qs, 0.3, even_index_sum=True),
        solver_overrides={"M": 5},
    )


def sigma_ternary_model() -> ModelSpec:
    """Ternary sigma-phase coefficients, shipped without a grid/initializer."""
    tau = {}
    for j in range(3):
        for deg, val in ((2, -0.2), (3, -0.3), (4, 0.1)):
            key = [0, 0, 0]
            key[j] = deg
            tau[tuple(key)] = val
    tau[(2, 1, 1)] = -0.1
    tau[(1, 2, 1)] = -0.1
    tau[(1, 1, 2)] = -0.1
    return ModelSpec(q=(1.0, 1.0, 1.0), c=1.0, tau=tau)


_FACTORIES = {
    "lamellar_single": _lamellar,
    "dqc_binary": _dqc,
    "chessboard_quinary": _chessboard,
    "bcc_quinary": _bcc,
}


def get_preset(name: str) -> Preset:
    try:
        return _FACTORIES[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None


def preset(name: str, resolution: int | None = None):
    """Grid, model, and feasible initial state for a named configuration."""
    return get_preset(name).build(resolution)
