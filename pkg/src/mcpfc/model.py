"""Discretized multicomponent coupled-mode Swift-Hohenberg energy.

The energy splits into per-component quadratic terms, evaluated in mode
space through a diagonal operator, and a polynomial bulk coupling of total
degree <= 4, evaluated pointwise on the collocation grid.  Gradients
returned here are exact gradients of the discrete energy, which keeps the
line search in the optimizer consistent.

Bulk evaluation caches integer powers of each component's collocation
values; the block solver replaces one component at a time, so the cached
powers of the other components carry over between energy evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .spectral import (
    GridSpec,
    SpectralField,
    build_diag_operator,
    hermitian_symmetrize,
    project_zero_mean,
    to_physical,
    to_spectral,
)


@dataclass(frozen=True)
class ModelSpec:
    """Number of components, length scales, operator scale and bulk coefficients.

    ``tau`` maps a multi-degree tuple (i_1, ..., i_s) with 1 <= sum i_j <= 4
    to its real coefficient.  Coercivity of the bulk polynomial is the
    caller's responsibility; the solver reports (not prevents) divergence.
    """

    q: tuple[float, ...]
    c: float
    tau: Mapping[tuple[int, ...], float]

    def __post_init__(self) -> None:
        if len(self.q) < 1:
            raise ValueError("need at least one component")
        if any(qj <= 0 for qj in self.q):
            raise ValueError(f"length scales must be positive, got {self.q}")
        if self.c <= 0:
            raise ValueError(f"operator scale c must be positive, got {self.c}")
        object.__setattr__(self, "q", tuple(float(qj) for qj in self.q))
        tau = {}
        for degs, val in dict(self.tau).items():
            degs = tuple(int(i) for i in degs)
            if len(degs) != self.s:
                raise ValueError(f"tau key {degs} does not have {self.s} entries")
            total = sum(degs)
            if any(i < 0 for i in degs) or not 1 <= total <= 4:
                raise ValueError(f"tau key {degs} has total degree {total}, need 1..4")
            tau[degs] = float(val)
        object.__setattr__(self, "tau", tau)

    @property
    def s(self) -> int:
        return len(self.q)

    def max_degree(self, j: int) -> int:
        """Highest power of component j (1-based) appearing in the bulk terms."""
        return max((degs[j - 1] for degs in self.tau), default=0)

    def diag_operators(self, grid: GridSpec):
        return [build_diag_operator(grid, qj, self.c) for qj in self.q]


@dataclass
class State:
    """One zero-mean Hermitian spectral field per component, shared grid."""

    components: list[SpectralField]

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    @property
    def s(self) -> int:
        return len(self.components)

    def copy(self) -> "State":
        return State([f.copy() for f in self.components])


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    quad: tuple[float, ...]
    bulk: float


def _check_state(model: ModelSpec, state: State) -> None:
    if state.s != model.s:
        raise ValueError(f"state has {state.s} components, model expects {model.s}")
    grid = state.grid
    for f in state.components:
        if f.grid is not grid and f.grid != grid:
            raise ValueError("state components live on different grids")


def _power_table(values: np.ndarray, max_deg: int) -> dict:
    """{deg: values**deg} for 1 <= deg <= max_deg, built by repeated multiply."""
    table = {1: values}
    for d in range(2, max_deg + 1):
        table[d] = table[d - 1] * values
    return table


def _bulk_from_powers(model: ModelSpec, pows: Sequence[dict]) -> float:
    acc = 0.0
    for degs, tau in model.tau.items():
        term = None
        for j, deg in enumerate(degs):
            if deg:
                factor = pows[j][deg]
                term = factor if term is None else term * factor
        acc += tau * float(term.mean())
    return acc


def _deriv_from_powers(model: ModelSpec, pows: Sequence[dict], shape, j: int) -> np.ndarray:
    j0 = j - 1
    out = np.zeros(shape)
    for degs, tau in model.tau.items():
        dj = degs[j0]
        if not dj:
            continue
        term = None
        if dj > 1:
            term = pows[j0][dj - 1]
        for l, deg in enumerate(degs):
            if deg and l != j0:
                factor = pows[l][deg]
                term = factor if term is None else term * factor
        out += (tau * dj) * term if term is not None else tau * dj
    return out


def _tables(model: ModelSpec, phys: Sequence[np.ndarray]):
    return [
        _power_table(p, max(model.max_degree(j), 1)) for j, p in enumerate(phys, start=1)
    ]


def bulk_value(model: ModelSpec, phys: Sequence[np.ndarray]) -> float:
    """Grid average of the bulk polynomial on collocation values."""
    return _bulk_from_powers(model, _tables(model, phys))


def bulk_deriv(model: ModelSpec, phys: Sequence[np.ndarray], j: int) -> np.ndarray:
    """Pointwise partial derivative of the bulk polynomial w.r.t. component j (1-based)."""
    return _deriv_from_powers(model, _tables(model, phys), phys[0].shape, j)


def energy(model: ModelSpec, state: State) -> EnergyBreakdown:
    """Total energy, split into quadratic per-component terms and the bulk term."""
    _check_state(model, state)
    grid = state.grid
    quad = []
    for dop, f in zip(model.diag_operators(grid), state.components):
        quad.append(0.5 * float(np.sum(dop.entries * np.abs(f.coeffs) ** 2)))
    phys = [to_physical(f) for f in state.components]
    bulk = bulk_value(model, phys)
    return EnergyBreakdown(total=sum(quad) + bulk, quad=tuple(quad), bulk=bulk)


def bulk_gradient(model: ModelSpec, state: State, j: int) -> SpectralField:
    """Spectral gradient of the bulk term for block j (1-based), Hermitian-exact."""
    _check_state(model, state)
    if not 1 <= j <= model.s:
        raise ValueError(f"block index {j} out of range 1..{model.s}")
    phys = [to_physical(f) for f in state.components]
    g = to_spectral(bulk_deriv(model, phys, j), state.grid)
    g.coeffs = hermitian_symmetrize(g.coeffs)
    return g


def residual(model: ModelSpec, state: State):
    """Projected gradient per block and its infinity norm over all coefficients."""
    _check_state(model, state)
    grid = state.grid
    phys = [to_physical(f) for f in state.components]
    pows = _tables(model, phys)
    blocks = []
    inf_norm = 0.0
    for j, (dop, f) in enumerate(zip(model.diag_operators(grid), state.components), start=1):
        g = to_spectral(_deriv_from_powers(model, pows, phys[0].shape, j), grid)
        r = SpectralField(dop.entries * f.coeffs + hermitian_symmetrize(g.coeffs), grid)
        r = project_zero_mean(r)
        blocks.append(r)
        inf_norm = max(inf_norm, float(np.max(np.abs(r.coeffs))))
    return blocks, inf_norm


class Evaluator:
    """Incremental energy/gradient evaluation with cached physical fields.

    Owned by a single solve; the model and grid are shared read-only.
    Block indices are 1-based to match the public operations.  Power
    tables of the current components are cached and only the replaced
    block's table is rebuilt on an update.
    """

    def __init__(self, model: ModelSpec, state: State):
        _check_state(model, state)
        self.model = model
        self.grid = state.grid
        self.diag = [d.entries for d in model.diag_operators(self.grid)]
        self.coeffs = [f.coeffs.copy() for f in state.components]
        self.phys = [to_physical(f) for f in state.components]
        self.pows = _tables(model, self.phys)
        self.quad = [
            0.5 * float(np.sum(d * np.abs(c) ** 2)) for d, c in zip(self.diag, self.coeffs)
        ]
        self.bulk = _bulk_from_powers(model, self.pows)
        self.energy_evals = 1

    def total(self) -> float:
        return sum(self.quad) + self.bulk

    def state(self) -> State:
        return State([SpectralField(c.copy(), self.grid) for c in self.coeffs])

    def physical_of(self, coeffs: np.ndarray) -> np.ndarray:
        return to_physical(SpectralField(coeffs, self.grid))

    def _pows_replacing(self, j: int, phys_j: np.ndarray):
        pows = list(self.pows)
        pows[j - 1] = _power_table(phys_j, max(self.model.max_degree(j), 1))
        return pows

    def energy_replacing(self, j: int, coeffs: np.ndarray, phys_j: np.ndarray | None = None):
        """Energy with block j replaced; returns (total, phys_j) for reuse."""
        if phys_j is None:
            phys_j = self.physical_of(coeffs)
        quad_j = 0.5 * float(np.sum(self.diag[j - 1] * np.abs(coeffs) ** 2))
        bulk = _bulk_from_powers(self.model, self._pows_replacing(j, phys_j))
        self.energy_evals += 1
        total = sum(self.quad) - self.quad[j - 1] + quad_j + bulk
        return total, phys_j

    def set_block(self, j: int, coeffs: np.ndarray, phys_j: np.ndarray | None = None) -> None:
        if phys_j is None:
            phys_j = self.physical_of(coeffs)
        self.coeffs[j - 1] = coeffs
        self.phys[j - 1] = phys_j
        self.pows[j - 1] = _power_table(phys_j, max(self.model.max_degree(j), 1))
        self.quad[j - 1] = 0.5 * float(np.sum(self.diag[j - 1] * np.abs(coeffs) ** 2))
        self.bulk = _bulk_from_powers(self.model, self.pows)

    def block_gradient(self, j: int, phys_j: np.ndarray | None = None) -> np.ndarray:
        """Spectral bulk gradient for block j, optionally at replaced block values.

        Returns the raw transform (Hermitian to roundoff, the derivative being
        real); the updates consuming it re-symmetrize the iterate they produce.
        """
        pows = self.pows if phys_j is None else self._pows_replacing(j, phys_j)
        deriv = _deriv_from_powers(self.model, pows, self.phys[0].shape, j)
        return np.fft.fftn(deriv) / self.grid.size

    def block_gradient_half(self, j: int) -> np.ndarray:
        """Spectral bulk gradient for block j on the real-FFT half-spectrum."""
        deriv = _deriv_from_powers(self.model, self.pows, self.phys[0].shape, j)
        return np.fft.rfftn(deriv) / self.grid.size

    def block_residual_half(self, j: int) -> np.ndarray:
        """Residual D c + g of block j on the real-FFT half-spectrum.

        The residual is Hermitian, so its magnitudes on the half-spectrum
        (last axis 0..N/2) determine every norm of the full array.
        """
        g = self.block_gradient_half(j)
        last = g.shape[-1]
        r = self.diag[j - 1][..., :last] * self.coeffs[j - 1][..., :last] + g
        r[(0,) * self.grid.lattice_dim] = 0.0
        return r

    def residual_inf(self) -> float:
        inf_norm = 0.0
        for j in range(1, self.model.s + 1):
            r = self.block_residual_half(j)
            inf_norm = max(inf_norm, float(np.max(np.abs(r))))
        return inf_norm
