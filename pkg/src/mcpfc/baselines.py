"""Gradient-flow comparison schemes sharing the spectral/model stack.

SIS and BDF2 advance the flow with diagonal resolvent solves and explicit
bulk forces, updating blocks in fixed cyclic order; their step size follows
the gradient-magnitude rule.  SAV and S-SAV update all blocks
simultaneously with a scalar auxiliary variable r = sqrt(F + C), computing
a first-order and a Crank-Nicolson step per iteration so their relative
difference can drive the step controller.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Evaluator, ModelSpec, State, bulk_deriv, bulk_value, energy
from .optimizer import DivergenceError, _check_feasible
from .report import RunReport
from .spectral import SpectralField, hermitian_expand, hermitian_symmetrize, to_physical

_SCHEMES = ("sis", "bdf2", "sav", "ssav")


@dataclass(frozen=True)
class BaselineOptions:
    scheme: str = "sis"
    dt_min: float = 1e-3
    dt_max: float = 0.1
    rho: Optional[float] = None  # defaults: 50 for sis/bdf2, 0.9 for sav/ssav
    tol_ref: float = 1e-3
    C: float = 1e8
    S1: float = 10.0
    S2: float = 10.0
    max_iter: int = 50000
    tol_grad: float = 1e-7
    tol_energy: float = 1e-14
    energy_floor: float = -1e12

    def __post_init__(self) -> None:
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {_SCHEMES}")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.C <= 0:
            raise ValueError("SAV constant C must be positive")
        if self.S1 < 0 or self.S2 < 0:
            raise ValueError("stabilization constants must be nonnegative")

    @property
    def rho_value(self) -> float:
        if self.rho is not None:
            return self.rho
        return 50.0 if self.scheme in ("sis", "bdf2") else 0.9


def adaptive_dt_pde(grad_norm_sq: float, dt_min: float, dt_max: float, rho: float) -> float:
    """Gradient-magnitude step rule; always lands in [dt_min, dt_max]."""
    return max(dt_min, dt_max / math.sqrt(1.0 + rho * grad_norm_sq))


def adaptive_dt_sav(e_est: float, dt: float, opts: BaselineOptions) -> float:
    """Error-estimate step rule; vanishing estimates jump to dt_max."""
    if e_est <= 0.0:
        return opts.dt_max
    return max(opts.dt_min, min(opts.rho_value * math.sqrt(opts.tol_ref / e_est) * dt, opts.dt_max))


def sis_step(model: ModelSpec, state: State, dt: float) -> State:
    """One semi-implicit sweep, blocks in cyclic Gauss-Seidel order."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    ev = Evaluator(model, state)
    _sis_sweep(ev, dt)
    return ev.state()


def bdf2_step(model: ModelSpec, state: State, state_prev: State, dt: float) -> State:
    """Second-order step with the bulk force at the extrapolant 2 phi^k - phi^{k-1}."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    grid = state.grid
    dc = (0,) * grid.lattice_dim
    ext = State(
        [
            SpectralField(2.0 * c.coeffs - p.coeffs, grid)
            for c, p in zip(state.components, state_prev.components)
        ]
    )
    phys_ext = [to_physical(f) for f in ext.components]
    ev = Evaluator(model, state)
    out = []
    for j in range(1, model.s + 1):
        g = np.fft.fftn(bulk_deriv(model, phys_ext, j)) / grid.size
        g = hermitian_symmetrize(g)
        g[dc] = 0.0
        num = 4.0 * state.components[j - 1].coeffs - state_prev.components[j - 1].coeffs - 2.0 * dt * g
        z = num / (3.0 + 2.0 * dt * ev.diag[j - 1])
        z[dc] = 0.0
        out.append(SpectralField(hermitian_symmetrize(z), grid))
    return State(out)


def _stacked_bulk_gradient(model: ModelSpec, phys, grid):
    dc = (0,) * grid.lattice_dim
    out = []
    for j in range(1, model.s + 1):
        g = np.fft.fftn(bulk_deriv(model, phys, j)) / grid.size
        g = hermitian_symmetrize(g)
        g[dc] = 0.0
        out.append(g)
    return out


def _stack_inner(a, b) -> float:
    return sum(float(np.real(np.vdot(x, y))) for x, y in zip(a, b))


def sav_step(model: ModelSpec, states, r: float, dt: float, opts: BaselineOptions, s1: float = 0.0, s2: float = 0.0):
    """One auxiliary-variable step in Jacobian (all blocks at once) manner.

    Computes a first-order semi-implicit step and a Crank-Nicolson step,
    returns the second-order state, its auxiliary value and the relative
    difference between the two states (fed to the step controller).
    """
    state, state_prev = states
    if dt <= 0:
        raise ValueError("time step must be positive")
    grid = state.grid
    dc = (0,) * grid.lattice_dim
    diag = [d.entries for d in model.diag_operators(grid)]
    cur = [f.coeffs for f in state.components]
    phys = [to_physical(f) for f in state.components]

    # first-order semi-implicit step
    f_cur = bulk_value(model, phys)
    if f_cur + opts.C <= 0.0:
        raise ValueError(f"bulk energy + C = {f_cur + opts.C:.3e} is not positive; increase C")
    root = math.sqrt(f_cur + opts.C)
    b1 = [g / root for g in _stacked_bulk_gradient(model, phys, grid)]
    inv1 = [1.0 / (1.0 + dt * d + dt * s1) for d in diag]
    phi0 = [(1.0 + dt * s1) * c * inv for c, inv in zip(cur, inv1)]
    wvec = [dt * b * inv for b, inv in zip(b1, inv1)]
    r1 = (r + 0.5 * _stack_inner(b1, [p - c for p, c in zip(phi0, cur)])) / (
        1.0 + 0.5 * _stack_inner(b1, wvec)
    )
    phi1 = [p - r1 * wv for p, wv in zip(phi0, wvec)]

    # Crank-Nicolson step with extrapolated bulk force
    if state_prev is None:
        ext = cur
    else:
        ext = [1.5 * c - 0.5 * p.coeffs for c, p in zip(cur, state_prev.components)]
    phys_ext = [to_physical(SpectralField(e, grid)) for e in ext]
    f_ext = bulk_value(model, phys_ext)
    if f_ext + opts.C <= 0.0:
        raise ValueError(f"bulk energy + C = {f_ext + opts.C:.3e} is not positive; increase C")
    root2 = math.sqrt(f_ext + opts.C)
    b2 = [g / root2 for g in _stacked_bulk_gradient(model, phys_ext, grid)]
    inv2 = [1.0 / (1.0 + 0.5 * dt * d + dt * s2) for d in diag]
    if state_prev is None:
        stab = [np.zeros_like(c) for c in cur]
    else:
        stab = [2.0 * c - p.coeffs for c, p in zip(cur, state_prev.components)]
    phi0c = [
        ((1.0 - 0.5 * dt * d) * c + dt * s2 * st) * inv
        for d, c, st, inv in zip(diag, cur, stab, inv2)
    ]
    wvec2 = [dt * b * inv for b, inv in zip(b2, inv2)]
    r_half = (2.0 * r + 0.5 * _stack_inner(b2, [p - c for p, c in zip(phi0c, cur)])) / (
        2.0 + 0.5 * _stack_inner(b2, wvec2)
    )
    phi2 = [p - r_half * wv for p, wv in zip(phi0c, wvec2)]
    r2 = 2.0 * r_half - r

    def finish(arrs):
        out = []
        for z in arrs:
            z = hermitian_symmetrize(z)
            z[dc] = 0.0
            out.append(SpectralField(z, grid))
        return out

    fields1 = finish(phi1)
    fields2 = finish(phi2)
    diff = math.sqrt(sum(float(np.sum(np.abs(a.coeffs - b.coeffs) ** 2)) for a, b in zip(fields2, fields1)))
    norm = math.sqrt(sum(f.norm_sq() for f in fields2))
    e_est = diff / max(norm, 1e-300)
    return State(fields2), r2, e_est


def ssav_step(model: ModelSpec, states, r: float, dt: float, opts: BaselineOptions):
    """SAV step with first/second-order stabilization terms."""
    return sav_step(model, states, r, dt, opts, s1=opts.S1, s2=opts.S2)


def sav_modified_energy(model: ModelSpec, state: State, r: float, opts: BaselineOptions) -> float:
    """Quadratic energy plus r^2 - C; the quantity the SAV schemes dissipate."""
    bd = energy(model, state)
    return sum(bd.quad) + r * r - opts.C


def _options_echo(opts: BaselineOptions) -> dict:
    return {
        "method": opts.scheme,
        "dt_min": opts.dt_min,
        "dt_max": opts.dt_max,
        "rho": opts.rho_value,
        "tol_ref": opts.tol_ref,
        "C": opts.C,
        "S1": opts.S1,
        "S2": opts.S2,
        "max_iter": opts.max_iter,
        "tol_grad": opts.tol_grad,
        "tol_energy": opts.tol_energy,
    }


def _residual_metrics(ev: Evaluator):
    """(inf norm, squared norm) of the projected gradient from cached fields."""
    inf_norm = 0.0
    norm_sq = 0.0
    for j in range(1, ev.model.s + 1):
        r = ev.block_residual_half(j)
        sq = np.abs(r) ** 2
        inf_norm = max(inf_norm, float(np.sqrt(np.max(sq))))
        # half-spectrum pairs count twice except the self-paired boundary columns
        norm_sq += 2.0 * float(sq.sum()) - float(sq[..., 0].sum()) - float(sq[..., -1].sum())
    return inf_norm, norm_sq


def _sis_sweep(ev: Evaluator, dt: float) -> None:
    """In-place cyclic Gauss-Seidel sweep on an evaluator.

    The resolvent update is computed on the real-FFT half-spectrum and
    expanded by conjugate reflection, which keeps the iterate Hermitian
    and halves the transform work per block.
    """
    dc = (0,) * ev.grid.lattice_dim
    shape = ev.grid.shape
    for j in range(1, ev.model.s + 1):
        g = ev.block_gradient_half(j)
        last = g.shape[-1]
        z_half = (ev.coeffs[j - 1][..., :last] - dt * g) / (1.0 + dt * ev.diag[j - 1][..., :last])
        z_half[dc] = 0.0
        phys_j = np.fft.irfftn(z_half, s=shape, axes=range(len(shape))) * ev.grid.size
        ev.set_block(j, hermitian_expand(z_half, shape), phys_j)


def run_baseline(model: ModelSpec, state0: State, opts: BaselineOptions):
    """Iterate the selected scheme with its adaptive stepping until converged."""
    _check_feasible(state0)
    state = state0.copy()
    state_prev: Optional[State] = None
    scheme = opts.scheme
    report = RunReport(options_echo=_options_echo(opts))
    ev = Evaluator(model, state)
    e_cur = ev.total()
    grad_inf, grad_sq = _residual_metrics(ev)
    r_aux = 0.0
    dt = opts.dt_min
    if scheme in ("sav", "ssav"):
        if ev.bulk + opts.C <= 0.0:
            raise ValueError(f"bulk energy + C = {ev.bulk + opts.C:.3e} at start; increase C")
        r_aux = math.sqrt(ev.bulk + opts.C)
    termination = "max_iter"

    for k in range(opts.max_iter):
        tick = time.perf_counter()
        if scheme == "sis":
            dt = adaptive_dt_pde(grad_sq, opts.dt_min, opts.dt_max, opts.rho_value)
            _sis_sweep(ev, dt)
            state_prev, state = state, ev.state()
        elif scheme == "bdf2":
            dt = adaptive_dt_pde(grad_sq, opts.dt_min, opts.dt_max, opts.rho_value)
            if state_prev is None:
                new_state = sis_step(model, state, dt)
            else:
                new_state = bdf2_step(model, state, state_prev, dt)
            state_prev, state = state, new_state
            ev = Evaluator(model, state)
        else:
            step_fn = sav_step if scheme == "sav" else ssav_step
            new_state, r_aux, e_est = step_fn(model, (state, state_prev), r_aux, dt, opts)
            dt_next = adaptive_dt_sav(e_est, dt, opts)
            state_prev, state = state, new_state
            ev = Evaluator(model, state)
        e_new = ev.total()
        grad_inf, grad_sq = _residual_metrics(ev)
        report.add(
            iter=k,
            block=0,
            energy=e_new,
            grad_inf=grad_inf,
            step=dt,
            restarted=False,
            backtracks=0,
            wall_ms=(time.perf_counter() - tick) * 1e3,
        )
        if scheme in ("sav", "ssav"):
            dt = dt_next
        if e_new < opts.energy_floor:
            report.termination = "diverged"
            raise DivergenceError(f"energy {e_new:.6e} fell below floor {opts.energy_floor:.3e}")
        if grad_inf < opts.tol_grad:
            termination = "grad_tol"
            break
        if abs(e_new - e_cur) < opts.tol_energy:
            termination = "energy_tol"
            break
        e_cur = e_new

    report.termination = termination
    report.final_energy = ev.total()
    report.final_grad_inf = grad_inf
    return state, report
