"""Adaptive block Bregman proximal gradient solver.

One iteration picks a block, extrapolates it, estimates a step by a
secant (BB) ratio refined with a nonmonotone backtracking line search,
applies the kernel-specific proximal update on the zero-mean subspace,
and accepts the candidate only if a windowed sufficient-decrease test
holds; otherwise the iterate is kept and the extrapolation weight reset
(restart).  Two kernels are supported: the quadratic kernel with a
closed-form resolvent update, and the quartic kernel whose update needs
a scalar radial fixed point solved by safeguarded Newton.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import Evaluator, ModelSpec, State
from .report import RunReport
from .spectral import (
    DiagonalOperator,
    SpectralField,
    hermitian_defect,
    hermitian_symmetrize,
)


class DivergenceError(RuntimeError):
    """Energy fell below the divergence floor (non-coercive model)."""


GOLDEN_RATIO_STEP = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BlockSchedule:
    """Block pick rule: deterministic cyclic or random with forced coverage."""

    mode: str = "cyclic"
    T: int = 0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("cyclic", "random"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "random" and self.T < 1:
            raise ValueError("random schedule requires a window length T >= s")


@dataclass(frozen=True)
class SolverOptions:
    M: int = 0
    a: float = 0.0
    b: float = 1.0
    w_bar: float = 1.0
    alpha0: float = 0.1
    alpha_min: float = 1e-6
    alpha_max: float = 10.0
    sigma: float = 1e-12
    eta: float = 1e-12
    varsigma: float = GOLDEN_RATIO_STEP
    schedule: BlockSchedule = field(default_factory=BlockSchedule)
    max_iter: int = 5000
    tol_grad: float = 1e-7
    tol_energy: float = 1e-14
    fixed_step: Optional[float] = None
    bb_variant: str = "first"
    energy_floor: float = -1e12

    def __post_init__(self) -> None:
        if self.M < 0:
            raise ValueError("window length M must be nonnegative")
        if self.a < 0 or self.b <= 0:
            raise ValueError("kernel needs a >= 0 and b > 0")
        if self.w_bar < 0:
            raise ValueError("extrapolation cap must be nonnegative")
        if not (0 < self.alpha_min <= self.alpha0 <= self.alpha_max):
            raise ValueError("need 0 < alpha_min <= alpha0 <= alpha_max")
        if self.sigma <= 0 or not 0 < self.eta <= self.sigma:
            raise ValueError("need sigma >= eta > 0")
        if not 0 < self.varsigma < 1:
            raise ValueError("backtracking ratio must lie in (0, 1)")
        if self.fixed_step is not None and self.fixed_step <= 0:
            raise ValueError("fixed_step must be positive when set")
        if self.bb_variant not in ("first", "second"):
            raise ValueError(f"unknown bb_variant {self.bb_variant!r}")


def next_block(schedule: BlockSchedule, s: int, k: int, history: Sequence[int] = (), rng=None) -> int:
    """Pick the block (1-based) updated at iteration k.

    Random mode forces any block that is close to missing a whole window of
    T consecutive picks, which keeps every length-T window covering all
    blocks; ties go to the smallest block id.
    """
    if s == 1:
        return 1
    if schedule.mode == "cyclic":
        return 1 + (k % s)
    if schedule.T < s:
        raise ValueError("coverage window T must be at least the number of blocks")
    m = len(history)
    deadlines = {}
    for b in range(1, s + 1):
        last = -1
        for idx in range(m - 1, -1, -1):
            if history[idx] == b:
                last = idx
                break
        gap = m - 1 - last
        deadlines[b] = (schedule.T - 1) - gap
    urgent = min(deadlines, key=lambda b: (deadlines[b], b))
    if deadlines[urgent] <= s - 1:
        return urgent
    if rng is None:
        rng = np.random.default_rng(schedule.rng_seed)
    return int(rng.integers(1, s + 1))


def extrapolate(x_cur: SpectralField, x_prev: SpectralField, w: float) -> SpectralField:
    """(1 + w) x_cur - w x_prev; zero-mean is preserved by linearity."""
    if x_cur.grid is not x_prev.grid and x_cur.grid != x_prev.grid:
        raise ValueError("fields live on different grids")
    return SpectralField((1.0 + w) * x_cur.coeffs - w * x_prev.coeffs, x_cur.grid)


def bb_init_step(u: SpectralField, v: SpectralField, options: SolverOptions) -> float:
    """Secant step seed; degenerate ratios fall back to alpha0."""
    uu = u.norm_sq()
    if uu == 0.0:
        return options.alpha0
    if options.bb_variant == "first":
        denom = float(np.real(np.vdot(u.coeffs, v.coeffs)))
        alpha = uu / denom if denom != 0.0 else math.inf
    else:
        vv = v.norm_sq()
        num = float(np.real(np.vdot(v.coeffs, u.coeffs)))
        alpha = num / vv if vv != 0.0 else math.inf
    if not math.isfinite(alpha) or alpha <= 0.0:
        return options.alpha0
    return alpha


def _radial_fixed_point(diag: np.ndarray, v: np.ndarray, alpha: float, a: float, b: float) -> float:
    vsq = np.abs(v) ** 2
    total = float(vsq.sum())
    if total == 0.0:
        return 0.0

    def r(p: float) -> float:
        return float(np.sum(vsq / (alpha * diag + a * p + b) ** 2))

    def r_prime(p: float) -> float:
        return float(-2.0 * a * np.sum(vsq / (alpha * diag + a * p + b) ** 3))

    lo, hi = 0.0, total / (b * b)
    p = hi
    for _ in range(100):
        res = p - r(p)
        if abs(res) <= 1e-12 * (1.0 + p):
            return p
        if res > 0.0:
            hi = p
        else:
            lo = p
        p_new = p - res / (1.0 - r_prime(p))
        if not lo < p_new < hi:
            p_new = 0.5 * (lo + hi)
        p = p_new
    raise RuntimeError("radial fixed point did not converge in 100 iterations")


def solve_radial_fixed_point(dop: DiagonalOperator, v: SpectralField, alpha: float, a: float, b: float) -> float:
    """Root p of p = |[alpha D + (a p + b) I]^{-1} v|^2, by safeguarded Newton."""
    if a <= 0 or b <= 0 or alpha <= 0:
        raise ValueError("need a > 0, b > 0 and alpha > 0")
    return _radial_fixed_point(dop.entries, v.coeffs, alpha, a, b)


def _kernel_update(diag, psi, g, alpha, a, b, dc):
    g = g.copy()
    g[dc] = 0.0
    if a == 0.0:
        z = (psi - alpha * g) / (1.0 + alpha * diag)
    else:
        grad_h = (a * float(np.sum(np.abs(psi) ** 2)) + b) * psi
        v = grad_h - alpha * g
        p_star = _radial_fixed_point(diag, v, alpha, a, b)
        z = v / (alpha * diag + a * p_star + b)
    z[dc] = 0.0
    return hermitian_symmetrize(z)


def bpg_solve_p2(dop: DiagonalOperator, psi: SpectralField, g: SpectralField, alpha: float) -> SpectralField:
    """Quadratic-kernel proximal update: (alpha D + I)^{-1}(psi - alpha P1 g), then P1."""
    dc = (0,) * dop.grid.lattice_dim
    return SpectralField(_kernel_update(dop.entries, psi.coeffs, g.coeffs, alpha, 0.0, 1.0, dc), dop.grid)


def bpg_solve_p4(dop: DiagonalOperator, psi: SpectralField, g: SpectralField, alpha: float, a: float, b: float) -> SpectralField:
    """Quartic-kernel proximal update via the radial fixed point."""
    if a <= 0 or b <= 0:
        raise ValueError("quartic kernel needs a > 0 and b > 0")
    dc = (0,) * dop.grid.lattice_dim
    return SpectralField(_kernel_update(dop.entries, psi.coeffs, g.coeffs, alpha, a, b, dc), dop.grid)


def restart_check(energy_window, e_candidate: float, x_old: SpectralField, z: SpectralField, sigma: float) -> bool:
    """Windowed sufficient decrease; False means keep the old iterate."""
    gap = max(energy_window) - e_candidate
    return gap >= sigma * float(np.sum(np.abs(x_old.coeffs - z.coeffs) ** 2))


class WeightPolicy:
    """Nesterov-style extrapolation weights capped at w_bar, reset on restart."""

    def __init__(self, w_bar: float):
        self.w_bar = w_bar
        self.t = 1.0

    def update(self, restarted: bool) -> float:
        if restarted:
            self.t = 1.0
            return 0.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * self.t * self.t))
        w = min((self.t - 1.0) / t_next, self.w_bar)
        self.t = t_next
        return w


@dataclass
class LineSearchResult:
    alpha: float
    z: object  # coefficient array (core) or SpectralField (public wrapper)
    backtracks: int
    candidate_energy: float
    extrapolated_energy: float
    phys_z: np.ndarray | None = None

    def __iter__(self):
        return iter((self.alpha, self.z, self.backtracks))


def _line_search_core(ev: Evaluator, i: int, psi: np.ndarray, g_psi: np.ndarray, e_psi: float, window_max: float, options: SolverOptions) -> LineSearchResult:
    dc = (0,) * ev.grid.lattice_dim
    diag = ev.diag[i - 1]
    xi = ev.coeffs[i - 1]

    u = psi - xi
    if float(np.sum(np.abs(u) ** 2)) == 0.0:
        alpha = options.alpha0
    else:
        g_x = ev.block_gradient(i)
        alpha = bb_init_step(
            SpectralField(u, ev.grid),
            SpectralField(g_psi - g_x, ev.grid),
            options,
        )

    threshold = max(e_psi, window_max)

    def trial(step: float):
        z = _kernel_update(diag, psi, g_psi, step, options.a, options.b, dc)
        e_cand, phys_z = ev.energy_replacing(i, z)
        return z, e_cand, phys_z

    backtracks = 0
    step = alpha
    while True:
        if step < options.alpha_min:
            step = options.alpha_min
            z, e_cand, phys_z = trial(step)
            break
        z, e_cand, phys_z = trial(step)
        decrease = threshold - e_cand
        if decrease >= options.eta * float(np.sum(np.abs(psi - z) ** 2)):
            break
        nxt = options.varsigma * step
        if nxt < options.alpha_min:
            # no admissible backtrack remains; hand alpha_min to the restart check
            step = options.alpha_min
            z, e_cand, phys_z = trial(step)
            break
        step = nxt
        backtracks += 1

    final = max(min(step, options.alpha_max), options.alpha_min)
    if final != step:
        z, e_cand, phys_z = trial(final)
    return LineSearchResult(final, z, backtracks, e_cand, e_psi, phys_z)


def line_search(model: ModelSpec, state: State, block: int, psi: SpectralField, options: SolverOptions, energy_window=None) -> LineSearchResult:
    """Backtracking search for the block update step at extrapolated point psi."""
    ev = Evaluator(model, state)
    window_max = max(energy_window) if energy_window else ev.total()
    phys_psi = ev.physical_of(psi.coeffs)
    g_psi = ev.block_gradient(block, phys_j=phys_psi)
    e_psi, _ = ev.energy_replacing(block, psi.coeffs, phys_psi)
    res = _line_search_core(ev, block, psi.coeffs, g_psi, e_psi, window_max, options)
    res.z = SpectralField(res.z, state.grid)
    return res


def _check_feasible(state: State) -> None:
    dc = (0,) * state.grid.lattice_dim
    for j, f in enumerate(state.components, start=1):
        if abs(f.coeffs[dc]) != 0.0:
            raise ValueError(f"component {j} is not zero-mean")
        if hermitian_defect(f.coeffs) > 1e-12 * (1.0 + float(np.max(np.abs(f.coeffs)))):
            raise ValueError(f"component {j} breaks Hermitian symmetry")


def _options_echo(options: SolverOptions) -> dict:
    d = {
        "method": "ab-bpg",
        "M": options.M,
        "a": options.a,
        "b": options.b,
        "w_bar": options.w_bar,
        "alpha0": options.alpha0,
        "alpha_min": options.alpha_min,
        "alpha_max": options.alpha_max,
        "sigma": options.sigma,
        "eta": options.eta,
        "varsigma": options.varsigma,
        "schedule": options.schedule.mode,
        "schedule_T": options.schedule.T,
        "max_iter": options.max_iter,
        "tol_grad": options.tol_grad,
        "tol_energy": options.tol_energy,
        "bb_variant": options.bb_variant,
    }
    if options.fixed_step is not None:
        d["fixed_step"] = options.fixed_step
    return d


def solve(model: ModelSpec, state0: State, options: SolverOptions):
    """Run the full block loop until a stopping rule fires.

    Returns the final feasible state and the complete run report.  With
    ``fixed_step`` set, extrapolation, line search and restarts are all
    disabled, which reproduces one semi-implicit block sweep per s
    iterations (baseline-equivalence mode).
    """
    _check_feasible(state0)
    ev = Evaluator(model, state0)
    s = model.s
    dc = (0,) * ev.grid.lattice_dim
    prev = [c.copy() for c in ev.coeffs]
    weight = WeightPolicy(options.w_bar)
    w = 0.0
    e_cur = ev.total()
    window: deque[float] = deque([e_cur], maxlen=options.M + 1)
    rng = np.random.default_rng(options.schedule.rng_seed)
    history: list[int] = []
    report = RunReport(options_echo=_options_echo(options))
    termination = "max_iter"

    for k in range(options.max_iter):
        tick = time.perf_counter()
        i = next_block(options.schedule, s, k, history, rng)
        history.append(i)
        xi = ev.coeffs[i - 1]

        if options.fixed_step is not None:
            step = options.fixed_step
            g = ev.block_gradient(i)
            z = _kernel_update(ev.diag[i - 1], xi, g, step, options.a, options.b, dc)
            e_cand, phys_z = ev.energy_replacing(i, z)
            backtracks = 0
            accept = True
        else:
            psi = (1.0 + w) * xi - w * prev[i - 1]
            phys_psi = ev.physical_of(psi)
            g_psi = ev.block_gradient(i, phys_j=phys_psi)
            e_psi, _ = ev.energy_replacing(i, psi, phys_psi)
            ls = _line_search_core(ev, i, psi, g_psi, e_psi, max(window), options)
            step, z, backtracks = ls.alpha, ls.z, ls.backtracks
            e_cand, phys_z = ls.candidate_energy, ls.phys_z
            accept = restart_check(
                window, e_cand, SpectralField(xi, ev.grid), SpectralField(z, ev.grid), options.sigma
            )

        if accept:
            prev[i - 1] = xi
            ev.set_block(i, z, phys_z)
            e_new = e_cand
            w = weight.update(False)
            restarted = False
        else:
            # the iterate did not move: clear this block's momentum memory so the
            # next extrapolation starts from the current iterate, not a stale one
            prev[i - 1] = xi
            e_new = e_cur
            w = weight.update(True)
            restarted = True

        window.append(e_new)
        grad_inf = ev.residual_inf()
        report.add(
            iter=k,
            block=i,
            energy=e_new,
            grad_inf=grad_inf,
            step=step,
            restarted=restarted,
            backtracks=backtracks,
            wall_ms=(time.perf_counter() - tick) * 1e3,
        )
        if e_new < options.energy_floor:
            report.termination = "diverged"
            report.energy_evals = ev.energy_evals
            raise DivergenceError(f"energy {e_new:.6e} fell below floor {options.energy_floor:.3e}")
        if grad_inf < options.tol_grad:
            termination = "grad_tol"
            break
        if not restarted and abs(e_new - e_cur) < options.tol_energy:
            termination = "energy_tol"
            break
        e_cur = e_new

    report.termination = termination
    report.final_energy = ev.total()
    report.final_grad_inf = ev.residual_inf()
    report.energy_evals = ev.energy_evals
    return ev.state(), report
