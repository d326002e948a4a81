"""Acceptance gate: property suites plus desk-scale trend reproduction.

Each test prints one PASS line with its measured quantity so the suite
doubles as a report.  The trend tests compare in full-sweep units (the
block solver records one block update per iteration, a SIS iteration is a
sweep over all blocks) and cap the baseline's budget at the asserted ratio
times the block solver's sweep count: either the baseline converges above
the ratio or it exhausts the cap unconverged — both outcomes establish the
trend while bounding runtime.
"""

import math
import time

import numpy as np
import pytest

import mcpfc
from mcpfc.baselines import BaselineOptions, bdf2_step, run_baseline, sis_step
from mcpfc.cli import gradcheck_max_error
from mcpfc.model import ModelSpec, State, energy
from mcpfc.optimizer import SolverOptions, bpg_solve_p2, bpg_solve_p4, solve, solve_radial_fixed_point
from mcpfc.presets import preset
from mcpfc.spectral import build_diag_operator, make_grid, random_field, zero_field

from test_model import random_model
from test_optimizer import projected_gradient_oracle


def report(line):
    print(f"\n[ACCEPTANCE] {line}")


def test_01_gradient_consistency():
    """Directional derivatives match central finite differences to 1e-6."""
    tick = time.time()
    grid = make_grid(2, 2, (16, 16), np.eye(2), np.eye(2))
    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(20):
        model = random_model(rng, s=2)
        worst = max(worst, gradcheck_max_error(model, grid, trials=1, seed=trial))
    elapsed = time.time() - tick
    assert worst < 1e-6
    assert elapsed < 10.0
    report(f"criterion 1 PASS: max FD relative error {worst:.3e} in {elapsed:.1f}s")


def test_02_subproblem_oracle_equivalence():
    """Kernel updates match a projected-gradient oracle; fixed point matches bisection."""
    tick = time.time()
    grid = make_grid(2, 2, (8, 8), np.eye(2), np.eye(2))
    rng = np.random.default_rng(1)
    worst_p2 = worst_p4 = worst_res = worst_bis = 0.0
    for _ in range(50):
        dop = build_diag_operator(grid, 1.0, float(0.5 + rng.random()))
        psi = random_field(grid, rng, 0.5)
        g = random_field(grid, rng, 0.5)
        alpha = float(0.05 + rng.random())
        z2 = bpg_solve_p2(dop, psi, g, alpha)
        oracle2 = projected_gradient_oracle(dop, psi.coeffs, g.coeffs, alpha, 0.0, 1.0)
        worst_p2 = max(worst_p2, float(np.max(np.abs(z2.coeffs - oracle2))))
        a, b = float(0.2 + rng.random()), 1.0
        z4 = bpg_solve_p4(dop, psi, g, alpha, a, b)
        oracle4 = projected_gradient_oracle(dop, psi.coeffs, g.coeffs, alpha, a, b)
        worst_p4 = max(worst_p4, float(np.max(np.abs(z4.coeffs - oracle4))))
        v = random_field(grid, rng, 1.0)
        p = solve_radial_fixed_point(dop, v, alpha, a, b)
        vsq = np.abs(v.coeffs) ** 2
        res = abs(p - float(np.sum(vsq / (alpha * dop.entries + a * p + b) ** 2)))
        worst_res = max(worst_res, res)
        lo, hi = 0.0, float(vsq.sum()) / (b * b) + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid - float(np.sum(vsq / (alpha * dop.entries + a * mid + b) ** 2)) > 0:
                hi = mid
            else:
                lo = mid
        worst_bis = max(worst_bis, abs(p - 0.5 * (lo + hi)))
    elapsed = time.time() - tick
    assert worst_p2 < 1e-8 and worst_p4 < 1e-8
    assert worst_res < 1e-12
    assert worst_bis < 1e-9
    assert elapsed < 30.0
    report(
        "criterion 2 PASS: oracle gaps "
        f"p2 {worst_p2:.2e}, p4 {worst_p4:.2e}, fixed-point residual {worst_res:.2e}, "
        f"bisection gap {worst_bis:.2e} in {elapsed:.1f}s"
    )


def test_03_sis_equivalence():
    """AB-BPG with fixed_step reproduces SIS iterates to 1e-12 for 100 iterations."""
    tick = time.time()
    _, model, state = preset("lamellar_single")
    dt = 0.05
    opts = SolverOptions(fixed_step=dt, a=0.0, w_bar=0.0, M=0, max_iter=100, tol_grad=0.0, tol_energy=0.0)
    # iterate-by-iterate: with s = 1, one solver iteration is one SIS sweep
    worst = 0.0
    st_sis = state.copy()
    for k in range(1, 101):
        st_sis = sis_step(model, st_sis, dt)
        opts_k = SolverOptions(fixed_step=dt, a=0.0, w_bar=0.0, M=0, max_iter=k, tol_grad=0.0, tol_energy=0.0)
        if k in (1, 10, 100):  # spot-check prefixes, full run at k = 100
            st_opt, _ = solve(model, state.copy(), opts_k)
            worst = max(worst, float(np.max(np.abs(st_opt.components[0].coeffs - st_sis.components[0].coeffs))))
    elapsed = time.time() - tick
    assert worst < 1e-12
    assert elapsed < 5.0
    report(f"criterion 3 PASS: max iterate gap {worst:.2e} over 100 iterations in {elapsed:.1f}s")


@pytest.mark.parametrize("M", [0, 5])
@pytest.mark.parametrize(
    "name,resolution,iters",
    [
        ("lamellar_single", None, 60),
        ("dqc_binary", None, 60),
        ("chessboard_quinary", None, 60),
        ("bcc_quinary", None, 60),
    ],
)
def test_04_energy_dissipation(name, resolution, iters, M):
    """Windowed monotonicity holds along every recorded preset trajectory."""
    grid, model, state = preset(name, resolution)
    _, rep = solve(model, state, SolverOptions(M=M, max_iter=iters, tol_energy=0.0))
    energies = [r.energy for r in rep.records]
    window = [energy(model, state).total]
    for e in energies:
        bound = max(window[-(M + 1):])
        assert e <= bound + 1e-12 * (1 + abs(bound))
        window.append(e)
    report(f"criterion 4 PASS: {name} M={M} windowed dissipation over {len(energies)} iterations")


def test_05_lamellar_analytic_optimum():
    """Converged energy within 2% of an independent dense minimizer."""
    from scipy.optimize import minimize

    tick = time.time()
    grid, model, state = preset("lamellar_single")
    st, rep = solve(model, state, SolverOptions(tol_energy=1e-16))

    # dense oracle: generic minimizer over all modes, energy written from scratch
    N = 32
    k = np.fft.fftfreq(N) * N
    d = (1.0 - k * k) ** 2

    def dense_energy(x):
        c = np.zeros(N, dtype=complex)
        c[1 : N // 2] = x[: N // 2 - 1] + 1j * x[N // 2 - 1 : N - 2]
        c[N // 2 + 1 :] = np.conj(c[1 : N // 2][::-1])
        c[N // 2] = x[-1]
        phi = np.real(np.fft.ifft(c) * N)
        return 0.5 * np.sum(d * np.abs(c) ** 2) + np.mean(-0.1 * phi**2 + phi**4)

    rng = np.random.default_rng(2)
    best = math.inf
    for _ in range(5):
        res = minimize(dense_energy, rng.standard_normal(N - 1) * 0.1, method="BFGS",
                       options={"maxiter": 2000, "gtol": 1e-10})
        best = min(best, res.fun)
    elapsed = time.time() - tick
    assert rep.final_energy <= best + 0.02 * abs(best)
    assert elapsed < 5.0
    report(
        f"criterion 5 PASS: solver energy {rep.final_energy:.8e} vs oracle {best:.8e} "
        f"(single-mode bound {-1/600:.8e}) in {elapsed:.1f}s"
    )


def _trend(name, solver_opts, ratio, budget_s, converged=("grad_tol",)):
    """Block-solver run plus adaptive SIS capped at ratio * its sweep count.

    Iteration counts are compared in full-sweep units: the block solver
    records one block update per iteration while a SIS iteration is a
    Gauss-Seidel sweep over all s blocks, so its block-iteration count is
    divided by s before comparing.  ``converged`` lists the terminations
    accepted as convergence; both methods use the same stopping rules, so
    either SIS needs at least ``ratio`` times more sweeps or it exhausts
    the cap unconverged — both prove the trend.
    """
    grid, model, state = preset(name)
    tick = time.time()
    st, rep = solve(model, state.copy(), solver_opts)
    assert rep.termination in converged, f"block solver did not converge: {rep.termination}"
    sweeps = math.ceil(rep.iterations / model.s)
    cap = ratio * sweeps
    _, rep_sis = run_baseline(
        model,
        state.copy(),
        BaselineOptions(scheme="sis", max_iter=cap, tol_energy=solver_opts.tol_energy),
    )
    elapsed = time.time() - tick
    sis_converged = rep_sis.termination in converged
    assert (not sis_converged) or sweeps * ratio <= rep_sis.iterations
    assert elapsed < budget_s
    return model, st, rep, rep_sis, sweeps, elapsed


def test_06_dqc_trend():
    """AB-BPG-4 converges in at most half the adaptive-SIS iterations at 24^4."""
    opts = SolverOptions(a=1.0, M=0, max_iter=6000, tol_energy=0.0)
    model, st, rep, rep_sis, sweeps, elapsed = _trend("dqc_binary", opts, ratio=2, budget_s=900)
    report(
        f"criterion 6 PASS: DQC AB-BPG-4 {rep.iterations} iters = {sweeps} sweeps "
        f"(grad {rep.final_grad_inf:.1e}) vs SIS {rep_sis.iterations} sweeps "
        f"({rep_sis.termination}) in {elapsed:.0f}s"
    )


def test_07_chessboard_trend():
    """AB-BPG-2 needs at most 1/5 the SIS iterations; phi1 peaks at (+-1, 0)."""
    opts = SolverOptions(a=0.0, M=0, max_iter=6000)
    model, st, rep, rep_sis, sweeps, elapsed = _trend(
        "chessboard_quinary", opts, ratio=5, budget_s=600, converged=("grad_tol", "energy_tol")
    )
    grid = st.grid
    c1 = np.abs(st.components[0].coeffs)
    peak = np.unravel_index(np.argmax(c1), c1.shape)
    assert peak in (grid.flat_index((1, 0)), grid.flat_index((-1, 0)))
    report(
        f"criterion 7 PASS: chessboard AB-BPG-2 {rep.iterations} iters = {sweeps} sweeps "
        f"({rep.termination}, grad {rep.final_grad_inf:.1e}) vs SIS {rep_sis.iterations} sweeps "
        f"({rep_sis.termination}); phi1 peak at mode {peak} in {elapsed:.0f}s"
    )


def test_08_bcc_trend():
    """AB-BPG-2 needs at most 1/5 the SIS iterations; shells within 10% of q_j."""
    opts = SolverOptions(a=0.0, M=0, max_iter=6000)
    model, st, rep, rep_sis, sweeps, elapsed = _trend(
        "bcc_quinary", opts, ratio=5, budget_s=900, converged=("grad_tol", "energy_tol")
    )
    grid = st.grid
    norms = np.sqrt(grid.ksq)
    shells = []
    for f, q in zip(st.components, model.q):
        a = np.abs(f.coeffs)
        shell = float(norms[np.unravel_index(np.argmax(a), a.shape)])
        shells.append(shell)
        assert abs(shell - q) <= 0.1 * q
    report(
        f"criterion 8 PASS: BCC AB-BPG-2 {rep.iterations} iters = {sweeps} sweeps "
        f"({rep.termination}, grad {rep.final_grad_inf:.1e}) vs SIS {rep_sis.iterations} sweeps "
        f"({rep_sis.termination}); dominant shells {['%.3f' % s for s in shells]} in {elapsed:.0f}s"
    )


def test_09_bdf2_order():
    """Richardson slope of the BDF2 error on the linear diagnostic model in [1.8, 2.2]."""
    tick = time.time()
    grid = make_grid(1, 1, (16,), [[1.0]], [[1.0]])
    tau2 = 0.3
    model = ModelSpec(q=(1.0,), c=1.0, tau={(2,): tau2})
    d = model.diag_operators(grid)[0].entries[2]
    lam = d + 2 * tau2
    u0, T = 0.3, 0.5
    errs, dts = [], []
    for nsteps in (25, 50, 100, 200):
        dt = T / nsteps
        def seeded(a):
            f = zero_field(grid)
            f.coeffs[2] = a
            f.coeffs[-2] = a
            return State([f])
        prev, cur = seeded(u0), seeded(u0 * math.exp(-lam * dt))
        for _ in range(nsteps - 1):
            prev, cur = cur, bdf2_step(model, cur, prev, dt)
        errs.append(abs(cur.components[0].coeffs[2].real - u0 * math.exp(-lam * T)))
        dts.append(dt)
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    elapsed = time.time() - tick
    assert 1.8 <= slope <= 2.2
    assert elapsed < 10.0
    report(f"criterion 9 PASS: BDF2 order slope {slope:.3f} in {elapsed:.1f}s")


def test_10_determinism():
    """Fixed seed reproduces the trajectory exactly (wall_ms excluded)."""
    grid = make_grid(2, 2, (16, 16), np.eye(2), np.eye(2))
    rng = np.random.default_rng(3)
    model = random_model(rng, s=2)
    rng_init = np.random.default_rng(7)
    state = State([random_field(grid, rng_init, 0.2) for _ in range(2)])
    opts = SolverOptions(max_iter=40, tol_grad=0.0, tol_energy=0.0,
                         schedule=mcpfc.BlockSchedule(mode="random", T=4, rng_seed=11))
    _, rep1 = solve(model, state.copy(), opts)
    _, rep2 = solve(model, state.copy(), opts)
    key = lambda r: (r.iter, r.block, r.energy, r.grad_inf, r.step, r.restarted, r.backtracks)
    assert [key(r) for r in rep1.records] == [key(r) for r in rep2.records]
    report("criterion 10 PASS: 40-iteration random-schedule trajectories identical")
