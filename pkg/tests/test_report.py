"""Trajectory/summary serialization and density slices."""

import csv
import json

import numpy as np
import pytest

from mcpfc.presets import preset
from mcpfc.report import (
    TRAJECTORY_HEADER,
    RunReport,
    density_slice,
    render_density_figure,
    render_trajectory_figure,
    write_slice_csv,
    write_summary_json,
    write_trajectory_csv,
)
from mcpfc.spectral import make_grid, to_physical, zero_field


def sample_report():
    rep = RunReport(options_echo={"method": "ab-bpg-2"})
    rep.add(iter=0, block=1, energy=1.0, grad_inf=0.5, step=0.1, restarted=False, backtracks=0, wall_ms=2.0)
    rep.add(iter=1, block=2, energy=0.5, grad_inf=0.1, step=0.2, restarted=True, backtracks=3, wall_ms=2.5)
    rep.final_energy = 0.5
    rep.final_grad_inf = 0.1
    rep.termination = "grad_tol"
    rep.energy_evals = 7
    return rep


class TestTrajectoryCsv:
    def test_schema_and_values(self, tmp_path):
        path = tmp_path / "traj.csv"
        write_trajectory_csv(sample_report(), path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == TRAJECTORY_HEADER
        assert rows[1][0] == "0" and rows[1][1] == "1"
        assert rows[2][5] == "1"  # restarted flag as int
        assert float(rows[2][2]) == 0.5

    def test_summary_json(self, tmp_path):
        path = tmp_path / "summary.json"
        write_summary_json(sample_report(), path)
        data = json.loads(path.read_text())
        assert data["termination"] == "grad_tol"
        assert data["iterations"] == 2
        assert data["energy_evals"] == 7
        assert data["options"]["method"] == "ab-bpg-2"


class TestDensitySlice:
    def test_periodic_2d(self):
        grid = make_grid(2, 2, (8, 8), np.eye(2), np.eye(2))
        fld = zero_field(grid)
        fld.coeffs[grid.flat_index((1, 0))] = 0.5
        fld.coeffs[grid.flat_index((-1, 0))] = 0.5
        x, y, vals = density_slice(fld)
        assert vals.shape == (8, 8)
        assert np.allclose(vals, to_physical(fld))
        assert x[-1] < 2 * np.pi

    def test_periodic_3d_takes_section(self):
        grid = make_grid(3, 3, (8, 8, 8), np.eye(3), np.eye(3))
        fld = zero_field(grid)
        fld.coeffs[grid.flat_index((1, 0, 0))] = 0.5
        fld.coeffs[grid.flat_index((-1, 0, 0))] = 0.5
        x, y, vals = density_slice(fld)
        assert vals.shape == (8, 8)

    def test_one_dimensional(self):
        grid, model, state = preset("lamellar_single")
        x, y, vals = density_slice(state.components[0])
        assert len(y) == 1
        assert vals.shape == (32, 1)

    def test_quasiperiodic_synthesis(self):
        grid, model, state = preset("dqc_binary", 8)
        x, y, vals = density_slice(state.components[0], samples=40, extent=4 * np.pi)
        assert vals.shape == (40, 40)
        assert np.all(np.isfinite(vals))
        # synthesis at the origin equals the plain coefficient sum
        assert vals[0, 0] == pytest.approx(float(np.real(np.sum(state.components[0].coeffs))), abs=1e-10)

    def test_slice_csv(self, tmp_path):
        grid = make_grid(2, 2, (4, 4), np.eye(2), np.eye(2))
        fld = zero_field(grid)
        x, y, vals = density_slice(fld)
        path = tmp_path / "s.csv"
        write_slice_csv(x, y, vals, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "y", "value"]
        assert len(rows) == 1 + 16


class TestFigures:
    def test_render_files(self, tmp_path):
        rep = sample_report()
        render_trajectory_figure({"run": rep}, tmp_path / "t.png")
        grid = make_grid(2, 2, (8, 8), np.eye(2), np.eye(2))
        x, y, vals = density_slice(zero_field(grid))
        render_density_figure(x, y, vals, tmp_path / "d.png", title="test")
        assert (tmp_path / "t.png").stat().st_size > 0
        assert (tmp_path / "d.png").stat().st_size > 0
