import io
import json
import os

import numpy as np
import pytest

from conftest import random_divfree
from nsdamp.budgets import BudgetRow, BudgetSeries, compute_budget_row
from nsdamp.cli import main
from nsdamp.config import build_ic, parse_config, InitialCondition
from nsdamp.damping import DampingSpec
from nsdamp.errors import (
    CheckpointError,
    ConfigError,
    GridMismatchError,
    NSDampError,
)
from nsdamp.io import (
    checkpoint_load,
    checkpoint_save,
    read_budget_csv,
    run_lock,
    write_budget_csv,
)
from nsdamp.spectral import (
    Grid,
    divergence_defect,
    sobolev_norm,
    spectral_l2_norm,
)
from nsdamp.stepping import SolverState, run

MINIMAL_TOML = """
dim = 2
n = 16
t_max = 0.05
dt = 0.01

[damping]
kind = "log"
alpha = 0.25

[ic]
kind = "taylor_green"
amplitude = 1.0
"""


class TestParseConfig:
    def test_minimal(self):
        cfg = parse_config(MINIMAL_TOML)
        assert cfg.dim == 2
        assert cfg.n == 16
        assert cfg.damping.kind == "log"
        assert cfg.damping.alpha == 0.25
        assert cfg.output_every == cfg.dt  # fixed-dt default cadence
        assert cfg.box_length == pytest.approx(2 * np.pi)

    def test_echo_carries_envelope_exponent(self):
        cfg = parse_config(MINIMAL_TOML)
        series = BudgetSeries(spec=cfg.damping, config_echo=cfg.echo())
        assert series.a_alpha == pytest.approx(np.exp(2.0) - np.e)

    def test_negative_alpha_rejected(self):
        bad = MINIMAL_TOML.replace("alpha = 0.25", "alpha = -1.0")
        with pytest.raises((ConfigError, NSDampError)):
            parse_config(bad)

    def test_power_without_beta_rejected(self):
        bad = MINIMAL_TOML.replace('kind = "log"', 'kind = "power"')
        with pytest.raises((ConfigError, NSDampError)):
            parse_config(bad)

    def test_unknown_key_rejected_with_path(self):
        bad = MINIMAL_TOML + "\n[damping2]\nx = 1\n"
        with pytest.raises(ConfigError, match="damping2"):
            parse_config(bad)
        bad2 = MINIMAL_TOML.replace("alpha = 0.25", "alpha = 0.25\nalhpa = 1")
        with pytest.raises(ConfigError, match="alhpa"):
            parse_config(bad2)

    def test_adaptive_default_cadence(self):
        txt = MINIMAL_TOML.replace("dt = 0.01", "")
        cfg = parse_config(txt)
        assert cfg.dt is None
        assert cfg.output_every == pytest.approx(cfg.t_max / 100.0)


class TestBuildIC:
    def test_taylor_green_2d_energy(self, grid2d):
        u = build_ic(InitialCondition(kind="taylor_green", amplitude=1.0), grid2d)
        assert spectral_l2_norm(u) ** 2 == pytest.approx(2 * np.pi**2, rel=1e-12)
        assert divergence_defect(u) <= 1e-12

    def test_random_divfree_properties(self, grid3d):
        ic = InitialCondition(
            kind="random_divfree",
            amplitude=2.0,
            spectrum_slope=2.0,
            peak_wavenumber=3.0,
            seed=42,
        )
        u = build_ic(ic, grid3d)
        assert divergence_defect(u) <= 1e-12
        assert sobolev_norm(u, 1.0, homogeneous=False) == pytest.approx(
            2.0, rel=1e-10
        )
        # mean-free
        assert np.max(np.abs(u.coeffs[:, 0, 0, 0])) < 1e-14

    def test_random_divfree_seed_reproducible(self, grid3d):
        ic = InitialCondition(kind="random_divfree", amplitude=1.0, seed=7)
        a = build_ic(ic, grid3d)
        b = build_ic(ic, grid3d)
        assert np.array_equal(a.coeffs, b.coeffs)
        c = build_ic(
            InitialCondition(kind="random_divfree", amplitude=1.0, seed=8), grid3d
        )
        assert not np.array_equal(a.coeffs, c.coeffs)

    def test_single_mode(self, grid3d):
        ic = InitialCondition(
            kind="single_mode", amplitude=0.5, mode_k=(0, 1, 0), mode_component=0
        )
        u = build_ic(ic, grid3d)
        assert u.coeffs[0, 0, 1, 0] == pytest.approx(0.25)
        assert u.coeffs[0, 0, -1, 0] == pytest.approx(0.25)
        assert divergence_defect(u) <= 1e-14


def small_run():
    cfg = parse_config(MINIMAL_TOML)
    return cfg, run(cfg, collect_states=True)


class TestBudgetCSV:
    def test_round_trip_exact(self):
        cfg, result = small_run()
        buf = io.StringIO()
        write_budget_csv(result.series, buf)
        buf.seek(0)
        back = read_budget_csv(buf)
        assert len(back) == len(result.series)
        for a, b in zip(result.series.rows, back.rows):
            assert a.t == b.t  # repr round trip is bit-exact
            assert a.l2_sq == b.l2_sq
            assert a.int_h2dot_sq == b.int_h2dot_sq
            assert a.blowup == b.blowup
        assert back.spec.kind == "log"
        assert back.spec.alpha == 0.25
        assert back.config_echo["n"] == 16

    def test_empty_series_header_only(self):
        series = BudgetSeries(spec=DampingSpec("none"), config_echo={"n": 8})
        buf = io.StringIO()
        write_budget_csv(series, buf)
        buf.seek(0)
        back = read_budget_csv(buf)
        assert len(back) == 0
        assert back.config_echo["n"] == 8

    def test_zero_run_row(self, grid2d):
        series = BudgetSeries(spec=DampingSpec("none"))
        u = build_ic(InitialCondition(kind="taylor_green", amplitude=0.0), grid2d)
        series.append(compute_budget_row(u, 0.0, series.spec))
        buf = io.StringIO()
        write_budget_csv(series, buf)
        buf.seek(0)
        back = read_budget_csv(buf)
        assert back.rows[0].l2_sq == 0.0


class TestCheckpoint:
    def test_round_trip_bit_exact(self, grid3d, tmp_path):
        u = random_divfree(grid3d, seed=12)
        state = SolverState(t=0.375, u=u, step_count=375, dt=1e-3)
        path = tmp_path / "state.ckpt"
        checkpoint_save(state, path)
        back = checkpoint_load(path, grid=grid3d)
        assert back.t == state.t
        assert back.dt == state.dt
        assert back.step_count == 375
        assert np.array_equal(back.u.coeffs, u.coeffs)
        assert back.u.divergence_free

    def test_truncated_rejected(self, grid3d, tmp_path):
        u = random_divfree(grid3d, seed=13)
        path = tmp_path / "state.ckpt"
        checkpoint_save(SolverState(t=0.0, u=u), path)
        blob = path.read_bytes()
        (tmp_path / "cut.ckpt").write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            checkpoint_load(tmp_path / "cut.ckpt")

    def test_corrupted_payload_rejected(self, grid3d, tmp_path):
        u = random_divfree(grid3d, seed=14)
        path = tmp_path / "state.ckpt"
        checkpoint_save(SolverState(t=0.0, u=u), path)
        blob = bytearray(path.read_bytes())
        blob[200] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            checkpoint_load(path)

    def test_grid_mismatch(self, grid3d, tmp_path):
        u = random_divfree(grid3d, seed=15)
        path = tmp_path / "state.ckpt"
        checkpoint_save(SolverState(t=0.0, u=u), path)
        with pytest.raises(GridMismatchError):
            checkpoint_load(path, grid=Grid(3, 32))

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError):
            checkpoint_load(path)


class TestRunLock:
    def test_exclusive(self, tmp_path):
        with run_lock(tmp_path):
            assert (tmp_path / "run.lock").exists()
            with pytest.raises(NSDampError):
                with run_lock(tmp_path):
                    pass
        assert not (tmp_path / "run.lock").exists()


class TestCLI:
    def write_config(self, tmp_path, text=MINIMAL_TOML):
        path = tmp_path / "run.toml"
        path.write_text(text)
        return str(path)

    def test_solve_pass(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--output", out]) == 0
        printed = capsys.readouterr().out
        assert "[PASS] l2_energy_inequality" in printed
        assert "[PASS] h1_energy_inequality" in printed
        for name in ("budget.csv", "checkpoint_final.ckpt", "report.json",
                     "manifest.json"):
            assert os.path.exists(os.path.join(out, name))
        with open(os.path.join(out, "report.json")) as fh:
            report = json.load(fh)
        assert report["exit_code"] == 0
        assert not os.path.exists(os.path.join(out, "run.lock"))

    def test_check_roundtrip(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        out = str(tmp_path / "out")
        main(["solve", "--config", cfg, "--output", out])
        capsys.readouterr()
        budget = os.path.join(out, "budget.csv")
        assert main(["check", "--budget", budget, "--mode", "both"]) == 0
        assert "[PASS]" in capsys.readouterr().out

    def test_check_violation_exit_code(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        out = str(tmp_path / "out")
        main(["solve", "--config", cfg, "--output", out])
        capsys.readouterr()
        budget = os.path.join(out, "budget.csv")
        assert main(["check", "--budget", budget, "--tol", "1e-30"]) == 1

    def test_solve_blowup_exit_code(self, tmp_path, capsys):
        text = MINIMAL_TOML.replace("dt = 0.01", "dt = 0.01\nvelocity_ceiling = 1e-6")
        cfg = self.write_config(tmp_path, text)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--output", out]) == 2
        assert "[BLOWUP]" in capsys.readouterr().out

    def test_bad_config_exit_code(self, tmp_path, capsys):
        bad = MINIMAL_TOML.replace("alpha = 0.25", "alpha = -3")
        cfg = self.write_config(tmp_path, bad)
        assert main(["solve", "--config", cfg, "--output",
                     str(tmp_path / "o")]) == 3

    def test_missing_config_exit_code(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "nope.toml")]) == 3

    def test_usage_error_exit_code(self, capsys):
        assert main(["frobnicate"]) == 3

    def test_resume_matches_uninterrupted(self, tmp_path, capsys):
        # run to t = 0.05, checkpoint, resume to t = 0.1: final state equals
        # the uninterrupted run bit for bit
        long_toml = MINIMAL_TOML.replace("t_max = 0.05", "t_max = 0.1")
        cfg_short = self.write_config(tmp_path)
        cfg_long = str(tmp_path / "long.toml")
        with open(cfg_long, "w") as fh:
            fh.write(long_toml)
        out1 = str(tmp_path / "short")
        out2 = str(tmp_path / "resumed")
        out3 = str(tmp_path / "full")
        assert main(["solve", "--config", cfg_short, "--output", out1]) == 0
        assert main([
            "solve", "--config", cfg_long, "--output", out2,
            "--resume", os.path.join(out1, "checkpoint_final.ckpt"),
        ]) == 0
        assert main(["solve", "--config", cfg_long, "--output", out3]) == 0
        a = checkpoint_load(os.path.join(out2, "checkpoint_final.ckpt"))
        b = checkpoint_load(os.path.join(out3, "checkpoint_final.ckpt"))
        assert a.t == b.t
        assert a.step_count == b.step_count
        assert np.array_equal(a.u.coeffs, b.u.coeffs)

    def test_sweep(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        out = str(tmp_path / "sweep")
        assert main([
            "sweep", "--config", cfg, "--vary", "alpha=0.25:0.75:0.25",
            "--output", out,
        ]) == 0
        for v in ("0.25", "0.5", "0.75"):
            assert os.path.exists(os.path.join(out, f"alpha_{v}", "budget.csv"))

    def test_sweep_bad_spec(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        assert main(["sweep", "--config", cfg, "--vary", "alpha=zzz"]) == 3
