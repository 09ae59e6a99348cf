import json
import os

import numpy as np
import pytest

from src.errors import ConfigurationError, MoleculeConditionError, SnapshotFormatError
from src.main import EXIT_ERROR, EXIT_OK, main
from src.schemas import DiagnosticsRecord
from src.spectral_core import Field
from src.utils.config_utils import parse_config, validate_config
from src.utils.csv_utils import (
    read_numeric_csv,
    validate_ledger_csv,
    write_diagnostics_csv,
    write_ledger_csv,
)
from src.utils.snapshot_io import MAGIC, decode_snapshot, read_snapshot, write_snapshot
from src.workflow import resolve_config, run_preset

SMALL_RUN = """
preset = "simulate"
dt = 1e-2
t_end = 0.05
initial_condition = "single_mode"

[grid]
points_per_axis = 32

[equation]
alpha = 0.25
velocity_source = "prescribed"
prescribed_velocity = "zero"

[output]
csv_every = 1
"""


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ----- Configuration -----
def test_parse_minimal_config_fills_defaults():
    config = parse_config("[grid]\npoints_per_axis = 64\n\n[equation]\nalpha = 0.3\n")
    assert config.grid.points_per_axis == 64
    assert config.equation.alpha == 0.3
    assert config.equation.epsilon_visc == 0.0
    assert config.molecule is None
    assert config.output.csv_every == 1


@pytest.mark.parametrize(
    "text, match",
    [
        ("resolution = 64\n", "resolution"),
        ("[grid]\nsize = 64\n", "size"),
        ("[grid]\npoints_per_axis = 48\n", "power of two"),
        ("[equation]\nalpha = 0.7\n", "alpha"),
        ("dt = \n", "malformed"),
    ],
)
def test_parse_config_rejects(text, match):
    with pytest.raises(ConfigurationError, match=match):
        parse_config(text)


def test_molecule_windows_are_checked_against_the_equation():
    with pytest.raises(MoleculeConditionError, match="sigma"):
        parse_config("[equation]\nalpha = 0.25\n\n[molecule]\nsigma = 0.5\n")
    with pytest.raises(MoleculeConditionError, match="omega"):
        parse_config("[equation]\nalpha = 0.25\n\n[molecule]\nomega = 0.6\n")
    config = parse_config("[equation]\nalpha = 0.25\n\n[molecule]\nr = 0.05\nx0 = [1.0, 2.0]\n")
    assert config.molecule.gamma == pytest.approx(2.0 / 9.0)
    assert config.molecule.x0 == (1.0, 2.0)


def test_resolve_config_pins_user_keys(out_dir):
    config, pinned = resolve_config("sqg_maxprinciple", None, {"alpha": 0.25, "out": out_dir, "n": None})
    assert config.preset == "sqg_maxprinciple"
    assert config.equation.alpha == 0.25
    assert config.grid.points_per_axis == 128
    assert pinned == {"equation.alpha", "output.directory"}

    _, unpinned = resolve_config("sqg_maxprinciple")
    assert "equation.alpha" not in unpinned
    with pytest.raises(ConfigurationError, match="unknown preset"):
        resolve_config("turbulence")


# ----- Snapshots -----
def test_snapshot_round_trip_is_bit_exact(tmp_path, smooth_field):
    path = write_snapshot(smooth_field, str(tmp_path / "theta.fdt"))
    back = read_snapshot(path)
    assert back.grid == smooth_field.grid
    assert np.array_equal(back.values, smooth_field.values)
    assert os.path.getsize(path) == 20 + 8 * 32 * 32


def test_snapshot_rejects_bad_files(tmp_path, grid32):
    path = write_snapshot(Field.zeros(grid32), str(tmp_path / "zeros.fdt"))
    with open(path, "rb") as fh:
        data = fh.read()

    with pytest.raises(SnapshotFormatError, match="magic"):
        decode_snapshot(b"FDT2" + data[4:])
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(data[:10])
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(data[:-8])

    header = MAGIC + np.array([2, 12], dtype="<u4").tobytes() + np.array([1.0], dtype="<f8").tobytes()
    with pytest.raises(SnapshotFormatError, match="power of two"):
        decode_snapshot(header + bytes(8 * 144))


# ----- CSV -----
def test_diagnostics_csv_layout(tmp_path):
    empty = write_diagnostics_csv([], str(tmp_path / "empty.csv"))
    with open(empty, encoding="utf-8") as fh:
        assert fh.read().strip() == "time,step,energy_balance_residual"

    records = [
        DiagnosticsRecord(time=0.0, step=0, lp_2=1.0 / 3.0),
        DiagnosticsRecord(time=0.1 + 0.2, step=1, energy_balance_residual=-2.0 ** -40, lp_2=np.pi),
    ]
    path = write_diagnostics_csv(records, str(tmp_path / "diagnostics.csv"))
    with open(path, encoding="utf-8") as fh:
        assert len(fh.read().splitlines()) == 3

    df = read_numeric_csv(path)
    assert list(df.columns) == ["time", "step", "energy_balance_residual", "lp_2"]
    assert df["time"].iloc[1] == 0.1 + 0.2
    assert df["lp_2"].iloc[0] == 1.0 / 3.0
    assert df["lp_2"].iloc[1] == np.pi
    assert df["energy_balance_residual"].iloc[1] == -2.0 ** -40


def test_ledger_csv_validation(tmp_path):
    row = dict.fromkeys(["G_N", "f", "conc", "conc_bound", "linf", "linf_bound", "l1", "l1_bound", "Kmin", "c0max"], 1.0)
    rows = [
        {**row, "run": "a", "step": 0, "s_k": 0.01, "sum_s": 0.01},
        {**row, "run": "a", "step": 1, "s_k": 0.001, "sum_s": 0.011},
        {**row, "run": "b", "step": 0, "s_k": 0.02, "sum_s": 0.02},
    ]
    good = write_ledger_csv(rows, str(tmp_path / "ledger.csv"))
    assert validate_ledger_csv(good)[0]

    rows[1]["sum_s"] = 0.005
    bad = write_ledger_csv(rows, str(tmp_path / "bad.csv"))
    ok, msg = validate_ledger_csv(bad)
    assert not ok and "run a" in msg
    assert not validate_ledger_csv(str(tmp_path / "missing.csv"))[0]


# ----- CLI and presets -----
def test_validate_command(tmp_path):
    good = write_config(tmp_path, SMALL_RUN)
    bad = write_config(tmp_path, "[molecule]\nomega = 0.6\n", "bad.toml")
    assert validate_config(good)[0]
    assert main(["validate", good]) == EXIT_OK
    assert main(["validate", bad]) == EXIT_ERROR
    assert main(["validate", str(tmp_path / "absent.toml")]) == EXIT_ERROR


def test_run_command_writes_artifacts(tmp_path):
    config = write_config(tmp_path, SMALL_RUN)
    out = str(tmp_path / "run")
    assert main(["run", config, "--out", out]) == EXIT_OK
    for name in ("diagnostics.csv", "verdicts.csv", "summary.json", "config.json", "run.log"):
        assert os.path.exists(os.path.join(out, name)), name
    assert os.path.exists(os.path.join(out, "snapshots", "theta_final.fdt"))
    with open(os.path.join(out, "summary.json"), encoding="utf-8") as fh:
        summary = json.load(fh)
    assert summary["passed"] is True
    assert summary["details"]["steps"] == 5
    assert len(read_numeric_csv(os.path.join(out, "diagnostics.csv"))) == 6


def test_runs_are_deterministic(tmp_path):
    config = write_config(tmp_path, SMALL_RUN)
    first, second = str(tmp_path / "first"), str(tmp_path / "second")
    assert main(["run", config, "--out", first]) == EXIT_OK
    assert main(["run", config, "--out", second]) == EXIT_OK
    for name in ("diagnostics.csv", "verdicts.csv"):
        with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
            assert a.read() == b.read(), name


def test_power_lemma_preset(out_dir):
    state = run_preset("power_lemma", overrides={"out": out_dir})
    assert state["failed"] == []
    assert os.path.exists(state["artifacts"]["summary"])


def test_spectral_exactness_preset(out_dir):
    state = run_preset("spectral_exactness", overrides={"out": out_dir})
    exact = [c for c in state["outcome"].criteria if c.name.endswith("_exact")]
    assert exact and all(c.passed for c in exact)


def test_cli_rejects_unknown_presets():
    with pytest.raises(SystemExit):
        main(["preset", "turbulence"])


@pytest.mark.slow
def test_transfer_preset_passes(out_dir):
    assert main(["preset", "transfer", "--out", out_dir]) == EXIT_OK


@pytest.mark.slow
def test_sqg_maxprinciple_preset_passes(out_dir):
    assert main(["preset", "sqg_maxprinciple", "--alpha", "0.25", "--out", out_dir]) == EXIT_OK


@pytest.mark.slow
def test_linfty_truncation_reports_half_box_gap(out_dir):
    state = run_preset("linfty_truncation", overrides={"out": out_dir})
    summary = state["outcome"].summary
    assert summary["linf_difference_half_box"] >= 0.0
    assert any(c.name.startswith("max_principle_L2_") for c in state["outcome"].criteria)
    assert set(summary["localized_lp_R"]) == {"p2", "p4"}
    assert all(c.passed for c in state["outcome"].criteria)


@pytest.mark.slow
def test_besov_chain_preset(out_dir):
    state = run_preset("besov_chain", overrides={"out": out_dir})
    names = {c.name for c in state["outcome"].criteria}
    assert {"chain_finite", "second_constant_sharp", "cross_terms_nonpositive"} <= names
    assert state["failed"] == []


@pytest.mark.slow
def test_molecule_ledger_preset(out_dir):
    state = run_preset("molecule_ledger", overrides={"out": out_dir})
    summary = state["outcome"].summary
    assert state["failed"] == []
    assert {t["velocity"] for t in summary["kmin_vs_mu"]} == {"zero", "shear"}
    assert all(t["kmin"] >= 0.0 for t in summary["kmin_vs_mu"])
    assert summary["big_molecule"]["holds"]
    assert validate_ledger_csv(state["artifacts"]["ledger"])[0]


@pytest.mark.slow
def test_holder_boundedness_preset(out_dir):
    state = run_preset("holder_boundedness", overrides={"out": out_dir})
    summary = state["outcome"].summary
    assert state["failed"] == []
    assert set(summary["pairings"]) == {"0.02", "0.05", "0.1", "0.2", "0.5"}
    assert summary["holder_seminorm"]["coarse"] > 0.0


@pytest.mark.slow
def test_picard_preset(out_dir):
    state = run_preset("picard", overrides={"out": out_dir})
    summary = state["outcome"].summary
    assert state["failed"] == []
    assert summary["bound_value"] <= 0.5 + 1e-9
    assert summary["etd_mismatch"] >= 0.0
    assert summary["scan"]


@pytest.mark.slow
def test_energy_balance_preset(out_dir):
    state = run_preset("energy_balance", overrides={"out": out_dir})
    assert state["failed"] == []
    assert len([k for k in state["outcome"].summary if k.startswith("K_dt")]) == 3
