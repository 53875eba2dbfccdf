import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from stratcomm import cli
from stratcomm.best_response import decoder_slack, encoder_slack
from stratcomm.channel import CapacityError
from stratcomm.sim import EnsembleSimulator, design_scheme, run_ensemble

FIXTURES = Path(__file__).parent / "fixtures"
BINARY = str(FIXTURES / "binary_bsc.json")
ALIGNED = str(FIXTURES / "aligned_bsc.json")
MISMATCHED = str(FIXTURES / "mismatched_bsc.json")
USELESS = str(FIXTURES / "useless.json")
IDENTITY = str(FIXTURES / "identity.json")
MALFORMED = sorted((FIXTURES / "malformed").glob("*.json"))
NUMERIC = {"d_e", "d_d", "value", "lower", "upper", "encoder_slack", "decoder_slack", "capacity", "eps", "x",
           "y", "induced", "estimate", "se", "target", "residual", "grid_res", "refine_depth", "n", "rate",
           "trials", "seed", "count", "iterations"}


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        for k, v in r.items():
            if k in NUMERIC and v != "":
                assert math.isfinite(float(v)), (path, k, v)
        if r.get("lower", "") != "" and r.get("value", r.get("y", "")) != "":
            val = float(r.get("value") or r.get("y"))
            assert float(r["lower"]) <= val <= float(r["upper"]), (path, r)
    return rows


def run(capsys, *argv) -> tuple[int, str, str]:
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def bsc_capacity(p):
    return 1.0 - (0.0 if p in (0, 1) else -(p * math.log2(p) + (1 - p) * math.log2(1 - p)))


# -- capacity and validation ----------------------------------------------------------------

def test_capacity_bsc(tmp_path, capsys):
    code, out, _ = run(capsys, "capacity", BINARY, "--out", tmp_path)
    assert code == 0 and "0.5310" in out and "optimal input" in out
    (row,) = read_csv(tmp_path / "capacity.csv")
    assert abs(float(row["capacity"]) - bsc_capacity(0.1)) < 1e-6
    assert json.loads(row["optimal_input"]) == pytest.approx([0.5, 0.5], abs=1e-9)
    assert (tmp_path / "manifest.json").exists()


def test_capacity_identity(tmp_path, capsys):
    code, _, _ = run(capsys, "capacity", IDENTITY, "--out", tmp_path)
    (row,) = read_csv(tmp_path / "capacity.csv")
    assert code == 0 and abs(float(row["capacity"]) - math.log2(3)) < 1e-6


def test_row_sum_error_names_row(tmp_path, capsys):
    code, _, err = run(capsys, "capacity", FIXTURES / "malformed" / "channel__row_sum.json", "--out", tmp_path)
    assert code == 2 and "'channel'" in err and "row 1" in err and "0.9" in err
    assert not (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize("path", MALFORMED, ids=lambda p: p.stem)
def test_malformed_fixture_rejected_with_field(path, tmp_path, capsys):
    field = path.stem.split("__")[0]
    code, _, err = run(capsys, "capacity", path, "--out", tmp_path)
    assert code == 2
    assert f"field {field!r}" in err


def test_unreadable_and_non_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "capacity", bad, "--out", tmp_path)[0] == 2
    assert run(capsys, "capacity", tmp_path / "absent.json", "--out", tmp_path)[0] == 2


def test_instance_round_trip():
    inst, doc = cli.load_instance(MISMATCHED)
    again = cli.parse_instance(cli.instance_document(inst))
    for attr in ("prior", "d_e", "d_d"):
        np.testing.assert_array_equal(getattr(again, attr), getattr(inst, attr))
    np.testing.assert_array_equal(again.channel.rows, inst.channel.rows)


def test_nonconvergence_exit_code(tmp_path, capsys, monkeypatch):
    def fail(_):
        raise CapacityError(0.5, 0.6, 10)

    monkeypatch.setattr(cli, "capacity", fail)
    code, _, err = run(capsys, "capacity", BINARY, "--out", tmp_path)
    assert code == 3 and "converge" in err


def test_resource_cap_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "scenario", BINARY, "--scenario", "nash", "--grid-res", 60, "--out", tmp_path)
    assert code == 4 and "cells" in err


@pytest.mark.parametrize("argv", [
    ["scenario", BINARY, "--scenario", "persuasion", "--grid-res", "0"],
    ["scenario", BINARY, "--scenario", "persuasion", "--eps", "-1"],
    ["simulate", BINARY, "--mode", "honest", "--n", "10"],
    ["simulate", BINARY, "--mode", "lemma2", "--n", "10"],
    ["sweep", IDENTITY, "--parameter", "channel-noise", "--values", "0.1"],
    ["sweep", BINARY, "--parameter", "capacity", "--values", "1.5"],
])
def test_bad_parameters_exit_2(argv, tmp_path, capsys):
    assert run(capsys, *argv, "--out", tmp_path)[0] == 2


def test_flags_override_instance_block(tmp_path, capsys):
    run(capsys, "scenario", BINARY, "--scenario", "persuasion", "--grid-res", 12, "--out", tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["parameters"]["grid_res"] == 12
    assert manifest["parameters"]["refine_depth"] == 1  # from the instance's solver block
    (row,) = read_csv(tmp_path / "scenario_persuasion.csv")
    assert row["grid_res"] == "12"


# -- scenario ---------------------------------------------------------------------------------------

def test_cooperative_zero_capacity_product_witnesses(tmp_path, capsys):
    assert run(capsys, "scenario", USELESS, "--scenario", "cooperative", "--out", tmp_path)[0] == 0
    rows = read_csv(tmp_path / "scenario_cooperative.csv")
    env = [r for r in rows if r["kind"] == "envelope"]
    assert env
    for r in env:
        k = np.array(json.loads(r["witness"])["kernel_v_given_u"])
        assert np.allclose(k, k[0], atol=1e-12)


def test_aligned_persuasion_matches_cooperative_min(tmp_path, capsys):
    run(capsys, "scenario", ALIGNED, "--scenario", "persuasion", "--out", tmp_path)
    run(capsys, "scenario", ALIGNED, "--scenario", "cooperative", "--out", tmp_path)
    (p,) = read_csv(tmp_path / "scenario_persuasion.csv")
    coop = {r["kind"]: r for r in read_csv(tmp_path / "scenario_cooperative.csv")}
    width = float(p["upper"]) - float(p["lower"])
    assert abs(float(p["value"]) - float(coop["min_d_e"]["value"])) <= width + 1e-12


def test_nash_rows_reverify(tmp_path, capsys):
    inst, _ = cli.load_instance(BINARY)
    run(capsys, "scenario", BINARY, "--scenario", "nash", "--grid-res", 10, "--eps", 0.01, "--out", tmp_path)
    rows = read_csv(tmp_path / "scenario_nash.csv")
    assert rows
    for r in rows:
        assert float(r["encoder_slack"]) <= 0.01 and float(r["decoder_slack"]) <= 0.01
        wit = json.loads(r["witness"])
        q_uw = inst.prior[:, None] * np.array(wit["w_given_u"])
        v_given_w = np.array(wit["v_given_w"])
        p_w = q_uw.sum(axis=0)
        assert decoder_slack(q_uw, v_given_w, inst.d_d) <= 0.01 + 1e-9
        assert encoder_slack((p_w, v_given_w), q_uw, inst.d_e, inst.capacity) <= 0.01 + 1e-9


def test_mechanism_row(tmp_path, capsys):
    assert run(capsys, "scenario", MISMATCHED, "--scenario", "mechanism", "--out", tmp_path)[0] == 0
    (row,) = read_csv(tmp_path / "scenario_mechanism.csv")
    assert row["value"] == row["d_d"]
    assert set(json.loads(row["witness"])) == {"q_uw", "v_given_w"}


# -- sweep -------------------------------------------------------------------------------------------

def test_bsc_noise_sweep(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", MISMATCHED, "--parameter", "channel-noise", "--values", "0,0.1,0.2,0.3,0.5",
                     "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 5 and all(r["scenario"] == "persuasion" for r in rows)
    caps = [float(r["capacity"]) for r in rows]
    assert all(a >= b for a, b in zip(caps, caps[1:]))
    for r in rows:
        assert abs(float(r["capacity"]) - bsc_capacity(float(r["x"]))) < 1e-6
    # value nonincreasing in capacity, within the bracket widths
    by_cap = sorted(rows, key=lambda r: float(r["capacity"]))
    for lo, hi in zip(by_cap, by_cap[1:]):
        assert float(hi["value"]) <= float(lo["value"]) + (float(hi["upper"]) - float(hi["lower"]))
    plot = read_csv(tmp_path / "sweep_plot.csv")
    assert list(plot[0]) == ["scenario", "x", "y", "lower", "upper"] and len(plot) == 5


def test_capacity_sweep_hits_targets(tmp_path, capsys):
    run(capsys, "sweep", MISMATCHED, "--parameter", "capacity", "--values", "0,0.25,0.5,1",
        "--scenarios", "persuasion,cooperative", "--out", tmp_path)
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 8
    for r in rows:
        assert abs(float(r["capacity"]) - float(r["x"])) < 1e-6


def test_eps_sweep_count_nondecreasing(tmp_path, capsys):
    run(capsys, "sweep", BINARY, "--parameter", "eps", "--values", "0,0.005,0.01,0.05", "--grid-res", 6,
        "--out", tmp_path)
    rows = read_csv(tmp_path / "sweep.csv")
    counts = [int(r["count"]) for r in rows]
    assert len(rows) == 4 and all(r["scenario"] == "nash" for r in rows)
    assert all(a <= b for a, b in zip(counts, counts[1:]))


# -- simulate ----------------------------------------------------------------------------------------

def test_finite_n_matches_persuasion_at_zero_capacity(tmp_path, capsys):
    run(capsys, "simulate", USELESS, "--mode", "finite-n", "--n", 1, "--leader", "encoder", "--out", tmp_path)
    run(capsys, "scenario", USELESS, "--scenario", "persuasion", "--out", tmp_path)
    (fin,) = read_csv(tmp_path / "simulate_finite-n.csv")
    (per,) = read_csv(tmp_path / "scenario_persuasion.csv")
    assert abs(float(fin["estimate"]) - float(per["value"])) < 1e-9


def test_finite_n_subadditivity_rows(tmp_path, capsys):
    run(capsys, "simulate", MISMATCHED, "--mode", "finite-n", "--n", "1,2", "--strategies", "deterministic",
        "--out", tmp_path)
    rows = read_csv(tmp_path / "simulate_finite-n.csv")
    sub = [r for r in rows if r["quantity"].endswith("_subadditive")]
    assert len(sub) == 2 and all(r["estimate"] == "1" for r in sub)


def test_lemma1_ladder(tmp_path, capsys):
    run(capsys, "simulate", BINARY, "--mode", "lemma1", "--n", "8,16,32", "--rate", 0.8, "--eta", 0.15,
        "--delta", 0.002, "--trials", 2000, "--out", tmp_path)
    rows = read_csv(tmp_path / "simulate_lemma1.csv")
    est = [float(r["estimate"]) for r in rows]
    exact = [float(r["target"]) for r in rows]
    se = [float(r["se"]) for r in rows]
    assert all(a > b for a, b in zip(exact, exact[1:]))
    assert all(b <= a + 2 * math.hypot(sa, sb) for a, b, sa, sb in zip(est, est[1:], se, se[1:]))


def test_lemma2_reads_joint_from_instance(tmp_path, capsys):
    doc = json.loads(Path(BINARY).read_text())
    doc["simulator"] = {"q_uw": [[0.4, 0.1], [0.1, 0.4]], "eta": 0.2, "delta": 0.25}
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(doc))
    run(capsys, "simulate", path, "--mode", "lemma2", "--n", "10,40", "--trials", 500, "--out", tmp_path)
    rows = read_csv(tmp_path / "simulate_lemma2.csv")
    exact = [float(r["target"]) for r in rows]
    assert exact[0] < exact[1]


def test_honest_mode_matches_library(tmp_path, capsys):
    run(capsys, "simulate", ALIGNED, "--mode", "honest", "--n", 40, "--rate", 0.3, "--trials", 40, "--seed", 5,
        "--out", tmp_path)
    rows = {r["quantity"]: r for r in read_csv(tmp_path / "simulate_honest.csv")}
    inst, _ = cli.load_instance(ALIGNED)
    from stratcomm.scenarios import SolverGrid
    design = design_scheme(inst, 0.3, SolverGrid(resolution=20, refine_depth=1))
    rep = run_ensemble(EnsembleSimulator(inst, design, 40), 40, 5)
    assert float(rows["d_d"]["estimate"]) == rep.summary["d_d"]
    assert float(rows["d_d"]["target"]) == rep.summary["target_d_d"]


def test_strategic_mode_never_beats_honest(tmp_path, capsys):
    run(capsys, "simulate", MISMATCHED, "--mode", "strategic", "--n", 40, "--rate", 0.3, "--trials", 30,
        "--out", tmp_path)
    rows = {r["quantity"]: r for r in read_csv(tmp_path / "simulate_strategic.csv")}
    assert float(rows["strategic_objective"]["estimate"]) <= float(rows["honest_objective"]["estimate"])
    assert float(rows["strategic_violations"]["estimate"]) == 0


# -- manifests and output ------------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["scenario", BINARY, "--scenario", "nash", "--grid-res", "8"],
    ["simulate", MISMATCHED, "--mode", "strategic", "--n", "30", "--rate", "0.3", "--trials", "24"],
    ["sweep", MISMATCHED, "--parameter", "channel-noise", "--values", "0.1,0.3", "--scenarios",
     "persuasion,mechanism,cooperative"],
], ids=["nash", "strategic", "sweep"])
def test_replay_byte_identical(argv, tmp_path, capsys):
    first = tmp_path / "first"
    assert run(capsys, *argv, "--out", first)[0] == 0
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["version"] == cli.__version__ and manifest["outputs"]
    for w in (1, 2, 8):
        out = tmp_path / f"w{w}"
        code, stdout, _ = run(capsys, "replay", first / "manifest.json", "--out", out, "--workers", w)
        assert code == 0 and "DIFFERS" not in stdout
        for o in manifest["outputs"]:
            assert (out / o["path"]).read_bytes() == (first / o["path"]).read_bytes()


def test_replay_detects_tampering(tmp_path, capsys):
    run(capsys, "capacity", BINARY, "--out", tmp_path / "a")
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    m["outputs"][0]["sha256"] = "0" * 64
    (tmp_path / "m.json").write_text(json.dumps(m))
    code, out, _ = run(capsys, "replay", tmp_path / "m.json", "--out", tmp_path / "b")
    assert code == 1 and "DIFFERS" in out


def test_no_temporary_files_left(tmp_path, capsys):
    run(capsys, "sweep", MISMATCHED, "--parameter", "channel-noise", "--values", "0.2", "--out", tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "sweep.csv", "sweep_plot.csv"]


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 2.5e17):
        assert float(cli.fmt(x)) == x
    assert cli.fmt(np.int64(3)) == "3" and cli.fmt(None) == ""
