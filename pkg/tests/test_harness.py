import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from lcqkd.cli import main
from lcqkd.harness import (CLAIMS, ExperimentConfig, StatReport, compare, exact_row,
                           load_config, load_reports, run_experiment, run_session)
from lcqkd.protocol import EveStrategy, ProtocolConfig, read_transcript

GOLDEN = Path(__file__).parent / "golden"
sys.path.insert(0, str(GOLDEN))
import regenerate  # noqa: E402


def files(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())}


# ---------------------------------------------------------------- compare

def test_compare_examples():
    assert compare("eve_joint_success", 0.25, 0.2503, 100_000).passed
    bad = compare("eve_joint_success", 0.25, 0.30, 100_000)
    assert not bad.passed
    assert (0.30 - 0.25) / bad.stderr == pytest.approx(36.5, abs=0.1)
    assert compare("hash_survival", 2 ** -5, 0.030, 100_000, "upper").passed
    assert not compare("hash_survival", 2 ** -5, 0.040, 100_000, "upper").passed
    # one-sided: far below the bound still passes
    assert compare("hash_survival", 2 ** -5, 0.0, 100_000, "upper").passed
    with pytest.raises(ValueError):
        compare("x", 0.5, 0.5, 29)
    with pytest.raises(ValueError):
        compare("x", 0.5, 0.5, 100, "sideways")


def test_compare_stderr_is_binomial():
    row = compare("acceptance_rate", 0.2, 0.2, 400)
    assert row.stderr == pytest.approx(math.sqrt(0.2 * 0.8 / 400))


def test_exact_row_kinds():
    assert exact_row("a", 1.0, 1.0, 0.0).passed
    assert not exact_row("a", 1.0, 1.1, 0.05).passed
    assert exact_row("a", 1e-5, 5e-6, 0.0, kind="bound").passed
    assert not exact_row("a", 1e-5, 1.5e-4, 0.0, kind="bound").passed
    assert exact_row("a", 3.0, 3.0, 0.0, kind="report").passed


# ---------------------------------------------------------------- config

def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(kind="bogus")
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_mapping({"trails": 5})
    path = tmp_path / "c.toml"
    path.write_text('kind = "round_stats"\nstrategy = "blind_guess"\ntrials = 50\ntau_d = 24.0\n')
    cfg = load_config(path, seed=9, trials=None)
    assert (cfg.strategy, cfg.trials, cfg.seed, cfg.tau_d) == ("blind_guess", 50, 9, 24.0)
    assert cfg.protocol().geometry.tau_d == 24.0
    assert load_config(path, trials=7).trials == 7


def test_claim_ids_documented(tmp_path):
    for kind in regenerate.SMALL:
        cfg = regenerate.produce(tmp_path / kind, kind)
        rep = json.loads((tmp_path / kind / f"{kind}_report.json").read_text())
        assert rep["seed"] == cfg.seed
        for row in rep["rows"]:
            assert row["claim"] in CLAIMS


# --------------------------------------------------------- golden files

@pytest.mark.parametrize("kind", list(regenerate.SMALL))
def test_output_schema_matches_golden(tmp_path, kind):
    regenerate.produce(tmp_path, kind)
    expected = json.loads((GOLDEN / f"schema_{kind}.json").read_text())
    assert regenerate.schema(tmp_path) == expected


def test_curve_csv_matches_golden(tmp_path):
    regenerate.produce(tmp_path, "distinguishability_curve")
    got = (tmp_path / "curve.csv").read_text().splitlines()
    want = (GOLDEN / "curve_small.csv").read_text().splitlines()
    assert got[:2] == want[:2]
    assert got[1] == "window_length,probability"
    assert got[0].startswith("# seed=2024 ")
    a = np.array([[float(x) for x in line.split(",")] for line in got[2:]])
    b = np.array([[float(x) for x in line.split(",")] for line in want[2:]])
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_seed_recorded_everywhere(tmp_path):
    for kind in regenerate.SMALL:
        regenerate.produce(tmp_path / kind, kind)
        for path in (tmp_path / kind).iterdir():
            text = path.read_text()
            if path.suffix == ".json":
                assert json.loads(text)["seed"] == 2024
            elif path.suffix == ".jsonl":
                assert json.loads(text.splitlines()[0])["_meta"]["seed"] == 2024
            else:
                assert text.startswith("# seed=2024")


def test_transcript_readable(tmp_path):
    regenerate.produce(tmp_path, "round_stats")
    recs = read_transcript(tmp_path / "round_stats_transcript.jsonl")
    assert len(recs) == 40 and [r.round for r in recs] == list(range(40))


# ------------------------------------------------------- reproducibility

@pytest.mark.parametrize("kind", list(regenerate.SMALL))
def test_byte_identical_reruns(tmp_path, kind):
    regenerate.produce(tmp_path / "a", kind)
    regenerate.produce(tmp_path / "b", kind)
    assert files(tmp_path / "a") == files(tmp_path / "b")


def test_serial_and_parallel_identical(tmp_path):
    base = dict(kind="full_session", seed=77, trials=900, strategy="intercept_first_half", k=2, m=2)
    run_experiment(ExperimentConfig(out=str(tmp_path / "s"), workers=1, **base))
    run_experiment(ExperimentConfig(out=str(tmp_path / "p"), workers=3, **base))
    assert files(tmp_path / "s") == files(tmp_path / "p")
    cfg, eve = ProtocolConfig(), EveStrategy("blind_guess")
    a = run_session(cfg, eve, 700, 5, workers=1)
    b = run_session(cfg, eve, 700, 5, workers=2, chunk=97)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_different_seeds_differ(tmp_path):
    run_experiment(ExperimentConfig(seed=1, trials=50, out=str(tmp_path / "a")))
    run_experiment(ExperimentConfig(seed=2, trials=50, out=str(tmp_path / "b")))
    assert files(tmp_path / "a") != files(tmp_path / "b")


# ------------------------------------------------------------------ CLI

def test_cli_simulate_and_report(tmp_path):
    runner = CliRunner()
    out = str(tmp_path)
    res = runner.invoke(main, ["simulate", "--trials", "300", "--seed", "3", "--out", out,
                               "--strategy", "full_capture_delay"])
    assert res.exit_code == 0, res.output
    assert "PASS delay_rejection" in res.output
    res = runner.invoke(main, ["curve", "--out", out, "--seed", "3"])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "curve.csv").exists()
    res = runner.invoke(main, ["report", "--out", out])
    assert res.exit_code == 0
    assert "[distinguishability_curve]" in res.output and "[round_stats]" in res.output


def test_cli_exit_code_reflects_failures(tmp_path):
    cfg = tmp_path / "r.toml"
    cfg.write_text("noise_p = 0.1\nk = 5\nm = 20\nblock_trials = 0\nhash_trials = 1000\n")
    runner = CliRunner()
    res = runner.invoke(main, ["reconcile", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 1
    assert "FAIL block_residual_le_pk" in res.output
    res = runner.invoke(main, ["report", "--out", str(tmp_path / "o")])
    assert res.exit_code == 1
    cfg.write_text("noise_p = 0.002\nk = 5\nm = 20\nblock_trials = 0\nhash_trials = 1000\n")
    res = runner.invoke(main, ["reconcile", "--config", str(cfg), "--out", str(tmp_path / "o2")])
    assert res.exit_code == 0, res.output


def test_cli_usage_errors(tmp_path):
    runner = CliRunner()
    cfg = tmp_path / "bad.toml"
    cfg.write_text("nonsense = 1\n")
    assert runner.invoke(main, ["simulate", "--config", str(cfg)]).exit_code == 2
    assert runner.invoke(main, ["simulate", "--strategy", "teleport"]).exit_code == 2
    assert runner.invoke(main, ["report", "--out", str(tmp_path)]).exit_code == 2


def test_load_reports_roundtrip(tmp_path):
    rep = run_experiment(ExperimentConfig(trials=60, out=str(tmp_path)))
    (back,) = load_reports(tmp_path)
    assert isinstance(back, StatReport)
    assert back.to_dict() == rep.to_dict()


# --------------------------------------------------------- seed stability

STABILITY = [
    dict(kind="round_stats", strategy="absent"),
    dict(kind="round_stats", strategy="blind_guess"),
    dict(kind="round_stats", strategy="intercept_first_half"),
    dict(kind="round_stats", strategy="full_capture_delay", trials=10_000),
    dict(kind="distinguishability_curve"),
    dict(kind="reconciliation", noise_p=0.1),
]


@pytest.mark.slow
@pytest.mark.parametrize("params", STABILITY, ids=lambda p: p.get("strategy", p["kind"]))
def test_claims_stable_across_seeds(tmp_path, params):
    verdicts = []
    for seed in range(10):
        rep = run_experiment(ExperimentConfig(seed=seed, out=str(tmp_path / str(seed)), **params))
        verdicts.append({r.claim: r.passed for r in rep.rows})
    for claim in verdicts[0]:
        outcomes = {v[claim] for v in verdicts}
        assert len(outcomes) == 1, f"{claim} flips across seeds: {[v[claim] for v in verdicts]}"


@pytest.mark.parametrize("path", sorted((Path(__file__).parents[1] / "configs").glob("*.toml")),
                         ids=lambda p: p.name)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    cfg.protocol()
