import csv
import json

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from tile360 import verify
from tile360.channel import sample_block
from tile360.cli import EXIT_INVALID, EXIT_OK, EXIT_VERIFY, main
from tile360.config import RunConfig, dump_config, load_config, preset
from tile360.sim import gop_users, trace_for
from tile360.solver_mu import linearize_L
from tile360.solver_su import plan_gop_su


def _write_config(path, **data):
    path.write_text(yaml.safe_dump({"preset": "desk", **data}))
    return str(path)


@pytest.fixture
def toy(tmp_path):
    return _write_config(tmp_path / "toy.yaml", gops=3)


# --- configuration ----------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = preset("desk", case="ip", epsilon=0.2, channel={"antennas": 2}, baselines=["bier"])
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    assert load_config(path) == cfg


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["pp", "ip", "up"]), st.integers(1, 3), st.integers(1, 20), st.integers(0, 99))
def test_config_round_trip_property(case, users, slots, seed):
    cfg = preset("desk", scenario="multi", case=case, users=users, seed=seed, timing={"slots": slots})
    assert RunConfig.model_validate(yaml.safe_load(dump_config(cfg))) == cfg


def test_fullscale_preset_link_budget():
    cfg = preset("fullscale")
    assert (cfg.channel.subcarriers, cfg.channel.bandwidth, cfg.channel.noise) == (128, 39e3, 1e-9)
    with pytest.raises(ValueError):
        preset("nope")


# --- solve ----------------------------------------------------------------------------


def test_solve_writes_library_objective(toy, tmp_path, capsys):
    assert main(["solve", "--config", toy, "--case", "pp", "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "plan_pp.json").read_text())
    cfg = load_config(toy)
    model = cfg.streaming_model()
    users = gop_users(cfg, model, trace_for(cfg, cfg.seed), 0)
    plan = plan_gop_su(users.cases[0], model, users.fov_sets[0],
                       sample_block(cfg.seed, 0, cfg.channel_params()), cfg.channel.power)
    assert data["objective"] == plan.objective
    assert f"{plan.objective:.10g}" in capsys.readouterr().out


def test_malformed_config_names_the_field(tmp_path, capsys):
    bad = _write_config(tmp_path / "bad.yaml", channel={"antennas": 0})
    assert main(["solve", "--config", bad]) == EXIT_INVALID
    assert "antennas" in capsys.readouterr().err
    unknown = _write_config(tmp_path / "typo.yaml", gopz=3)
    assert main(["solve", "--config", unknown]) == EXIT_INVALID
    assert "gopz" in capsys.readouterr().err


def test_missing_config_file_is_invalid(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "absent.yaml")]) == EXIT_INVALID


def test_solve_all_cases_ordered(toy, tmp_path):
    assert main(["solve", "--config", toy, "--case", "all", "--out", str(tmp_path)]) == EXIT_OK
    vals = [json.loads((tmp_path / f"plan_{c}.json").read_text())["objective"] for c in ("pp", "ip", "up")]
    assert vals[0] >= vals[1] - 1e-8 and vals[1] >= vals[2] - 1e-8


# --- simulate -------------------------------------------------------------------------


def test_simulate_is_deterministic(toy, tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--config", toy, "--seed", "7", "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("report.json", "metrics.csv", "cdf_utility.csv", "cdf_variation.csv", "config.yaml"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_baselines_and_row_count(toy, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", toy, "--baselines", "equal_power,bier", "--out", str(out)]) == EXIT_OK
    for sub in (out, out / "baseline_equal_power", out / "baseline_bier"):
        with open(sub / "metrics.csv") as fh:
            assert len(list(csv.reader(fh))) - 1 == 3 * 1


def test_simulate_multi_user_row_count(tmp_path):
    cfg = _write_config(tmp_path / "mu.yaml", scenario="multi", users=2, gops=3,
                        channel={"antennas": 2, "subcarriers": 2}, timing={"slots": 2},
                        solver={"multi_start": 1})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "mu")]) == EXIT_OK
    with open(tmp_path / "mu" / "metrics.csv") as fh:
        assert len(list(csv.reader(fh))) - 1 == 3 * 2


def test_simulate_rejects_mismatched_baseline(toy, tmp_path):
    assert main(["simulate", "--config", toy, "--baselines", "sdma", "--out", str(tmp_path)]) == EXIT_INVALID


def test_unknown_baseline_is_a_usage_error(toy):
    with pytest.raises(SystemExit):
        main(["simulate", "--config", toy, "--baselines", "nope"])


# --- verify and channel dump ------------------------------------------------------------


def test_verify_fast_passes(capsys):
    assert main(["verify", "fast"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "channel_covariance" not in out


def test_sign_flipped_linearization_fails_majorization():
    def flipped(h, wa, ua, noise=1.0):
        # sign error on the u term of the expansion
        lin = linearize_L(h, wa, ua, noise)
        anchor = float(np.sum(np.abs(wa.conj() @ h) ** 2)) + noise
        return lambda w, u: lin(w, u) - 2.0 * anchor * u / ua ** 2

    assert verify.check_majorization(points=50, instances=2).passed
    assert not verify.check_majorization(points=50, instances=2, common=flipped).passed


def test_verify_exit_code_on_failure(monkeypatch):
    bad = verify.CheckResult("forced", 1.0, 0.0)
    monkeypatch.setattr("tile360.cli.run_suite", lambda level, seed: [bad])
    assert main(["verify"]) == EXIT_VERIFY


def test_full_suite_includes_covariance(monkeypatch):
    # composition only: the expensive checks are stubbed
    for name in ("check_waterfill", "check_mrt", "check_inner_lp", "check_dual", "check_ordering",
                 "check_majorization", "check_cccp"):
        monkeypatch.setattr(verify, name, lambda *a, _n=name, **k: verify.CheckResult(_n, 0.0, 1.0))
    names = [r.name for r in verify.run_suite("full")]
    assert "channel_covariance" in names
    assert "channel_covariance" not in [r.name for r in verify.run_suite("fast")]
    assert verify.check_covariance(8000).passed


def test_channel_dump(tmp_path):
    assert main(["channel-dump", "--slots", "2", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "channel.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "k", "n", "m", "real", "imag"]
    assert len(rows) - 1 == 2 * 1 * 8 * 4
    blk = sample_block(3, 1, preset("desk").channel_params())
    t, k, n, m = (int(v) for v in rows[-1][:4])
    assert t == 1 and complex(float(rows[-1][4]), float(rows[-1][5])) == blk.h[k, n, m]


def test_negative_seed_rejected():
    with pytest.raises(SystemExit):
        main(["solve", "--seed", "-1"])
