import json

import pytest

from mcasim import __version__
from mcasim.cli import config_hash, load_scenario, main
from mcasim.config import ConfigError, parse_config
from mcasim.rng import derive_run_seed

SMALL = {
    "dupstat": {"packets": 2000},
    "ccselect": {"n_ues": 20},
    "mecassoc": {"n_ues": 40, "drops": 1},
    "compcoord": {"episodes": 3000},
}


def write_config(tmp_path, mech, runs=1, seed=42, **extra):
    block = dict(SMALL[mech], **extra)
    path = tmp_path / f"{mech}.json"
    path.write_text(json.dumps({"seed": seed, "runs": runs, mech: block}))
    return str(path)


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out), "--quiet", "--jobs", "1"])
    return code, out


@pytest.mark.parametrize("mech", sorted(SMALL))
def test_outputs_are_byte_identical_on_replay(tmp_path, mech):
    cfg = write_config(tmp_path, mech, runs=2)
    c1, a = run(tmp_path, "a", mech, "--config", cfg)
    c2, b = run(tmp_path, "b", mech, "--config", cfg)
    assert c1 == c2 == 0
    csv = f"{mech}_results.csv"
    assert (a / csv).read_bytes() == (b / csv).read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    manifest = json.loads((a / "manifest.json").read_text())
    assert summary["manifest_hash"] == manifest["config_hash"]
    assert manifest["version"] == __version__
    assert manifest["run_seeds"] == [derive_run_seed(42, i) for i in range(2)]


def test_extra_run_leaves_earlier_runs_unchanged(tmp_path):
    _, a = run(tmp_path, "a", "compcoord", "--config", write_config(tmp_path, "compcoord"), "--runs", "3")
    _, b = run(tmp_path, "b", "compcoord", "--config", write_config(tmp_path, "compcoord"), "--runs", "4")
    rows_a = [r for r in (a / "compcoord_results.csv").read_text().splitlines()[1:] if not r.startswith("all")]
    rows_b = [r for r in (b / "compcoord_results.csv").read_text().splitlines()[1:] if not r.startswith("all")]
    assert rows_b[: len(rows_a)] == rows_a
    assert len(rows_b) > len(rows_a)


def test_parallel_and_serial_runs_agree(tmp_path):
    cfg = write_config(tmp_path, "compcoord", runs=3)
    assert main(["compcoord", "--config", cfg, "--out", str(tmp_path / "s"), "--quiet", "--jobs", "1"]) == 0
    assert main(["compcoord", "--config", cfg, "--out", str(tmp_path / "p"), "--quiet", "--jobs", "2"]) == 0
    name = "compcoord_results.csv"
    assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_missing_config_is_usage_error(capsys):
    assert main(["dupstat"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_and_flag(capsys):
    assert main(["teleport", "--config", "defaults"]) == 2
    assert main(["dupstat", "--config", "defaults", "--bogus"]) == 2
    assert main([]) == 2


def test_config_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"ccselect": {"theta": 1.5}}))
    assert main(["ccselect", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "theta" in capsys.readouterr().err
    bad.write_text(json.dumps({"mecassoc": {"ul_bandwidth_hz": -1}}))
    assert main(["mecassoc", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "ul_bandwidth_hz" in capsys.readouterr().err
    bad.write_text(json.dumps({"dupstat": {"pakets": 10}}))
    assert main(["dupstat", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "pakets" in capsys.readouterr().err
    bad.write_text('{"dupstat": {\n  "packets": }')
    assert main(["dupstat", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["dupstat", "--config", str(tmp_path / "missing.json")]) == 2


def test_runtime_error_exits_one(tmp_path, monkeypatch, capsys):
    import mcasim.cli as cli

    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "run_replications", boom)
    assert main(["compcoord", "--config", "defaults", "--out", str(tmp_path / "o"), "--quiet"]) == 1
    assert "disk on fire" in capsys.readouterr().err
    # the manifest is written before the simulation starts
    assert (tmp_path / "o" / "manifest.json").exists()


def test_out_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MCASIM_OUT", str(tmp_path / "env"))
    assert main(["compcoord", "--config", write_config(tmp_path, "compcoord"), "--quiet", "--jobs", "1"]) == 0
    assert (tmp_path / "env" / "compcoord_results.csv").exists()


def test_defaults_echo_lists_every_defaulted_field():
    scen = load_scenario("ccselect", "defaults")
    echo = scen.echo()["ccselect"]
    assert set(scen.defaulted) == {f"ccselect.{k}" for k in echo}
    partial = parse_config(json.dumps({"ccselect": {"theta": 0.6}}), "ccselect")
    assert "ccselect.theta" not in partial.defaulted
    assert len(partial.defaulted) == len(echo) - 1


@pytest.mark.parametrize("mech", sorted(SMALL))
def test_echo_round_trips(mech, tmp_path):
    scen = load_scenario(mech, write_config(tmp_path, mech))
    again = parse_config(json.dumps(scen.echo()), mech)
    assert again.params == scen.params
    assert config_hash(again) == config_hash(scen)


def test_samples_override(tmp_path):
    scen = load_scenario("dupstat", "defaults", samples=123)
    assert scen.params.packets == 123
    with pytest.raises(ConfigError):
        load_scenario("dupstat", "defaults", samples=0)


def test_runs_flag_sets_seed_list(tmp_path):
    code, out = run(tmp_path, "r", "ccselect", "--config", write_config(tmp_path, "ccselect"), "--runs", "8")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["run_seeds"] == [derive_run_seed(42, i) for i in range(8)]
    assert len(summary["runs"]) == 8
    assert "gain" in summary["merged"]
