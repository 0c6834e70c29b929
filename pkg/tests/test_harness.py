import json
from pathlib import Path

import pytest
import yaml

from dntml.errors import ConfigError
from dntml.harness import (METRICS_HEADER, OUTPUT_ENV, canonical, config_hash, dump_yaml,
                           load_config, parse_axis, parse_config, read_metrics, replay, run,
                           sweep, sweep_cells, with_override)
from dntml.harness.cli import main
from dntml.netmodel import NetConfig, generate_trace

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = sorted((ROOT / "configs").glob("*.yaml"))

TINY_CACHING = {"pipeline": "caching", "seed": 1, "ablation": "full",
                "params": {"net": {"ticks": 60, "catalog_size": 40, "cache_capacity": 20},
                           "dqn": {"learn_start": 50, "eps_decay_steps": 200, "hidden": [16]},
                           "forecaster": {"history_ticks": 40, "epochs": 1}}}
TINY_FRL = {"pipeline": "frl", "seed": 0,
            "params": {"agents": 2, "adversary_fraction": 0.0, "attack": {"kind": "none"},
                       "rounds": 1, "heldout": 5, "probe": 3,
                       "hyper": {"episodes": 4, "parallel": 4, "horizon": 20}}}


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "runs"))


def write(tmp_path, data, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


# ------------------------------------------------------------------ configs

@pytest.mark.parametrize("path", CONFIGS, ids=[p.name for p in CONFIGS])
def test_shipped_configs_roundtrip(path, tmp_path):
    exp = load_config(path)
    dump_yaml(exp, tmp_path / "again.yaml")
    again = load_config(tmp_path / "again.yaml")
    assert canonical(again) == canonical(exp)
    assert config_hash(again) == config_hash(exp)


@pytest.mark.parametrize("bad, where", [
    ({"pipeline": "caching", "seed": 0, "params": {"net": {"zipf_exp": 1}}}, "params.net.zipf_exp"),
    ({"pipeline": "caching", "seed": 0, "params": {"bogus": 1}}, "params.bogus"),
    ({"pipeline": "caching", "seed": 0, "colour": "red"}, "colour"),
    ({"pipeline": "frl", "seed": 0, "params": {"rule": {"kind": "mean", "kk": 2}}}, "params.rule.kk"),
    ({"pipeline": "frl", "seed": 0, "ablation": "full"}, "ablation"),
    ({"pipeline": "caching", "seed": 0, "params": {"seed": 3}}, "params.seed"),
    ({"pipeline": "caching", "seed": 0, "params": {"net": {"ticks": "many"}}}, "params.net.ticks"),
    ({"pipeline": "caching"}, "seed"),
])
def test_strict_keys_report_path(bad, where):
    with pytest.raises(ConfigError) as e:
        parse_config(bad)
    assert e.value.path == where


def test_semantic_errors_are_config_errors():
    with pytest.raises(ConfigError):
        parse_config({"pipeline": "frl", "seed": 0, "params": {"adversary_fraction": 0.6}})


def test_hash_ignores_output_dir_and_expands_defaults():
    a = parse_config({"pipeline": "fedtwin", "seed": 0})
    b = parse_config({"pipeline": "fedtwin", "seed": 0, "output_dir": "/x",
                      "params": {"rounds": canonical(a)["params"]["rounds"]}})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(with_override(a, "seed", 1))


def test_override_paths():
    exp = parse_config(TINY_CACHING)
    assert canonical(with_override(exp, "net.zipf_exponent", 1.2))["params"]["net"]["zipf_exponent"] == 1.2
    assert with_override(exp, "ablation", "baseline").ablation == "baseline"
    with pytest.raises(ConfigError):
        with_override(exp, "net.nope", 1)


def test_parse_axis():
    assert parse_axis("rule.kind=mean,coordinate_median") == ("rule.kind", ["mean", "coordinate_median"])
    assert parse_axis("seed=1,2") == ("seed", [1, 2])
    with pytest.raises(ValueError):
        parse_axis("nonsense")


# -------------------------------------------------------------------- runs

def test_run_writes_artifacts(tmp_path):
    s = run(parse_config(TINY_CACHING))
    assert s.status == "ok"
    out = Path(s.artifacts["metrics"]).parent
    for name in ("metrics.csv", "episode.csv", "manifest.json", "summary.json"):
        assert (out / name).exists()
    assert (out / "metrics.csv").read_text().splitlines()[0] == ",".join(METRICS_HEADER)
    m = read_metrics(out / "metrics.csv")
    for k in ("hit_rate", "intervention_rate", "max_bs_load", "min_bs_load"):
        assert 0.0 <= m[k] <= 1.0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == s.config_hash


@pytest.mark.parametrize("data", [TINY_CACHING, TINY_FRL,
                                  {"pipeline": "fedtwin", "seed": 2,
                                   "params": {"n_groups": 2, "per_group": 2, "rounds": 3, "hidden": 4,
                                              "embed": 2, "catalog": 10, "requests_per_bs": 60,
                                              "heldout_per_bs": 30}}],
                         ids=["caching", "frl", "fedtwin"])
def test_metrics_byte_identical(data, tmp_path):
    exp = parse_config(data)
    a = run(exp.model_copy(update={"output_dir": str(tmp_path / "a")}))
    b = run(exp.model_copy(update={"output_dir": str(tmp_path / "b")}))
    assert a.status == b.status == "ok"
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    assert (tmp_path / "a/metrics.csv").read_bytes() != b""


def test_replay_uses_recorded_trace(tmp_path):
    exp = parse_config(TINY_CACHING)
    trace = generate_trace(NetConfig(catalog_size=40, ticks=60, cache_capacity=20),
                           __import__("numpy").random.default_rng(9))
    trace.to_csv(tmp_path / "t.csv")
    s = replay(tmp_path / "t.csv", exp)
    assert s.status == "ok" and "-replay-" in s.artifacts["metrics"]
    with pytest.raises(ConfigError):
        replay(tmp_path / "t.csv", parse_config(TINY_FRL))


# ------------------------------------------------------------------- sweep

def test_sweep_cells_order_and_empty_axis():
    base = parse_config(TINY_FRL)
    cells = sweep_cells(base, [("rule.kind", ["mean", "coordinate_median"])], seeds=2)
    assert [(c, e.seed) for c, _, e in cells] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert sweep_cells(base, [("rule.kind", [])]) == []
    assert len(sweep_cells(base, [], seeds=3)) == 3


def test_sweep_records_failures_and_continues(tmp_path):
    base = parse_config(TINY_FRL)
    # beta 0.45 with two agents cannot trim: a runtime failure in that cell only
    axes = [("rule", [{"kind": "mean"}, {"kind": "trimmed_mean", "beta": 0.45}])]
    res = sweep(base, axes, seeds=1, out_dir=tmp_path / "sw")
    assert [r.status for r in res] == ["ok", "failed"]
    assert "InvalidParameterError" in res[1].error
    rows = (tmp_path / "sw/aggregate.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].startswith("rule,runs,failed")
    heat = (tmp_path / "sw/heatmap.csv").read_text().splitlines()
    assert heat[0] == "attack,rule,agents,no_collision_rate" and len(heat) == 2


def test_sweep_parallel_matches_sequential(tmp_path):
    base = parse_config(TINY_FRL)
    axes = [("rule.kind", ["mean", "coordinate_median"])]
    seq = sweep(base, axes, out_dir=tmp_path / "s1")
    par = sweep(base, axes, workers=2, out_dir=tmp_path / "s2")
    assert [s.metrics for s in seq] == [s.metrics for s in par]


# --------------------------------------------------------------------- cli

def test_cli_exit_codes(tmp_path, capsys):
    good = write(tmp_path, TINY_FRL, "good.yaml")
    assert main(["validate", str(good)]) == 0
    assert main(["run", str(good)]) == 0
    bad = write(tmp_path, {"pipeline": "frl", "seed": 0, "params": {"nope": 1}}, "bad.yaml")
    assert main(["validate", str(bad)]) == 1
    assert main(["run", str(bad)]) == 1
    assert "params.nope" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == 1
    broken = dict(TINY_FRL, params=dict(TINY_FRL["params"], rule={"kind": "trimmed_mean", "beta": 0.45}))
    assert main(["run", str(write(tmp_path, broken, "broken.yaml"))]) == 2
    assert main(["sweep", str(good), "--axis", "bad-axis"]) == 1
    assert main(["sweep", str(good), "--axis", "rule.kind=mean", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o/aggregate.csv").exists()
