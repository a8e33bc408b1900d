import json
from pathlib import Path

import pytest

from uavhighway.cli import main
from uavhighway.config import ConfigError, ScenarioConfig, packaged_scenario, with_overrides
from uavhighway.experiment import (
    METRIC_COLUMNS,
    SCHEMA_VERSION,
    MetricsRow,
    build_transport,
    emit_reports,
    load_episode_log,
    read_metrics_csv,
    replay_episode,
    run_experiment,
    summarize,
    sweep,
    write_metrics_csv,
)

SMALL = ScenarioConfig(episodes=3, episode_cap=10)
MOCK = packaged_scenario("paper_default").with_name("mock_t1_safe.jsonl")


def row(ep, total=1.5):
    return MetricsRow(ep, total, 1.0, total - 1.0, 10.0, 0.0, 0.25, 0.1 / 3, 2)


def test_csv_round_trip(tmp_path):
    rows = [row(0), row(1, 2.0 / 3.0), row(2, 1e-17)]
    path = tmp_path / "m.csv"
    write_metrics_csv(rows, path)
    assert len(path.read_text().splitlines()) == 4
    assert read_metrics_csv(path) == rows


def test_empty_run_writes_header_only(tmp_path):
    write_metrics_csv([], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == ",".join(METRIC_COLUMNS) + "\n"
    assert read_metrics_csv(tmp_path / "m.csv") == []


def test_read_rejects_wrong_columns(tmp_path):
    (tmp_path / "m.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_metrics_csv(tmp_path / "m.csv")


def test_summarize_window_and_population_std():
    rows = [row(i, float(i)) for i in range(10)]
    s = summarize(rows, window=4)
    assert s["episodes"] == 4
    assert s["total_reward_mean"] == 7.5
    assert s["total_reward_std"] == pytest.approx(1.118033988749895)
    assert summarize([])["total_reward_mean"] == 0.0


def test_run_experiment_rows_and_logs():
    res = run_experiment(SMALL)
    assert [r.episode for r in res.rows] == [0, 1, 2]
    assert all(r.step_count == 10.0 and r.collision_rate == 0.0 for r in res.rows)
    assert len(res.logs) == 30
    for r in res.rows:
        assert r.total_reward == pytest.approx(r.transport_reward + r.telecom_reward)


def test_emit_reports_layout(tmp_path):
    res = run_experiment(SMALL)
    written = emit_reports(res.rows, tmp_path, logs=res.logs)
    names = {p.name for p in written}
    assert {"metrics.csv", "summary.json", "episodes.jsonl", "total_reward.dat"} <= names
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["schema_version"] == SCHEMA_VERSION and doc["columns"] == list(METRIC_COLUMNS)
    dat = (tmp_path / "handover_count.dat").read_text().splitlines()
    assert dat[0].startswith("#") and len(dat) == 4


def test_sweep_order_invariant():
    a = sweep(SMALL, "num_uavs", [3, 2, 3])
    b = sweep(SMALL, "num_uavs", [2, 3])
    assert a == b and [r["value"] for r in a] == [2, 3]
    with pytest.raises(ConfigError):
        sweep(SMALL, "seed", [1])


def test_llm_needs_transport():
    with pytest.raises(ConfigError):
        build_transport(with_overrides(SMALL, edge_policy="llm"))


def test_llm_mock_run_counts_no_fallbacks():
    cfg = with_overrides(SMALL, edge_policy="llm", meta_policy="llm", mock_llm_transcript=str(MOCK))
    res = run_experiment(cfg)
    assert res.llm_fallbacks == 0 and len(res.rows) == 3


def test_replay_reproduces_logged_episodes(tmp_path):
    cfg = with_overrides(SMALL, edge_policy="random", haps_capacity_mbps=5.0)
    res = run_experiment(cfg)
    emit_reports(res.rows, tmp_path, logs=res.logs)
    episodes = load_episode_log(tmp_path / "episodes.jsonl")
    for ep, records in episodes.items():
        _, mismatches = replay_episode(cfg, records)
        assert mismatches == [], ep


# --- CLI ----------------------------------------------------------------------

def _write_cfg(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"episodes": 2, "episode_cap": 5, **kw}))
    return path


def test_cli_run_writes_reports(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(_write_cfg(tmp_path)), "--out", str(out)]) == 0
    assert len((out / "metrics.csv").read_text().splitlines()) == 3
    assert "total_reward" in capsys.readouterr().out


def test_cli_run_zero_episodes(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(_write_cfg(tmp_path)), "--episodes", "0", "--out", str(out)]) == 0
    assert (out / "metrics.csv").read_text() == ",".join(METRIC_COLUMNS) + "\n"


def test_cli_determinism(tmp_path):
    cfg = _write_cfg(tmp_path, edge_policy="llm")
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--mock-llm", str(MOCK), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_cli_invalid_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"num_uavs": 0}))
    assert main(["run", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: invalid config") and "num_uavs" in err
    bad.write_text("{not json")
    assert main(["validate", "--config", str(bad)]) == 1


def test_cli_usage_errors_exit_1(tmp_path):
    assert main([]) == 1
    assert main(["sweep", "--parameter", "seed", "--values", "1"]) == 1
    assert main(["run", "--mock-llm", str(tmp_path / "missing.jsonl")]) == 1
    assert main(["run", "--config", str(_write_cfg(tmp_path, edge_policy="llm"))]) == 1


def test_cli_validate_prints_resolved_config(capsys):
    assert main(["validate"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["num_uavs"] == 5 and doc["episode_cap"] == 30


def test_cli_sweep(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--parameter", "num_uavs", "--values", "3", "2",
                 "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[1].startswith("num_uavs,2,")
    assert main(["sweep", "--config", str(cfg), "--parameter", "num_uavs", "--values", "x"]) == 1


def test_cli_replay(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    log = out / "episodes.jsonl"
    assert main(["replay", "--config", str(cfg), "--log", str(log)]) == 0
    assert "episode 1: ok" in capsys.readouterr().out
    assert main(["replay", "--config", str(cfg), "--log", str(log), "--episode", "7"]) == 1
    # Tamper with a logged position so replay reports a mismatch.
    lines = log.read_text().splitlines()
    rec = json.loads(lines[0])
    rec["uavs"][0]["x"] += 1.0
    lines[0] = json.dumps(rec)
    log.write_text("\n".join(lines) + "\n")
    assert main(["replay", "--config", str(cfg), "--log", str(log), "--episode", "0"]) == 2


def test_packaged_scenarios_load():
    from uavhighway.config import load_config

    for name in ("paper_default", "saturated_haps"):
        cfg = load_config(packaged_scenario(name))
        assert cfg.num_uavs == 5
    assert Path(MOCK).exists()
