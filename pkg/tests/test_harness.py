import csv
import json
import logging
import os
from collections import defaultdict

import pytest

from conftest import small_config
from vtmig.harness import (COLUMNS, SUMMARY_FIELDS, emit_plots_data, percent_delta, read_metrics,
                           run_experiment, summarize, sweep_points)


def _tiny(**overrides):
    base = {"learner.episodes": 2, "learner.steps_per_episode": 4, "baselines.ga_generations": 2}
    base.update(overrides)
    return small_config(**base)


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _recompute(rows, window):
    """Independent final-window aggregation straight from the raw records."""
    per = defaultdict(lambda: defaultdict(dict))  # seed -> episode -> metric
    for r in rows:
        if r["step"] == "":
            per[int(r["seed"])][int(r["episode"])][r["metric"]] = float(r["value"])
    seed_means = {}
    for seed, eps in per.items():
        last = sorted(eps)[-window:]
        seed_means[seed] = {m: sum(eps[e][m] for e in last) / len(last)
                            for m in SUMMARY_FIELDS if all(m in eps[e] for e in last)}
    return {m: sum(s[m] for s in seed_means.values()) / len(seed_means)
            for m in SUMMARY_FIELDS if all(m in s for s in seed_means.values())}


# -- run_experiment --------------------------------------------------------------

def test_single_run_writes_summary_with_episode_count(tmp_path):
    (s,) = run_experiment(_tiny(), ["random"], [0], str(tmp_path))
    assert s.episodes == 2 and s.seeds == [0]
    on_disk = json.loads((tmp_path / "run__random.summary.json").read_text())
    assert on_disk["episodes"] == 2 and on_disk["config_hash"] == _tiny().digest()
    assert (tmp_path / "run.config.json").exists()
    rows = _read(tmp_path / "run__random.csv")
    assert tuple(rows[0]) == COLUMNS
    assert {r["episode"] for r in rows} == {"0", "1"}


def test_two_seeds_give_disjoint_streams(tmp_path):
    run_experiment(_tiny(), ["random"], [0, 1], str(tmp_path))
    rows = _read(tmp_path / "run__random.csv")
    by_seed = defaultdict(list)
    for r in rows:
        by_seed[r["seed"]].append(r)
    assert set(by_seed) == {"0", "1"}
    keys = [(r["seed"], r["episode"], r["step"], r["metric"]) for r in rows]
    assert len(keys) == len(set(keys))
    assert [r["value"] for r in by_seed["0"]] != [r["value"] for r in by_seed["1"]]


def test_rerun_is_byte_identical(tmp_path):
    cfg = _tiny(**{"harness.log_steps": True})
    for d in ("a", "b"):
        run_experiment(cfg, ["mo-maddpg", "ga"], [3], str(tmp_path / d))
    for name in ("run__mo-maddpg.csv", "run__ga.csv", "run.config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_adding_an_algorithm_leaves_other_streams_alone(tmp_path):
    run_experiment(_tiny(), ["random"], [0], str(tmp_path / "one"))
    run_experiment(_tiny(), ["madqn", "random"], [0], str(tmp_path / "two"))
    assert (tmp_path / "one" / "run__random.csv").read_bytes() == \
           (tmp_path / "two" / "run__random.csv").read_bytes()


def test_bad_arguments_are_rejected(tmp_path):
    with pytest.raises(ValueError):
        run_experiment(_tiny(), [], [0], str(tmp_path))
    with pytest.raises(ValueError):
        run_experiment(_tiny(), ["random"], [], str(tmp_path))
    with pytest.raises(ValueError):
        run_experiment(_tiny(), ["ppo"], [0], str(tmp_path))


def test_summary_is_recomputable_from_records(tmp_path):
    summaries = run_experiment(_tiny(**{"learner.episodes": 3, "harness.final_window": 2}),
                               ["mo-maddpg"], [0, 1], str(tmp_path))
    expected = _recompute(_read(tmp_path / "run__mo-maddpg.csv"), 2)
    assert summaries[0].aggregates == expected


def test_checkpoint_and_embeddings_are_written(tmp_path):
    run_experiment(_tiny(), ["mo-maddpg"], [0], str(tmp_path), checkpoint=True, dump_embeddings=True)
    assert (tmp_path / "checkpoints" / "run__mo-maddpg__seed0.npz").exists()
    emb = _read(tmp_path / "run__mo-maddpg.embeddings.csv")
    assert len(emb) == 2 * 4 * 10  # episodes x steps x nodes
    assert list(emb[0])[:4] == ["seed", "episode", "step", "node"]


# -- summarize -------------------------------------------------------------------

def test_single_algorithm_table_has_no_deltas(tmp_path):
    run_experiment(_tiny(), ["random"], [0], str(tmp_path))
    _, path = summarize(str(tmp_path))
    header = _read(path)[0].keys()
    assert not any(h.startswith("reward_delta") for h in header)


def test_identical_streams_give_zero_delta(tmp_path):
    run_experiment(_tiny(), ["random"], [0], str(tmp_path))
    text = (tmp_path / "run__random.csv").read_text().replace(",random,", ",twin,")
    (tmp_path / "run__twin.csv").write_text(text)
    _, path = summarize(str(tmp_path))
    rows = {r["algorithm"]: r for r in _read(path)}
    assert float(rows["random"]["reward_delta_pct_vs_twin"]) == 0.0
    assert float(rows["twin"]["reward_delta_pct_vs_random"]) == 0.0


def test_deltas_match_independent_recomputation(tmp_path):
    run_experiment(_tiny(), ["mo-maddpg", "random"], [0, 1], str(tmp_path))
    _, path = summarize(str(tmp_path), final_window=50)
    table = {r["algorithm"]: r for r in _read(path)}
    mo = _recompute(_read(tmp_path / "run__mo-maddpg.csv"), 50)
    rnd = _recompute(_read(tmp_path / "run__random.csv"), 50)
    for m in SUMMARY_FIELDS:
        if m in mo:
            assert float(table["mo-maddpg"][m]) == mo[m]
    assert table["random"]["critic_loss"] == ""
    delta = (mo["reward"] - rnd["reward"]) / abs(rnd["reward"]) * 100.0
    assert float(table["mo-maddpg"]["reward_delta_pct_vs_random"]) == delta


def test_summarize_empty_directory_fails(tmp_path):
    with pytest.raises(ValueError):
        summarize(str(tmp_path))


def test_percent_delta():
    assert percent_delta(110.0, 100.0) == 10.0
    assert percent_delta(-90.0, -100.0) == 10.0
    assert percent_delta(0.0, 0.0) == 0.0


# -- plot data -------------------------------------------------------------------

def test_reward_file_has_one_row_per_algorithm_episode(tmp_path):
    run_experiment(_tiny(), ["mo-maddpg", "random"], [0, 1], str(tmp_path))
    written, _ = emit_plots_data(str(tmp_path))
    rows = _read(tmp_path / "plots" / "reward_vs_episode.csv")
    assert sorted((r["algorithm"], r["episode"]) for r in rows) == \
           sorted((a, e) for a in ("mo-maddpg", "random") for e in ("0", "1"))
    assert all(r["n_seeds"] == "2" for r in rows)
    assert str(tmp_path / "plots" / "reward_vs_episode.csv") in written


def test_missing_series_is_skipped_with_warning(tmp_path, caplog):
    run_experiment(_tiny(), ["random"], [0], str(tmp_path))
    path = tmp_path / "run__random.csv"
    kept = [line for line in path.read_text().splitlines() if ",ux," not in line]
    path.write_text("\n".join(kept) + "\n")
    with caplog.at_level(logging.WARNING, logger="vtmig"):
        written, warnings = emit_plots_data(str(tmp_path))
    assert not (tmp_path / "plots" / "qoe_vs_episode.csv").exists()
    assert any("qoe_vs_episode" in w for w in warnings)
    assert any("qoe_vs_episode" in r.getMessage() for r in caplog.records)
    assert any(p.endswith("reward_vs_episode.csv") for p in written)


def test_task_size_sweep_matches_grouped_means(tmp_path):
    cfg = _tiny(**{"harness.sweeps": {"task_size_mb": [[10, 20], [30, 40]]}})
    assert [s for s, _ in sweep_points(cfg)] == ["__task_size_mb=10-20", "__task_size_mb=30-40"]
    run_experiment(cfg, ["random"], [0, 1], str(tmp_path))
    emit_plots_data(str(tmp_path))
    rows = _read(tmp_path / "plots" / "energy_vs_task_size.csv")
    assert [r["task_size_mb"] for r in rows] == ["10-20", "30-40"]
    assert [float(r["x"]) for r in rows] == [15.0, 35.0]
    for r in rows:
        raw = _read(tmp_path / f"run__task_size_mb={r['task_size_mb']}__random.csv")
        vals = [float(x["value"]) for x in raw if x["metric"] == "energy" and x["step"] == ""]
        assert float(r["energy"]) == sum(vals) / len(vals)


def test_read_metrics_ignores_foreign_files(tmp_path):
    run_experiment(_tiny(), ["random"], [0], str(tmp_path))
    (tmp_path / "notes__x.csv").write_text("a,b\n1,2\n")
    rows = read_metrics(str(tmp_path))
    assert {r["algorithm"] for r in rows} == {"random"}
    assert os.path.exists(tmp_path / "notes__x.csv")
