import json
import math
from dataclasses import replace

import numpy as np
import pytest

from oracles import trailing_mean
from ttrl import aprg as A
from ttrl import env as E
from ttrl import harness as H

SMALL_AGENT = A.AprgConfig(total_episodes=36, warmup_episodes=30, train_steps=4, batch_size=16)


def small(out=None, **kw):
    return replace(H.ExperimentConfig(agent=SMALL_AGENT, out_dir=out, eval_serves=3), **kw)


# -- running averages --------------------------------------------------------


def test_window_one_is_raw_series():
    errs = np.random.default_rng(0).uniform(0, 1, 40)
    np.testing.assert_array_equal(H.running_average(errs, 1), errs)


def test_constant_series_stays_constant():
    np.testing.assert_allclose(H.running_average(np.full(60, 0.123), 30), 0.123, rtol=0, atol=1e-15)


def test_linear_decay_matches_hand_values():
    errs = [0.5 - 0.002 * i for i in range(200)]
    got = H.running_average(errs, 30)
    np.testing.assert_allclose(got, trailing_mean(errs, 30), atol=1e-12, rtol=0)
    # a full window of an arithmetic sequence averages to its midpoint
    assert got[100] == pytest.approx(0.5 - 0.002 * 85.5, abs=1e-12)
    assert got[0] == 0.5


def test_window_longer_than_log_rejected():
    with pytest.raises(ValueError):
        H.running_average([0.1, 0.2], 3)
    with pytest.raises(ValueError):
        H.running_average([0.1, 0.2], 0)


def test_plot_file_contents(tmp_path):
    errs = [0.3, 0.1, 0.2]
    H.emit_plot_data(errs, 2, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "episode,goal_error,running_mean_2"
    assert [float(x) for x in lines[3].split(",")] == [2, 0.2, pytest.approx(0.15)]


# -- configs -----------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = H.ExperimentConfig.for_scenario("x-play", seeds=(3, 4))
    p = tmp_path / "c.json"
    p.write_text(H.dump_config(cfg))
    assert H.load_config(p) == cfg


def test_partial_config_merges_onto_defaults():
    cfg = H.config_from_dict({"agent": {"critic_lr": 3e-4}, "env": {"height_weight": 0.1}})
    assert cfg.agent.critic_lr == 3e-4 and cfg.agent.actor_lr == 1e-4
    assert cfg.env.height_weight == 0.1 and cfg.env.hit_plane_x == 0.3


def test_scenario_key_picks_preset():
    cfg = H.config_from_dict({"scenario": "i-play"})
    assert cfg.env == E.scenario("i-play")


def test_unknown_config_key_rejected():
    with pytest.raises(ValueError):
        H.config_from_dict({"agent": {"learning_rate": 1.0}})


def test_physics_params_come_from_config():
    cfg = H.config_from_dict({"env": {"physics": {"k_drag": 0.2}}})
    assert cfg.env.physics.k_drag == 0.2 and cfg.env.physics.gravity == 9.81


# -- experiments -------------------------------------------------------------


def test_warmup_only_experiment(tmp_path):
    cfg = small(str(tmp_path), agent=replace(SMALL_AGENT, total_episodes=30))
    s = H.run_experiment(cfg)
    log = H.read_episode_log(tmp_path / "episodes_seed0.csv")
    assert len(log["goal_error"]) == 30
    assert s.mean_error == pytest.approx(np.mean(log["goal_error"]))
    assert math.isnan(s.seeds[0].early_mean_error) or s.seeds[0].early_mean_error >= 0


@pytest.fixture(scope="module")
def two_seed_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = small(str(out), seeds=(0, 1))
    return cfg, out, H.run_experiment(cfg)


def test_experiment_writes_its_files(two_seed_run):
    cfg, out, _ = two_seed_run
    for name in ["config.json", "summary.json"] + [
        f"{kind}_seed{s}.{ext}" for s in (0, 1)
        for kind, ext in [("episodes", "csv"), ("curve", "csv"), ("actor", "ckpt"),
                          ("critic", "ckpt"), ("eval", "csv")]
    ]:
        assert (out / name).is_file(), name
    assert H.load_config(out / "config.json") == cfg


def test_summary_recomputable_from_disk(two_seed_run):
    cfg, out, summary = two_seed_run
    again = H.summarize_directory(cfg, out)
    assert again == summary
    on_disk = json.loads((out / "summary.json").read_text())
    assert on_disk["mean_error"] == summary.mean_error
    assert on_disk["mean_error_mm"] == pytest.approx(1000 * summary.mean_error)
    log = H.read_episode_log(out / "episodes_seed1.csv")
    tail = log["goal_error"][-50:]
    assert summary.seeds[1].last_mean_error == pytest.approx(np.mean(tail), rel=1e-15)
    assert summary.seeds[1].last_x_error == pytest.approx(
        np.mean(np.abs(log["goal_x"][-50:] - log["achieved_x"][-50:])), rel=1e-15)


def test_logged_floats_round_trip(two_seed_run):
    cfg, out, _ = two_seed_run
    res = A.run_training(cfg.env, cfg.agent, 0)
    log = H.read_episode_log(out / "episodes_seed0.csv")
    assert log["goal_error"].tolist() == [e.goal_error for e in res.log]
    assert log["s3"].tolist() == [float(e.observed_state[3]) for e in res.log]


def test_rerun_is_byte_identical(two_seed_run, tmp_path):
    cfg, out, _ = two_seed_run
    H.run_experiment(replace(cfg, out_dir=str(tmp_path)))
    for seed in (0, 1):
        name = f"episodes_seed{seed}.csv"
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_evaluate_reproduces_recorded_actions(two_seed_run):
    cfg, out, _ = two_seed_run
    recorded = H.read_rows(out / "eval_seed1.csv")
    again = H.evaluate(H.load_config(out / "config.json"), out, 1)
    assert len(again) == len(recorded)
    for a, b in zip(recorded, again):
        for key in ("alpha", "beta", "vx"):
            assert abs(a[key] - b[key]) <= 1e-12


def test_invalid_scenario_rejected():
    with pytest.raises(ValueError):
        H.run_experiment(small(scenario="beach"))


def test_unwritable_output_rejected(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        H.run_experiment(small(str(blocker / "sub")))


@pytest.mark.parametrize("name", sorted(E.SCENARIOS))
def test_every_preset_trains(name):
    cfg = H.ExperimentConfig.for_scenario(name, agent=replace(SMALL_AGENT, total_episodes=31))
    s = H.run_experiment(replace(cfg, eval_serves=0))
    assert np.isfinite(s.mean_error)


# -- mode comparison and search ---------------------------------------------


def test_compare_single_mode(tmp_path):
    rows = H.compare_modes(small(str(tmp_path)), ["prg"])
    assert len(rows) == 1 and rows[0]["mode"] == "prg"
    assert (tmp_path / "compare.csv").is_file()


def test_compare_modes_share_warmup(tmp_path):
    H.compare_modes(small(str(tmp_path)), ["aprg", "scalar"])
    a = (tmp_path / "aprg" / "episodes_seed0.csv").read_text().splitlines()
    b = (tmp_path / "scalar" / "episodes_seed0.csv").read_text().splitlines()
    assert a[:31] == b[:31]  # header plus the warm-up episodes
    assert a != b


def test_trial_sampling_reproducible():
    space = H.SearchSpace(trials=6, seeds_per_trial=1)
    base = small()
    a = H.sample_trials(space, base, 5)
    assert a == H.sample_trials(space, base, 5)
    assert a != H.sample_trials(space, base, 6)
    for cfg, values in a:
        assert 2e-4 <= cfg.agent.critic_lr <= 5e-3
        assert cfg.agent.batch_size in (16, 32, 64, 128)
        assert 8 <= cfg.agent.train_steps <= 48


def test_single_trial_search_is_one_experiment(tmp_path):
    space = H.SearchSpace(trials=1, seeds_per_trial=2)
    table = H.run_search(space, small(str(tmp_path)), master_seed=3)
    cfg, _ = H.sample_trials(space, small(), 3)[0]
    direct = H.run_experiment(replace(cfg, seeds=(0, 1), eval_serves=0))
    assert table[0]["mean_error"] == direct.mean_error
    saved = json.loads((tmp_path / "search.json").read_text())
    assert saved["master_seed"] == 3 and saved["table"][0]["trial"] == 0


def test_single_point_space_gives_identical_trials():
    space = H.SearchSpace(params=(H.Param("agent.critic_lr", "choice", choices=(1e-3,)),),
                          trials=3, seeds_per_trial=1)
    table = H.run_search(space, small())
    assert len({r["mean_error"] for r in table}) == 1
    assert [r["rank"] for r in table] == [0, 1, 2]


def test_best_config_applies_winning_values():
    space = H.SearchSpace(trials=4, seeds_per_trial=1)
    trials = H.sample_trials(space, small(), 0)
    table = [{"trial": i, "mean_error": 1.0 - i, **v} for i, (_, v) in enumerate(trials)]
    table.sort(key=lambda r: r["mean_error"])
    best = H.best_config(table, space, small())
    assert best.agent == trials[3][0].agent


def test_search_space_from_dict():
    space = H.SearchSpace.from_dict({"trials": 3, "params": [
        {"path": "agent.batch_size", "kind": "choice", "choices": [8, 16]}]})
    assert space.trials == 3 and space.seeds_per_trial == 5
    assert space.params[0].choices == (8, 16)
    with pytest.raises(ValueError):
        H.SearchSpace(trials=0)


# -- noise calibration -------------------------------------------------------


def test_calibration_hits_target_scatter():
    noisy, floor = H.calibrate_system_noise(E.EnvConfig(), target_rms=0.05)
    assert floor == pytest.approx(0.05, rel=0.05)
    assert min(noisy.action_noise_std) > 0 and min(noisy.obs_noise_std[:3]) > 0
