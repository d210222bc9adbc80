import numpy as np
import pytest

from hiergraph.seesaw import (
    FIXTURE_SEEDS, GAP_MARGIN, WITNESS_MARGIN, SimConfig, compare_modes, plot_trajectories, read_csv,
    reward_matrix, run_sim, synthetic_rewards,
)


def test_rewards_in_unit_interval(rng):
    r = reward_matrix(rng.normal(0, 20, (500, 3)))
    assert r.min() >= 0.0 and r.max() <= 1.0


def test_easy_objective_optimum():
    assert synthetic_rewards([60.0, 0.0, 0.0], [0.0, 0.0, 0.0]).rel == 1.0


def test_hard_objectives_conflict_with_easy_one():
    lo = reward_matrix(np.array([0.0, 5.0, 5.0]))
    hi = reward_matrix(np.array([3.0, 5.0, 5.0]))
    assert hi[0] > lo[0] and hi[1] < lo[1] and hi[2] < lo[2]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        synthetic_rewards([0.0, 0.0], [0.0, 0.0, 0.0])


def test_config_validation():
    for bad in (dict(steps=0), dict(group_size=1), dict(mode="x"), dict(learning_rate=0),
                dict(difficulties=(1.0, 1.0)), dict(sigma=0)):
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_one_step_keeps_initial_weights():
    traj = run_sim(SimConfig(steps=1, mode="dynamic"))
    assert len(traj) == 1
    assert np.allclose(traj.weights[0], 1 / 3)


def test_deterministic():
    for mode in ("static", "dynamic"):
        a = run_sim(SimConfig(seed=3, steps=50, mode=mode))
        b = run_sim(SimConfig(seed=3, steps=50, mode=mode))
        assert np.array_equal(a.rewards, b.rewards) and np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.final_params, b.final_params)


def test_weights_conserved_and_static_constant():
    dyn = run_sim(SimConfig(seed=1, steps=120, mode="dynamic"))
    assert np.all(np.abs(dyn.weights.sum(axis=1) - 1.0) <= 1e-9)
    assert dyn.weights.std(axis=0).max() > 0
    st = run_sim(SimConfig(seed=1, steps=120, mode="static"))
    assert np.all(st.weights == 1 / 3)


def test_default_task_separates_modes_on_first_seed():
    static, dynamic = compare_modes(FIXTURE_SEEDS[0])
    assert min(dynamic[1:]) - min(static[1:]) > GAP_MARGIN
    assert static[0] - max(static[1:]) > WITNESS_MARGIN


def test_csv_round_trip_and_plot(tmp_path):
    traj = run_sim(SimConfig(steps=20))
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    assert path.read_text().splitlines()[0] == "step,r1,r2,r3,w1,w2,w3"
    r, w = read_csv(path)
    assert np.array_equal(r, traj.rewards) and np.array_equal(w, traj.weights)
    png = plot_trajectories([path, path], tmp_path / "p.png")
    assert png.read_bytes()[:4] == b"\x89PNG"
