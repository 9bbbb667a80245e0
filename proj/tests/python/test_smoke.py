"""Smoke tests for the python bindings."""

import json
import math

import pytest

import failcast as fc


def test_coverage_functions():
    assert fc.variance_coverage([(0.0, 0.0), (1.0, 1.0)]) == pytest.approx(0.5)
    assert fc.range_coverage([0.2, -0.3, 0.4]) == pytest.approx(0.7)


def test_is_failure_threshold_and_sigmoid():
    assert fc.is_failure(0.31, 0.3)
    assert not fc.is_failure(0.3, 0.3)
    assert not fc.is_failure(11.5, 11.5, sigmoid_center=11.5)


def test_grids():
    pts = fc.grid_samples([0.5, 0.5], [4.5, 6.5], 30)
    assert len(pts) == 900
    assert [0.5, 0.5] in pts and [4.5, 6.5] in pts

    levels = fc.disturbance_grid(1e-4, 1.0, 1e-5, 1e-3, 5)
    assert len(levels) == 26
    assert levels[0] == (0.0, 0.0)


def test_projection():
    p = fc.project([2.0, 0.0], [0.0, 0.0], 1.0)
    assert p == pytest.approx([1.0, 0.0])
    assert fc.gaussian_mass_radius(2, 0.95) == pytest.approx(
        math.sqrt(-2.0 * math.log(0.05)), rel=1e-5
    )


def test_flow_round_trip_and_classify():
    points = [[2.0 + 0.1 * i, 2.0] for i in range(20)]
    points += [[8.0 + 0.1 * i, 8.0] for i in range(20)]
    classes = [1] * 20 + [2] * 20
    flow = fc.FlowModel.train(points, classes, [0.0, 0.0], [10.0, 10.0], epochs=200, seed=3)

    w, _logdet = flow.inverse([4.0, 6.0])
    z = flow.forward(w)
    assert z == pytest.approx([4.0, 6.0], abs=1e-6)

    correct = sum(flow.classify(p) == c for p, c in zip(points, classes))
    assert correct / len(points) >= 0.9


def test_gpr_fit_predict():
    z1 = [[1.0, 1.0], [2.0, 2.0], [3.0, 1.0]]
    r1 = [0.1, 0.2, 0.15]
    z2 = [[8.0, 8.0], [9.0, 8.5]]
    r2 = [1.5, 1.6]
    model = fc.GprModel.fit(z1, r1, z2, r2, seed=1)
    mean_lo, var_lo = model.predict([2.0, 2.0])
    mean_hi, _ = model.predict([8.5, 8.2])
    assert mean_hi > mean_lo
    assert var_lo >= 0.0


def test_simulators():
    model = fc.bicycle_model_rollout(0.0, 2.0)
    assert not model["diverged"]
    assert model["risk"] < 2.0
    assert all(abs(s) <= 0.8 for s in model["steer"])

    true = fc.bicycle_true_rollout(0.5, 0.5)
    assert not true["diverged"]

    rm, rt = fc.synthetic_risks(8.0, 8.0)
    assert rt > rm


def test_pipeline_stage(tmp_path):
    config = {
        "benchmark": {"id": "synthetic"},
        "bounds": {"lo": [0.0, 0.0], "hi": [10.0, 10.0]},
        "grid": {"n_per_axis": 8},
        "disturbance": {"sigma1": [1e-4, 1.0], "sigma2": [1e-5, 1e-3], "levels_per_axis": 2},
        "risk": {"threshold": 1.0},
        "coverage": {"threshold": 0.5},
        "budget": {"total": 6, "initial": 4},
        "evaluate": {"n_test": 5},
        "seed": 11,
        "out_dir": str(tmp_path / "run"),
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))

    outcomes = fc.run_pipeline(str(cfg_path), stage="falsify")
    assert outcomes[0]["stage"] == "falsify"
    assert not outcomes[0]["cached"]
    assert (tmp_path / "run" / "falsify.csv").exists()

    again = fc.run_pipeline(str(cfg_path), stage="falsify")
    assert again[0]["cached"]
