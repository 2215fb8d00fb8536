import json
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from affine_fence.schemas.experiment_schemas import (
    BenchExperimentSpec,
    DemoExperimentSpec,
    RegionConfig,
    experiment_spec_adapter,
)
from affine_fence.services.exceptions import InvalidValueError
from affine_fence.services.regions import MACHINE_GAP
from affine_fence.storage.repo.experiment import ExperimentSpecRepo
from tests import payload

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _load_config(name: str, output_dir, **overrides):
    with open(CONFIG_DIR / f"{name}.json", encoding="utf-8") as file:
        raw = json.load(file)
    raw["output_dir"] = str(output_dir)
    raw.update(overrides)
    return experiment_spec_adapter.validate_python(raw)


def test_sin_dataset_grid(experiment_service):
    data = experiment_service.gen_sin_dataset(5)
    assert data.inputs[:, 0] == pytest.approx([0.0, np.pi / 2, np.pi, 1.5 * np.pi, 2 * np.pi])
    assert data.targets[1, 0] == pytest.approx(1.0)


def test_sin_dataset_is_a_fixed_grid(experiment_service):
    first = experiment_service.gen_sin_dataset(64)
    second = experiment_service.gen_sin_dataset(64)
    assert np.array_equal(first.inputs, second.inputs)
    assert np.array_equal(first.targets, second.targets)
    with pytest.raises(TypeError):
        experiment_service.gen_sin_dataset(64, seed=1)


def test_sin_dataset_needs_two_points(experiment_service):
    with pytest.raises(InvalidValueError):
        experiment_service.gen_sin_dataset(1)


def test_sin_regions(experiment_service):
    regions = experiment_service.sin_regions()
    assert regions.ids == ["R1", "R2"]
    assert regions.get("R1").vertices[:, 0] == pytest.approx(payload.expected_sin_r1)
    assert regions.get("R2").vertices[:, 0] == pytest.approx(payload.expected_sin_r2)
    assert regions.get("R1").equality.f[0] == pytest.approx(payload.sin_of_pi_over_3, abs=1e-15)
    assert regions.get("R2").inequality.d[0] == -0.5


def test_spiral_dataset(experiment_service):
    data = experiment_service.gen_spiral_dataset(100, noise=0.05, seed=3)
    assert data.inputs.shape == (200, 2)
    assert data.targets.sum() == 100
    assert np.max(np.abs(data.inputs)) == pytest.approx(1.0)
    again = experiment_service.gen_spiral_dataset(100, noise=0.05, seed=3)
    assert np.array_equal(data.inputs, again.inputs)


def test_spiral_arms_are_point_symmetric(experiment_service):
    data = experiment_service.gen_spiral_dataset(50)
    assert np.allclose(data.inputs[:50], -data.inputs[50:])


def test_spiral_regions_are_disjoint(experiment_service, region_service):
    regions = experiment_service.spiral_regions()
    assert regions.ids == ["S0", "S1"]
    assert region_service.check_disjoint(regions) == []


def test_saddle_dataset(experiment_service):
    data = experiment_service.gen_saddle_dataset(64, seed=2)
    x = data.inputs
    assert np.array_equal(data.targets[:, 0], x[:, 0] ** 2 - x[:, 1] ** 2)
    assert np.all(np.abs(x) <= 1.0)


def test_saddle_regions(experiment_service):
    regions = experiment_service.saddle_regions()
    left, right = regions.get("left"), regions.get("right")
    gap = right.vertices[:, 0].min() - left.vertices[:, 0].max()
    assert gap == pytest.approx(MACHINE_GAP, rel=1e-6)
    assert left.equality.f[0] == right.equality.f[0] == 0.0


def test_build_regions(experiment_service):
    configs = [
        RegionConfig(id="I", interval=(0.0, 1.0)),
        RegionConfig(id="V", vertices=[[2.0], [3.0]], inequality={"c": [[1.0]], "d": [0.5]}),
    ]
    regions = experiment_service.build_regions(configs)
    assert regions.ids == ["I", "V"]
    assert regions.get("V").inequality.d[0] == 0.5


def test_region_config_needs_one_geometry():
    with pytest.raises(ValidationError):
        RegionConfig(id="X", interval=(0.0, 1.0), vertices=[[0.0], [1.0]])
    with pytest.raises(ValidationError):
        RegionConfig(id="X")


def test_spec_without_regions_is_rejected():
    with pytest.raises(ValidationError) as exc:
        experiment_spec_adapter.validate_python(
            {"name": "sin_regression", "architecture": {"hidden": [8]}}
        )
    assert any("regions" in error["loc"] for error in exc.value.errors())


@pytest.mark.parametrize(
    "name",
    [
        "sin_regression",
        "spiral_classification",
        "nonconvex_saddle",
        "bench",
        "bias_only_demo",
        "hull_demo",
    ],
)
def test_shipped_configs_parse(name):
    spec = ExperimentSpecRepo.load(CONFIG_DIR / f"{name}.json")
    assert spec.name == name


def test_hull_demo_defaults_to_zero_margin():
    assert DemoExperimentSpec(name="hull_demo").margin == 0.0
    assert ExperimentSpecRepo.load(CONFIG_DIR / "hull_demo.json").margin == 0.0


@pytest.mark.parametrize("name", ["sin_regression", "nonconvex_saddle"])
def test_constrained_configs_drop_equality_data_and_decay(name):
    train = ExperimentSpecRepo.load(CONFIG_DIR / f"{name}.json").train
    assert train.filter_equality_data
    assert train.lr_decay < 1.0


def test_bias_only_demo(experiment_service, tmp_path):
    spec = DemoExperimentSpec(name="bias_only_demo", output_dir=str(tmp_path))
    result = experiment_service.run_experiment(spec)
    demo = result.bias_only_demo
    assert result.passed
    assert not demo.bias_only.feasible
    assert demo.bias_only.bounds.lower == payload.expected_bias_only_bounds["lower"]
    assert demo.bias_only.bounds.upper == payload.expected_bias_only_bounds["upper"]
    assert demo.enforcement.succeeded
    assert demo.margin_after_enforcement >= payload.margin_slack
    assert (tmp_path / "report.json").exists()


def test_bench_single_cell(experiment_service):
    rows = experiment_service.run_bench([16], [2], [2], seed=0, input_dim=3)
    assert len(rows) == 1
    row = rows[0]
    assert row.total_vertices == 16
    assert (row.net_width, row.num_hidden_layers, row.n_regions) == (16, 2, 2)
    assert row.status == "ok"
    assert row.t_assign >= 0.0 and row.t_enforce >= 0.0


def test_bench_grid_order(experiment_service):
    rows = experiment_service.run_bench([8, 16], [1], [2, 3], seed=1, input_dim=2)
    assert [(row.n_regions, row.net_width) for row in rows] == [(2, 8), (2, 16), (3, 8), (3, 16)]


def test_bench_rejects_empty_grid(experiment_service):
    with pytest.raises(InvalidValueError):
        experiment_service.run_bench([], [1], [2])


def test_bench_experiment_writes_csv(experiment_service, tmp_path):
    spec = BenchExperimentSpec(
        name="bench",
        bench={"widths": [8], "depths": [1], "region_counts": [2], "input_dim": 2},
        output_dir=str(tmp_path),
    )
    result = experiment_service.run_experiment(spec, seed=0)
    assert result.passed
    header = (tmp_path / "bench.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == payload.expected_bench_header


@pytest.mark.slow
def test_sin_regression_end_to_end(experiment_service, tmp_path):
    spec = _load_config("sin_regression", tmp_path)
    result = experiment_service.run_experiment(spec, seed=0)
    assert result.baseline_violation >= 0.1
    assert result.final_violation <= spec.train.violation_tolerance
    assert result.final_violation < result.baseline_violation
    rates = result.train_report.learning_rate
    assert rates == sorted(rates, reverse=True)
    assert result.patterns_distinct
    assert all(report.certified for report in result.certifications)
    assert result.passed
    for artifact in ("model.json", "curves.csv", "predictions.csv", "report.json"):
        assert (tmp_path / artifact).exists()


@pytest.mark.slow
def test_spiral_classification_end_to_end(experiment_service, tmp_path):
    spec = _load_config("spiral_classification", tmp_path)
    result = experiment_service.run_experiment(spec, seed=0)
    assert result.metric_name == "accuracy"
    assert result.final_metric >= 0.9
    assert result.final_violation == 0.0
    assert result.patterns_distinct
    assert all(report.certified for report in result.certifications)


@pytest.mark.slow
def test_nonconvex_saddle_end_to_end(experiment_service, tmp_path):
    spec = _load_config("nonconvex_saddle", tmp_path)
    result = experiment_service.run_experiment(spec, seed=0)
    assert result.patterns_distinct
    assert all(report.certified for report in result.certifications)
    assert result.final_violation <= spec.train.violation_tolerance
