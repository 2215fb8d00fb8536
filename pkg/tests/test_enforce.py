import numpy as np
import pytest

from affine_fence.schemas.enforce_schemas import EnforceConfig
from affine_fence.schemas.qp_schemas import QpStatusEnum
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.services.exceptions import DimensionMismatchError
from affine_fence.services.qpsolver import QpSolverService
from tests import payload
from tests.conftest import interval_regions, scalar_network


def _assert_same_parameters(first, second):
    for a, b in zip(first.parameters(), second.parameters()):
        assert np.array_equal(a, b)


def test_worked_example(enforce_service):
    net = scalar_network(payload.worked_weights[0], payload.worked_bias)
    regions = interval_regions((2.0, 3.0))
    adjusted, report = enforce_service.enforce_signs(net, regions, SignMap({"R1": [[-1]]}))
    assert report.succeeded
    assert adjusted.layers[0].weights[0, 0] == pytest.approx(
        payload.expected_worked_neuron["weight"], abs=1e-9
    )
    assert adjusted.layers[0].biases[0] == pytest.approx(
        payload.expected_worked_neuron["bias"], abs=1e-9
    )
    assert report.total_shift == pytest.approx(np.sqrt(0.9), abs=1e-9)
    assert net.layers[0].weights[0, 0] == 1.0


def test_bias_only_conflict(enforce_service, bias_only_regions, bias_only_sign_map):
    net = scalar_network(1.0, 0.0)
    result = enforce_service.enforce_bias_only(net, bias_only_regions, bias_only_sign_map)
    assert not result.feasible
    assert (result.conflict_layer, result.conflict_neuron) == (0, 0)
    assert result.bounds.lower == payload.expected_bias_only_bounds["lower"]
    assert result.bounds.upper == payload.expected_bias_only_bounds["upper"]
    assert result.network is None


def test_bias_only_single_region(enforce_service):
    net = scalar_network(1.0, 0.0)
    result = enforce_service.enforce_bias_only(
        net, interval_regions((2.0, 3.0)), SignMap({"R1": [[-1]]})
    )
    assert result.feasible
    assert result.network.layers[0].biases[0] == -3.0
    assert result.network.layers[0].weights[0, 0] == 1.0


@pytest.mark.parametrize("margin", [0.0, 1e-3])
def test_full_enforcement_resolves_bias_only_conflict(
    enforce_service, bias_only_regions, bias_only_sign_map, margin
):
    net = scalar_network(1.0, 0.0)
    adjusted, report = enforce_service.enforce_signs(
        net, bias_only_regions, bias_only_sign_map, EnforceConfig(margin=margin)
    )
    assert report.succeeded
    assert report.worst_margin_deficit <= 1e-8
    assert (
        enforce_service.verify_margins(adjusted, bias_only_regions, bias_only_sign_map, margin)
        >= payload.margin_slack
    )


@pytest.mark.parametrize("margin", [0.0, 1e-2])
def test_deep_network_enforcement(
    enforce_service, deep_net, box_regions, unique_sign_map, margin
):
    adjusted, report = enforce_service.enforce_signs(
        deep_net, box_regions, unique_sign_map, EnforceConfig(margin=margin)
    )
    assert report.succeeded
    assert [len(norms) for norms in report.adjustment_norms] == deep_net.hidden_widths
    assert len(report.layer_wall_times) == deep_net.num_hidden
    margins = enforce_service.margins_by_region(adjusted, box_regions, unique_sign_map, margin)
    assert set(margins) == {"A", "B", "C"}
    assert min(margins.values()) >= payload.margin_slack


def test_first_layer_update_is_least_distance(
    enforce_service, deep_net, box_regions, unique_sign_map
):
    adjusted, _ = enforce_service.enforce_signs(deep_net, box_regions, unique_sign_map)
    solver = QpSolverService()
    signs = np.vstack(
        [np.tile(unique_sign_map.pattern(region_id)[0], (4, 1)) for region_id in box_regions.ids]
    )
    original, moved = deep_net.layers[0], adjusted.layers[0]
    for neuron in range(original.out_dim):
        qp = solver.build_neuron_qp(
            original.weights[neuron],
            original.biases[neuron],
            box_regions.stacked_vertices(),
            signs[:, neuron],
            0.0,
        )
        u = solver.solve_least_distance(qp).u
        assert np.allclose(moved.weights[neuron] - original.weights[neuron], u[:-1], atol=1e-12)
        assert moved.biases[neuron] - original.biases[neuron] == pytest.approx(u[-1], abs=1e-12)


def test_enforcement_is_idempotent(enforce_service, deep_net, box_regions, unique_sign_map):
    once, _ = enforce_service.enforce_signs(deep_net, box_regions, unique_sign_map)
    _, report = enforce_service.enforce_signs(once, box_regions, unique_sign_map)
    assert report.succeeded
    assert report.total_shift <= 1e-9


def test_satisfied_network_is_untouched(enforce_service):
    net = scalar_network(1.0, 0.0)
    regions = interval_regions((1.0, 2.0), (-3.0, -2.0))
    sign_map = SignMap({"R1": [[1]], "R2": [[-1]]})
    adjusted, report = enforce_service.enforce_signs(
        net, regions, sign_map, EnforceConfig(margin=0.5)
    )
    _assert_same_parameters(adjusted, net)
    assert report.total_shift == 0.0
    assert adjusted is not net


def test_parallel_solving_is_deterministic(
    enforce_service, deep_net, box_regions, unique_sign_map
):
    serial, _ = enforce_service.enforce_signs(
        deep_net, box_regions, unique_sign_map, EnforceConfig(jobs=1)
    )
    parallel, _ = enforce_service.enforce_signs(
        deep_net, box_regions, unique_sign_map, EnforceConfig(jobs=4)
    )
    _assert_same_parameters(serial, parallel)


def test_infeasible_map_aborts_without_changes(enforce_service):
    net = scalar_network(1.0, 0.0)
    regions = interval_regions((0.0, 1.0), (2.0, 3.0), (4.0, 5.0))
    sign_map = SignMap({"R1": [[1]], "R2": [[-1]], "R3": [[1]]})
    returned, report = enforce_service.enforce_signs(
        net, regions, sign_map, EnforceConfig(margin=0.1)
    )
    assert returned is net
    assert not report.succeeded
    failure = report.qp_failures[0]
    assert (failure.layer, failure.neuron) == (0, 0)
    assert failure.status == QpStatusEnum.INFEASIBLE
    assert net.layers[0].weights[0, 0] == 1.0


def test_sign_map_must_fit_network(enforce_service, deep_net, box_regions):
    sign_map = SignMap({region_id: [[1] * 16, [1] * 16] for region_id in box_regions.ids})
    with pytest.raises(DimensionMismatchError):
        enforce_service.enforce_signs(deep_net, box_regions, sign_map)


def test_sign_map_must_cover_regions(enforce_service, deep_net, box_regions):
    sign_map = SignMap({"A": [[1] * 16] * 3})
    with pytest.raises(DimensionMismatchError):
        enforce_service.enforce_signs(deep_net, box_regions, sign_map)
