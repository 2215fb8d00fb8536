import numpy as np
import pytest

from affine_fence.schemas.enforce_schemas import EnforceConfig
from affine_fence.schemas.experiment_schemas import DemoExperimentSpec
from affine_fence.schemas.region_schemas import ConvexRegion
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.services.exceptions import InvalidValueError, PatternMismatchError
from affine_fence.services.regions import RegionService
from tests import payload
from tests.conftest import interval_regions


@pytest.fixture
def enforced_net(enforce_service, deep_net, box_regions, unique_sign_map):
    net, report = enforce_service.enforce_signs(
        deep_net, box_regions, unique_sign_map, EnforceConfig(margin=1e-3)
    )
    assert report.succeeded
    return net


def test_certify_after_enforcement(verifier_service, enforced_net, box_regions, unique_sign_map):
    for region in box_regions.regions:
        report = verifier_service.certify_region(
            enforced_net, region, unique_sign_map.pattern(region.id), n_samples=2000
        )
        assert report.certified
        assert report.mismatched_samples == 0
        assert report.counterexample is None
        assert report.affine_residual <= payload.affine_tolerance
        assert report.closed_form_residual <= payload.affine_tolerance


def test_certify_with_full_sample_count(
    verifier_service, enforced_net, box_regions, unique_sign_map
):
    for region in box_regions.regions:
        report = verifier_service.certify_region(
            enforced_net, region, unique_sign_map.pattern(region.id), n_samples=10_000
        )
        assert report.samples_used == 10_000
        assert report.mismatched_samples == 0
        assert report.closed_form_residual <= payload.affine_tolerance
        assert report.affine_residual <= payload.affine_tolerance


def test_certify_at_zero_margin(
    verifier_service, enforce_service, deep_net, box_regions, unique_sign_map
):
    net, _ = enforce_service.enforce_signs(deep_net, box_regions, unique_sign_map)
    for region in box_regions.regions:
        report = verifier_service.certify_region(
            net, region, unique_sign_map.pattern(region.id), n_samples=1000
        )
        assert report.pattern_constant


def test_closed_form_matches_fit(
    verifier_service, network_service, enforced_net, box_regions, unique_sign_map
):
    region = box_regions.get("B")
    linear, offset = verifier_service.extract_region_affine(
        enforced_net, region, unique_sign_map.pattern("B")
    )
    samples = RegionService.sample_interior(region, 200, seed=1)
    outputs = network_service.forward(enforced_net, samples)
    assert np.allclose(samples @ linear.T + offset, outputs, atol=1e-8)


def test_divided_difference_in_one_dimension(verifier_service, enforce_service, network_service):
    net = network_service.init_network([1, 12, 12, 1], seed=8)
    regions = interval_regions((0.2, 0.6), (1.5, 2.0))
    sign_map = SignMap(
        {
            region.id: [
                np.where(z.mean(axis=0) >= 0.0, 1, -1)
                for z in network_service.hidden_pre_activations(net, region.vertices)
            ]
            for region in regions.regions
        }
    )
    net, report = enforce_service.enforce_signs(
        net, regions, sign_map, EnforceConfig(margin=1e-3)
    )
    assert report.succeeded
    region = regions.get("R1")
    linear, _ = verifier_service.extract_region_affine(net, region, sign_map.pattern("R1"))
    ends = network_service.forward(net, region.vertices)[:, 0]
    assert linear[0, 0] == pytest.approx((ends[1] - ends[0]) / (0.6 - 0.2), rel=1e-9, abs=1e-12)
    midpoint = network_service.forward(net, [0.4])[0]
    assert midpoint == pytest.approx(0.5 * (ends[0] + ends[1]), rel=1e-9, abs=1e-12)


def test_wide_region_is_not_certified(verifier_service, network_service):
    net = network_service.init_network([2, 64, 1], seed=0)
    region = ConvexRegion(id="W", vertices=RegionService.make_box([-3.0, -3.0], [3.0, 3.0]))
    pattern = network_service.activation_pattern_at(net, [0.0, 0.0])
    report = verifier_service.certify_region(net, region, pattern, n_samples=2000)
    assert not report.pattern_constant
    assert not report.certified
    assert report.counterexample is not None
    assert report.closed_form_residual is None


def test_certify_needs_enough_samples(verifier_service, small_net, box_regions):
    region = box_regions.get("A")
    pattern = [np.ones(8), np.ones(8)]
    with pytest.raises(InvalidValueError):
        verifier_service.certify_region(small_net, region, pattern, n_samples=6)


def test_extract_region_affine_rejects_wrong_pattern(
    verifier_service, enforced_net, box_regions, unique_sign_map
):
    flipped = [signs.copy() for signs in unique_sign_map.pattern("A")]
    flipped[0][0] *= -1
    with pytest.raises(PatternMismatchError) as exc:
        verifier_service.extract_region_affine(enforced_net, box_regions.get("A"), flipped)
    assert exc.value.region_id == "A"


def test_certify_distinct(verifier_service):
    assert verifier_service.certify_distinct(SignMap({"A": [[1, -1]]}))
    assert verifier_service.certify_distinct(SignMap({"A": [[1, -1]], "B": [[1, 1]]}))
    assert not verifier_service.certify_distinct(SignMap({"A": [[1, -1]], "B": [[1, -1]]}))


@pytest.mark.parametrize("margin", [None, 1e-3])
def test_hull_contrast(experiment_service, tmp_path, margin):
    settings = {} if margin is None else {"margin": margin}
    spec = DemoExperimentSpec(
        name="hull_demo", output_dir=str(tmp_path), verify_samples=4000, **settings
    )
    result = experiment_service.hull_demo(spec, seed=0)
    shared, unique = result.hull_demo.shared, result.hull_demo.unique
    assert shared.hull_pattern_constant
    assert shared.hull_affine_residual <= payload.affine_tolerance
    assert not unique.hull_pattern_constant
    assert result.patterns_distinct
    assert result.passed
