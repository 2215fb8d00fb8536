import numpy as np
import pytest
from pydantic import ValidationError

from affine_fence.schemas.region_schemas import (
    ConvexRegion,
    EqualityConstraint,
    InequalityConstraint,
    RegionSet,
)
from affine_fence.services.exceptions import (
    DimensionMismatchError,
    InvalidRegionError,
    VertexLimitError,
)
from affine_fence.services.regions import MACHINE_GAP, RegionService


def test_make_interval():
    assert np.array_equal(RegionService.make_interval(1.0, 2.0), [[1.0], [2.0]])


@pytest.mark.parametrize("bounds", [(1.0, 1.0), (2.0, 1.0)])
def test_make_interval_rejects_empty(bounds):
    with pytest.raises(InvalidRegionError):
        RegionService.make_interval(*bounds)


def test_make_box_lexicographic_corners():
    vertices = RegionService.make_box([0.0, 10.0], [1.0, 20.0])
    assert np.array_equal(vertices, [[0.0, 10.0], [0.0, 20.0], [1.0, 10.0], [1.0, 20.0]])


def test_make_box_vertex_count():
    assert RegionService.make_box(np.zeros(5), np.ones(5)).shape == (32, 5)


def test_make_box_dimension_limit():
    with pytest.raises(VertexLimitError) as exc:
        RegionService.make_box(np.zeros(21), np.ones(21))
    assert exc.value.dimension == 21


def test_make_box_rejects_inverted_corners():
    with pytest.raises(InvalidRegionError):
        RegionService.make_box([0.0, 1.0], [1.0, 1.0])


def test_make_abutting_boxes():
    first, second = RegionService.make_abutting_boxes([-1.0, -1.0], [1.0, 1.0])
    gap = second[:, 0].min() - first[:, 0].max()
    assert 0.0 < gap <= 2 * MACHINE_GAP
    assert first[:, 1].min() == second[:, 1].min() == -1.0


def test_region_drops_duplicate_vertices():
    region = ConvexRegion(id="A", vertices=[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    assert region.num_vertices == 3


def test_region_needs_a_vertex():
    with pytest.raises(ValidationError):
        ConvexRegion(id="A", vertices=np.zeros((0, 2)))


def test_region_rejects_nan_vertex():
    with pytest.raises(ValidationError):
        ConvexRegion(id="A", vertices=[[0.0, np.nan]])


def test_constraint_shapes_are_checked():
    with pytest.raises(ValidationError):
        EqualityConstraint(e=[[1.0, 0.0], [0.0, 1.0]], f=[1.0])


def test_region_set_rejects_duplicate_ids():
    vertices = RegionService.make_interval(0.0, 1.0)
    with pytest.raises(ValidationError):
        RegionSet(regions=[ConvexRegion(id="A", vertices=vertices)] * 2)


def test_region_set_rejects_mixed_dimensions():
    with pytest.raises(ValidationError):
        RegionSet(
            regions=[
                ConvexRegion(id="A", vertices=[[0.0], [1.0]]),
                ConvexRegion(id="B", vertices=[[0.0, 0.0], [1.0, 1.0]]),
            ]
        )


def test_sample_interior_stays_in_box():
    region = ConvexRegion(id="A", vertices=RegionService.make_box([0.0, 2.0], [1.0, 3.0]))
    samples = RegionService.sample_interior(region, 500, seed=4)
    assert samples.shape == (500, 2)
    assert RegionService.contains(region, samples).all()
    assert np.array_equal(samples, RegionService.sample_interior(region, 500, seed=4))


def test_contains_box_boundary_inclusive():
    region = ConvexRegion(id="A", vertices=RegionService.make_box([0.0, 0.0], [1.0, 1.0]))
    mask = RegionService.contains(region, np.array([[1.0, 0.5], [0.0, 0.0], [1.0 + 1e-6, 0.5]]))
    assert mask.tolist() == [True, True, False]


def test_contains_triangle():
    region = ConvexRegion(id="T", vertices=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mask = RegionService.contains(region, np.array([[0.2, 0.2], [0.5, 0.5], [0.6, 0.6]]))
    assert mask.tolist() == [True, True, False]


def test_check_disjoint(box_regions):
    assert RegionService.check_disjoint(box_regions) == []
    overlapping = RegionSet(
        regions=[
            ConvexRegion(id="A", vertices=RegionService.make_box([0.0, 0.0], [1.0, 1.0])),
            ConvexRegion(id="B", vertices=RegionService.make_box([0.5, 0.5], [2.0, 2.0])),
        ]
    )
    assert RegionService.check_disjoint(overlapping) == [("A", "B")]


def test_constraint_residual():
    region = ConvexRegion(
        id="A",
        vertices=[[0.0], [1.0]],
        equality=EqualityConstraint(e=[[1.0, 0.0]], f=[1.0]),
        inequality=InequalityConstraint(c=[[0.0, 1.0]], d=[2.0]),
    )
    outputs = np.array([[1.5, 0.0], [1.0, 2.25]])
    assert RegionService.constraint_residual(region, outputs) == 0.5
    assert RegionService.vertex_violation(region, np.array([[1.0, 2.25], [1.0, 0.0]])) == 0.25


def test_vertex_violation_needs_one_row_per_vertex():
    region = ConvexRegion(
        id="A",
        vertices=[[0.0], [1.0]],
        equality=EqualityConstraint(e=[[1.0]], f=[0.0]),
    )
    with pytest.raises(DimensionMismatchError):
        RegionService.vertex_violation(region, np.zeros((3, 1)))
