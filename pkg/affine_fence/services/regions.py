import itertools

import numpy as np
from scipy.optimize import linprog

from affine_fence.core.logger import logger
from affine_fence.schemas.region_schemas import (
    ConvexRegion,
    EqualityConstraint,
    InequalityConstraint,
    RegionSet,
)
from affine_fence.services.exceptions import (
    DimensionMismatchError,
    InvalidRegionError,
    InvalidValueError,
    VertexLimitError,
)

MAX_BOX_DIMENSION = 20
MACHINE_GAP = 10 * np.finfo(np.float64).eps
MEMBERSHIP_TOLERANCE = 1e-12


class RegionService:
    """Represents a service for building and querying convex regions."""

    @staticmethod
    def make_interval(a: float, b: float) -> np.ndarray:
        if not a < b:
            raise InvalidRegionError(f"interval [{a}, {b}] needs a < b")
        return np.array([[a], [b]], dtype=np.float64)

    @staticmethod
    def make_box(lo, hi) -> np.ndarray:
        """All 2^D corners of an axis-aligned box, lexicographic in the bits.

        Args:
            lo (array-like): Lower corner.
            hi (array-like): Upper corner.

        Raises:
            VertexLimitError: If D exceeds the supported dimension.
            InvalidRegionError: If ``lo < hi`` fails in some coordinate.

        Returns:
            np.ndarray: Vertex matrix of shape (2^D, D).
        """
        lo = np.asarray(lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionMismatchError("box corners", lo.shape, hi.shape)
        dim = lo.shape[0]
        if dim > MAX_BOX_DIMENSION:
            raise VertexLimitError(dimension=dim, vertex_count=2**dim)
        if not np.all(lo < hi):
            raise InvalidRegionError(f"box corners {lo} and {hi} need lo < hi")
        bits = np.array(list(itertools.product((0, 1), repeat=dim)), dtype=bool)
        return np.where(bits, hi, lo)

    @staticmethod
    def make_abutting_boxes(
        lo, hi, axis: int = 0, gap: float = MACHINE_GAP
    ) -> tuple[np.ndarray, np.ndarray]:
        """Split a box into two congruent boxes separated by ``gap`` along ``axis``."""
        if gap < 0:
            raise InvalidValueError("gap", gap, "must be non-negative")
        lo = np.asarray(lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(hi, dtype=np.float64).reshape(-1)
        middle = 0.5 * (lo[axis] + hi[axis])
        first_hi, second_lo = hi.copy(), lo.copy()
        first_hi[axis] = middle - 0.5 * gap
        second_lo[axis] = middle + 0.5 * gap
        return (
            RegionService.make_box(lo, first_hi),
            RegionService.make_box(second_lo, hi),
        )

    @staticmethod
    def make_region(
        region_id: str,
        vertices: np.ndarray,
        equality: EqualityConstraint | None = None,
        inequality: InequalityConstraint | None = None,
    ) -> ConvexRegion:
        return ConvexRegion(
            id=region_id, vertices=vertices, equality=equality, inequality=inequality
        )

    @staticmethod
    def sample_interior(region: ConvexRegion, n: int, seed: int = 0) -> np.ndarray:
        """Random convex combinations of the vertices (normalized exponentials)."""
        if n < 1:
            raise InvalidValueError("n", n, "at least one sample is required")
        rng = np.random.default_rng(seed)
        weights = rng.exponential(size=(n, region.num_vertices))
        weights /= weights.sum(axis=1, keepdims=True)
        return weights @ region.vertices

    @staticmethod
    def constraint_residual(region: ConvexRegion, outputs: np.ndarray) -> float:
        """Worst |E y - f| and max(0, C y - d) over the rows of ``outputs``."""
        outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
        worst = 0.0
        if region.output_dim is not None and outputs.shape[1] != region.output_dim:
            raise DimensionMismatchError(
                f"outputs for region {region.id}", region.output_dim, outputs.shape[1]
            )
        if region.equality is not None:
            residual = outputs @ region.equality.e.T - region.equality.f
            worst = max(worst, float(np.max(np.abs(residual))))
        if region.inequality is not None:
            excess = outputs @ region.inequality.c.T - region.inequality.d
            worst = max(worst, float(np.max(np.maximum(excess, 0.0))))
        return worst

    @staticmethod
    def vertex_violation(region: ConvexRegion, outputs_at_vertices: np.ndarray) -> float:
        outputs = np.atleast_2d(np.asarray(outputs_at_vertices, dtype=np.float64))
        if outputs.shape[0] != region.num_vertices:
            raise DimensionMismatchError(
                f"vertex outputs for region {region.id}",
                region.num_vertices,
                outputs.shape[0],
            )
        return RegionService.constraint_residual(region, outputs)

    @staticmethod
    def _box_bounds(region: ConvexRegion) -> tuple[np.ndarray, np.ndarray] | None:
        vertices = region.vertices
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        on_corner = (vertices == lo) | (vertices == hi)
        free_axes = int(np.sum(hi > lo))
        if np.all(on_corner) and region.num_vertices == 2**free_axes:
            return lo, hi
        return None

    @staticmethod
    def _in_hull(vertices: np.ndarray, point: np.ndarray) -> bool:
        count = vertices.shape[0]
        result = linprog(
            c=np.zeros(count),
            A_eq=np.vstack([vertices.T, np.ones((1, count))]),
            b_eq=np.append(point, 1.0),
            bounds=(0, None),
            method="highs",
        )
        return result.status == 0

    @staticmethod
    def contains(region: ConvexRegion, points: np.ndarray) -> np.ndarray:
        """Closed-region membership mask for a stack of points.

        Axis-aligned boxes and intervals use coordinate bounds; any other
        vertex set solves a convex-combination feasibility LP per point.
        """
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, region.dim)
        if points.shape[1] != region.dim:
            raise DimensionMismatchError("points", region.dim, points.shape[1])

        bounds = RegionService._box_bounds(region)
        if bounds is not None:
            lo, hi = bounds
            return np.all(
                (points >= lo - MEMBERSHIP_TOLERANCE) & (points <= hi + MEMBERSHIP_TOLERANCE),
                axis=1,
            )
        return np.array(
            [RegionService._in_hull(region.vertices, point) for point in points],
            dtype=bool,
        )

    @staticmethod
    def check_disjoint(regions: RegionSet) -> list[tuple[str, str]]:
        """Pairs of regions whose convex hulls intersect (debug aid, one LP per pair)."""
        overlapping = []
        for first, second in itertools.combinations(regions.regions, 2):
            p, q = first.num_vertices, second.num_vertices
            a_eq = np.vstack(
                [
                    np.hstack([first.vertices.T, -second.vertices.T]),
                    np.hstack([np.ones((1, p)), np.zeros((1, q))]),
                    np.hstack([np.zeros((1, p)), np.ones((1, q))]),
                ]
            )
            b_eq = np.concatenate([np.zeros(first.dim), [1.0, 1.0]])
            result = linprog(
                c=np.zeros(p + q), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs"
            )
            if result.status == 0:
                overlapping.append((first.id, second.id))
        if overlapping:
            logger.warning(f"Overlapping region pairs: {overlapping}")
        return overlapping
