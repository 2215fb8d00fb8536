import numpy as np

from affine_fence.core.config import config
from affine_fence.core.linalg import least_squares
from affine_fence.core.logger import logger
from affine_fence.schemas.network_schemas import ActivationPattern, MlpNetwork
from affine_fence.schemas.region_schemas import ConvexRegion
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.schemas.verifier_schemas import AffinityReport, HullReport
from affine_fence.services.exceptions import (
    DimensionMismatchError,
    InvalidValueError,
    PatternMismatchError,
    RankDeficientError,
)
from affine_fence.services.network import NetworkService
from affine_fence.services.regions import RegionService
from affine_fence.services.signs import SignService

# points on a neuron boundary (margin zero) match either sign up to this relative slack
PATTERN_TOLERANCE = 1e-9


def get_verifier_service() -> "VerifierService":
    return VerifierService(NetworkService(), RegionService())


class VerifierService:
    """Represents a service that certifies localized affine behavior by sampling."""

    def __init__(self, network_service: NetworkService, region_service: RegionService) -> None:
        self._network_service = network_service
        self._region_service = region_service

    @staticmethod
    def _flat(pattern: ActivationPattern | list[np.ndarray]) -> np.ndarray:
        layers = pattern.root if isinstance(pattern, ActivationPattern) else pattern
        return np.concatenate([np.asarray(signs, dtype=np.int8) for signs in layers])

    def _sample_signs(self, net: MlpNetwork, points: np.ndarray) -> np.ndarray:
        return np.hstack(self._network_service.activation_signs(net, points))

    def _points_match(
        self, net: MlpNetwork, points: np.ndarray, expected: np.ndarray
    ) -> np.ndarray:
        pre_activations = np.hstack(
            self._network_service.hidden_pre_activations(net, points)
        )
        scale = 1.0 + np.max(np.abs(pre_activations))
        slack = expected[None, :] * pre_activations
        return np.all(slack >= -PATTERN_TOLERANCE * scale, axis=1)

    def _pattern_constant(
        self, net: MlpNetwork, samples: np.ndarray, vertices: np.ndarray, reference: np.ndarray
    ) -> bool:
        return bool(
            self._points_match(net, samples, reference).all()
            and self._points_match(net, vertices, reference).all()
        )

    @staticmethod
    def _fit_affine(
        points: np.ndarray, outputs: np.ndarray, full_rank: bool = True
    ) -> tuple[np.ndarray, np.ndarray]:
        design = np.hstack([points, np.ones((points.shape[0], 1))])
        if full_rank:
            solution = least_squares(design, outputs)
        else:
            # minimum-norm fit; exact on the affine hull of a degenerate set
            solution = np.linalg.lstsq(design, outputs, rcond=None)[0]
        return solution[:-1].T, solution[-1]

    @staticmethod
    def _relative_residual(predicted: np.ndarray, outputs: np.ndarray) -> float:
        scale = 1.0 + float(np.max(np.abs(outputs)))
        return float(np.max(np.abs(predicted - outputs))) / scale

    def certify_region(
        self,
        net: MlpNetwork,
        region: ConvexRegion,
        expected_pattern: ActivationPattern | list[np.ndarray],
        n_samples: int | None = None,
        seed: int = 0,
    ) -> AffinityReport:
        """Check that ``region`` lies in the polytope of ``expected_pattern``.

        Every interior sample and every vertex must realize the pattern; a
        pre-activation within rounding of zero matches either sign. The network
        is then compared with an affine least-squares fit and with the
        closed-form map of the pattern.

        Args:
            net (MlpNetwork): The network.
            region (ConvexRegion): The region to certify.
            expected_pattern (ActivationPattern | list[np.ndarray]): Assigned
                signs per hidden layer.
            n_samples (int | None, optional): Interior samples. Defaults to
                ``config.verify_samples``.
            seed (int, optional): Sampling seed. Defaults to 0.

        Raises:
            InvalidValueError: If fewer than P + D + 1 samples are requested.

        Returns:
            AffinityReport: The certificate, with the first mismatching sample
            as a counterexample when the pattern is not constant.
        """
        n_samples = config.verify_samples if n_samples is None else n_samples
        minimum = region.num_vertices + region.dim + 1
        if n_samples < minimum:
            raise InvalidValueError("n_samples", n_samples, f"at least {minimum} are needed")
        if region.dim != net.input_dim:
            raise DimensionMismatchError("region dimension", net.input_dim, region.dim)

        expected = self._flat(expected_pattern)
        samples = self._region_service.sample_interior(region, n_samples, seed)
        sample_signs = self._sample_signs(net, samples)
        if sample_signs.shape[1] != expected.shape[0]:
            raise DimensionMismatchError(
                "expected pattern", sample_signs.shape[1], expected.shape[0]
            )

        mismatched = ~self._points_match(net, samples, expected)
        vertex_match = self._points_match(net, region.vertices, expected)
        if not mismatched.any() and vertex_match.all():
            pattern_constant = True
        else:
            pattern_constant = self._pattern_constant(
                net, samples, region.vertices, sample_signs[0]
            )
        counterexample = None
        if mismatched.any():
            counterexample = samples[int(np.argmax(mismatched))].tolist()
        elif not vertex_match.all():
            counterexample = region.vertices[int(np.argmin(vertex_match))].tolist()

        vertex_outputs = self._network_service.forward(net, region.vertices)
        sample_outputs = self._network_service.forward(net, samples)
        fit_on_samples = False
        try:
            linear, offset = self._fit_affine(region.vertices, vertex_outputs)
        except (RankDeficientError, DimensionMismatchError):
            fit_on_samples = True
            linear, offset = self._fit_affine(
                np.vstack([region.vertices, samples]),
                np.vstack([vertex_outputs, sample_outputs]),
                full_rank=False,
            )
        affine_residual = self._relative_residual(samples @ linear.T + offset, sample_outputs)

        closed_form_residual = None
        if not mismatched.any():
            closed_linear, closed_offset = self._network_service.extract_affine(
                net, self._split(net, expected)
            )
            closed_form_residual = self._relative_residual(
                samples @ closed_linear.T + closed_offset, sample_outputs
            )

        report = AffinityReport(
            region_id=region.id,
            pattern_constant=pattern_constant,
            assigned_pattern_matched=bool(not mismatched.any() and vertex_match.all()),
            affine_residual=affine_residual,
            closed_form_residual=closed_form_residual,
            sampled_constraint_violation=self._region_service.constraint_residual(
                region, sample_outputs
            )
            if region.has_constraints
            else 0.0,
            samples_used=n_samples,
            mismatched_samples=int(mismatched.sum()),
            fit_on_samples=fit_on_samples,
            counterexample=counterexample,
        )
        logger.debug(
            f"Region {region.id}: certified={report.certified}, "
            f"residual {affine_residual:.3e}, mismatches {report.mismatched_samples}"
        )
        return report

    @staticmethod
    def _split(net: MlpNetwork, flat: np.ndarray) -> list[np.ndarray]:
        bounds = np.cumsum(net.hidden_widths)[:-1]
        return np.split(flat, bounds)

    @staticmethod
    def certify_distinct(sign_map: SignMap) -> bool:
        return SignService.patterns_distinct(sign_map)

    def hull_check(
        self,
        net: MlpNetwork,
        region_a: ConvexRegion,
        region_b: ConvexRegion,
        n_samples: int | None = None,
        seed: int = 0,
    ) -> HullReport:
        """Sample the convex hull of two regions and test for one shared polytope.

        Returns:
            HullReport: Whether hull samples and both vertex sets share one
            pattern, and the affine-fit residual over the hull samples.
        """
        if region_a.dim != region_b.dim:
            raise DimensionMismatchError("hull regions", region_a.dim, region_b.dim)
        n_samples = config.verify_samples if n_samples is None else n_samples
        union = ConvexRegion(
            id=f"{region_a.id}|{region_b.id}",
            vertices=np.vstack([region_a.vertices, region_b.vertices]),
        )
        samples = self._region_service.sample_interior(union, n_samples, seed)
        sample_signs = self._sample_signs(net, samples)
        constant = self._pattern_constant(net, samples, union.vertices, sample_signs[0])

        outputs = self._network_service.forward(net, samples)
        linear, offset = self._fit_affine(samples, outputs, full_rank=False)
        residual = self._relative_residual(samples @ linear.T + offset, outputs)
        return HullReport(
            region_ids=(region_a.id, region_b.id),
            hull_pattern_constant=constant,
            hull_affine_residual=residual,
            samples_used=n_samples,
        )

    def extract_region_affine(
        self,
        net: MlpNetwork,
        region: ConvexRegion,
        expected_pattern: ActivationPattern | list[np.ndarray],
    ) -> tuple[np.ndarray, np.ndarray]:
        """Closed-form (Lambda, gamma) of ``net`` on ``region``.

        Raises:
            PatternMismatchError: If a vertex is on the wrong side of a neuron.
        """
        expected = self._flat(expected_pattern)
        matches = self._points_match(net, region.vertices, expected)
        if not matches.all():
            raise PatternMismatchError(
                region.id, region.vertices[int(np.argmin(matches))].tolist()
            )
        return self._network_service.extract_affine(net, self._split(net, expected))
