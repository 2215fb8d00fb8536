import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from affine_fence.core.logger import logger
from affine_fence.schemas.enforce_schemas import (
    BiasOnlyResult,
    EnforceConfig,
    EnforcementReport,
    QpFailure,
)
from affine_fence.schemas.network_schemas import MlpNetwork
from affine_fence.schemas.qp_schemas import QpSolution, QpStatusEnum
from affine_fence.schemas.region_schemas import RegionSet
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.services.exceptions import DimensionMismatchError
from affine_fence.services.network import NetworkService
from affine_fence.services.qpsolver import QpSolverService, get_qp_solver_service


def get_enforce_service() -> "EnforceService":
    return EnforceService(NetworkService())


class EnforceService:
    """Represents a service that moves hidden neurons until every region
    sits on its assigned side of each of them.

    Layers are processed in order. Layer l sees the region vertices pushed
    through layers 1..l-1 as already adjusted, and every neuron of layer l
    solves its own least-distance program against the pre-update row of that
    layer. Updates of one layer are applied together after all of its
    programs are solved.
    """

    def __init__(self, network_service: NetworkService) -> None:
        self._network_service = network_service

    @staticmethod
    def _check_map(net: MlpNetwork, regions: RegionSet, sign_map: SignMap) -> None:
        if regions.dim != net.input_dim:
            raise DimensionMismatchError("region dimension", net.input_dim, regions.dim)
        if set(sign_map.region_ids) != set(regions.ids):
            raise DimensionMismatchError("sign map regions", regions.ids, sign_map.region_ids)
        for region_id in regions.ids:
            widths = [len(signs) for signs in sign_map.pattern(region_id)]
            if widths != net.hidden_widths:
                raise DimensionMismatchError(
                    f"sign pattern of region {region_id}", net.hidden_widths, widths
                )

    @staticmethod
    def _stacked_signs(
        regions: RegionSet, sign_map: SignMap, layer_index: int
    ) -> np.ndarray:
        return np.vstack(
            [
                np.broadcast_to(
                    sign_map.pattern(region.id)[layer_index].astype(np.float64),
                    (region.num_vertices, len(sign_map.pattern(region.id)[layer_index])),
                )
                for region in regions.regions
            ]
        )

    def _layer_inputs(
        self, net: MlpNetwork, vertices: np.ndarray, layer_index: int
    ) -> np.ndarray:
        if layer_index == 0:
            return vertices
        _, trace = self._network_service.forward_trace(net, vertices)
        return trace.post_activations[layer_index - 1]

    @staticmethod
    def _solve_layer(
        solver: QpSolverService,
        weights: np.ndarray,
        biases: np.ndarray,
        inputs: np.ndarray,
        signs: np.ndarray,
        margin: float,
        jobs: int,
    ) -> list[QpSolution]:
        def solve(neuron: int) -> QpSolution:
            qp = solver.build_neuron_qp(
                weights[neuron], biases[neuron], inputs, signs[:, neuron], margin
            )
            return solver.solve_least_distance(qp)

        neurons = range(weights.shape[0])
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as executor:
                return list(executor.map(solve, neurons))
        return [solve(neuron) for neuron in neurons]

    def enforce_signs(
        self,
        net: MlpNetwork,
        regions: RegionSet,
        sign_map: SignMap,
        cfg: EnforceConfig | None = None,
    ) -> tuple[MlpNetwork, EnforcementReport]:
        """Apply the minimal (dw, db) per hidden neuron that realizes ``sign_map``.

        Args:
            net (MlpNetwork): Network to adjust; never modified.
            regions (RegionSet): Regions whose vertices carry the constraints.
            sign_map (SignMap): Required sign per region, layer and neuron.
            cfg (EnforceConfig | None, optional): Margin and solver settings.
                Defaults to ``EnforceConfig()``.

        Raises:
            DimensionMismatchError: If the map or the regions do not fit the
                network.

        Returns:
            tuple[MlpNetwork, EnforcementReport]: The adjusted copy and its
            report. When any program fails the original ``net`` is returned
            and the report lists the failing neurons.
        """
        cfg = cfg or EnforceConfig()
        self._check_map(net, regions, sign_map)
        solver = get_qp_solver_service(cfg.qp_tolerance, cfg.qp_max_iter)
        adjusted = net.clone()
        vertices = regions.stacked_vertices()
        report = EnforcementReport()

        for layer_index in range(net.num_hidden):
            start = time.perf_counter()
            layer = adjusted.layers[layer_index]
            inputs = self._layer_inputs(adjusted, vertices, layer_index)
            signs = self._stacked_signs(regions, sign_map, layer_index)
            solutions = self._solve_layer(
                solver,
                layer.weights.copy(),
                layer.biases.copy(),
                inputs,
                signs,
                cfg.margin,
                cfg.jobs,
            )

            failures = [
                QpFailure(
                    layer=layer_index,
                    neuron=neuron,
                    status=solution.status,
                    residual=solution.max_constraint_residual,
                )
                for neuron, solution in enumerate(solutions)
                if solution.status != QpStatusEnum.OPTIMAL
            ]
            if failures:
                report.qp_failures.extend(failures)
                report.layer_wall_times.append(time.perf_counter() - start)
                logger.warning(
                    f"Enforcement aborted in layer {layer_index}: "
                    f"{len(failures)} neuron program(s) failed"
                )
                return net, report

            norms = []
            for neuron, solution in enumerate(solutions):
                norm = solution.norm
                norms.append(norm)
                if norm > 0.0:
                    layer.weights[neuron] += solution.u[:-1]
                    layer.biases[neuron] += solution.u[-1]
            report.adjustment_norms.append(norms)
            report.layer_wall_times.append(time.perf_counter() - start)
            logger.debug(
                f"Layer {layer_index}: {int(np.count_nonzero(norms))} of "
                f"{len(norms)} neurons moved in {report.layer_wall_times[-1]:.4f}s"
            )

        report.total_shift = float(
            np.sqrt(sum(float(np.sum(np.square(norms))) for norms in report.adjustment_norms))
        )
        report.worst_margin_deficit = max(
            0.0, -self.verify_margins(adjusted, regions, sign_map, cfg.margin)
        )
        logger.info(
            f"Enforced {len(regions)} region pattern(s) on {net.num_hidden} layer(s); "
            f"total shift {report.total_shift:.3e}"
        )
        return adjusted, report

    def enforce_bias_only(
        self, net: MlpNetwork, regions: RegionSet, sign_map: SignMap, delta: float = 0.0
    ) -> BiasOnlyResult:
        """Try to realize ``sign_map`` by moving biases alone.

        Each bias is clipped into its admissible interval, which is the
        smallest possible shift.

        Returns:
            BiasOnlyResult: The adjusted network, or the first neuron whose
            interval is empty together with its bounds.
        """
        self._check_map(net, regions, sign_map)
        adjusted = net.clone()
        vertices = regions.stacked_vertices()
        for layer_index in range(net.num_hidden):
            layer = adjusted.layers[layer_index]
            inputs = self._layer_inputs(adjusted, vertices, layer_index)
            signs = self._stacked_signs(regions, sign_map, layer_index)
            for neuron in range(layer.out_dim):
                bounds = QpSolverService.bias_feasible(
                    layer.weights[neuron], inputs, signs[:, neuron], delta
                )
                if not bounds.feasible:
                    logger.info(
                        f"Bias-only adjustment infeasible at layer {layer_index}, "
                        f"neuron {neuron}: b >= {bounds.lower} and b <= {bounds.upper}"
                    )
                    return BiasOnlyResult(
                        feasible=False,
                        conflict_layer=layer_index,
                        conflict_neuron=neuron,
                        bounds=bounds,
                    )
                lower = -np.inf if bounds.lower is None else bounds.lower
                upper = np.inf if bounds.upper is None else bounds.upper
                layer.biases[neuron] = float(np.clip(layer.biases[neuron], lower, upper))
        return BiasOnlyResult(feasible=True, network=adjusted)

    def margins_by_region(
        self, net: MlpNetwork, regions: RegionSet, sign_map: SignMap, delta: float = 0.0
    ) -> dict[str, float]:
        """Minimum of sign * z - delta over every vertex, neuron and layer, per region."""
        margins = {}
        for region in regions.regions:
            pre_activations = self._network_service.hidden_pre_activations(
                net, region.vertices
            )
            margins[region.id] = min(
                float(np.min(signs.astype(np.float64) * z))
                for signs, z in zip(sign_map.pattern(region.id), pre_activations)
            ) - delta
        return margins

    def verify_margins(
        self, net: MlpNetwork, regions: RegionSet, sign_map: SignMap, delta: float = 0.0
    ) -> float:
        self._check_map(net, regions, sign_map)
        return min(self.margins_by_region(net, regions, sign_map, delta).values())
