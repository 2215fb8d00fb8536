import numpy as np

from affine_fence.core.logger import logger
from affine_fence.schemas.network_schemas import MlpNetwork
from affine_fence.schemas.region_schemas import RegionSet
from affine_fence.schemas.sign_schemas import RegionPreActivations, SignMap
from affine_fence.schemas.trainer_schemas import SignMethodEnum
from affine_fence.services.exceptions import DimensionMismatchError, SignRepairError
from affine_fence.services.network import NetworkService


def get_sign_service() -> "SignService":
    return SignService(NetworkService())


class SignService:
    """Represents a service for assigning and repairing region sign patterns."""

    def __init__(self, network_service: NetworkService) -> None:
        self._network_service = network_service

    def propagate_vertices(
        self, net: MlpNetwork, regions: RegionSet
    ) -> RegionPreActivations:
        """Vertex pre-activations of every hidden layer under the current parameters.

        Args:
            net (MlpNetwork): The network.
            regions (RegionSet): Regions whose vertices to push through.

        Raises:
            DimensionMismatchError: If the vertex dimension is not the input
                dimension of the network.

        Returns:
            RegionPreActivations: One (P_i x width) matrix per hidden layer
            and region.
        """
        preacts = {}
        for region in regions.regions:
            if region.dim != net.input_dim:
                raise DimensionMismatchError(
                    f"vertices of region {region.id}", net.input_dim, region.dim
                )
            preacts[region.id] = self._network_service.hidden_pre_activations(
                net, region.vertices
            )
        return RegionPreActivations(preacts)

    @staticmethod
    def _mean_signs(z: np.ndarray) -> np.ndarray:
        return np.where(z.mean(axis=0) >= 0.0, 1, -1).astype(np.int8)

    @staticmethod
    def _majority_signs(z: np.ndarray) -> np.ndarray:
        # zeros count as positive; exact ties defer to the mean rule
        positive = np.count_nonzero(z >= 0.0, axis=0)
        negative = z.shape[0] - positive
        signs = np.where(positive > negative, 1, -1).astype(np.int8)
        ties = positive == negative
        signs[ties] = SignService._mean_signs(z)[ties]
        return signs

    def assign_majority(self, preacts: RegionPreActivations) -> SignMap:
        return SignMap(
            {
                region_id: [self._majority_signs(z) for z in layers]
                for region_id, layers in preacts.root.items()
            }
        )

    def assign_mean(self, preacts: RegionPreActivations) -> SignMap:
        return SignMap(
            {
                region_id: [self._mean_signs(z) for z in layers]
                for region_id, layers in preacts.root.items()
            }
        )

    def assign(self, preacts: RegionPreActivations, method: SignMethodEnum) -> SignMap:
        if SignMethodEnum(method) == SignMethodEnum.MAJORITY:
            return self.assign_majority(preacts)
        return self.assign_mean(preacts)

    @staticmethod
    def _first_duplicate(sign_map: SignMap) -> tuple[str, str] | None:
        seen: dict[bytes, str] = {}
        for region_id in sign_map.region_ids:
            key = sign_map.global_pattern(region_id).tobytes()
            if key in seen:
                return seen[key], region_id
            seen[key] = region_id
        return None

    def ensure_unique(
        self, sign_map: SignMap, preacts: RegionPreActivations
    ) -> SignMap:
        """Flip single neurons until every region has its own global pattern.

        The later region of a duplicated pair gets the flip. Candidates are
        taken layer by layer from the first hidden layer, smallest
        |mean vertex pre-activation| first, never flipping a neuron twice.

        Args:
            sign_map (SignMap): Assigned patterns.
            preacts (RegionPreActivations): The pre-activations the map was
                assigned from.

        Raises:
            SignRepairError: If a region runs out of neurons to flip.

        Returns:
            SignMap: A repaired copy; the input is left untouched.
        """
        repaired = sign_map.clone()
        flipped: dict[str, list[set[int]]] = {
            region_id: [set() for _ in layers]
            for region_id, layers in repaired.root.items()
        }
        while (pair := self._first_duplicate(repaired)) is not None:
            kept_id, target_id = pair
            for layer_index, z in enumerate(preacts.layers(target_id)):
                magnitudes = np.abs(z.mean(axis=0))
                magnitudes[list(flipped[target_id][layer_index])] = np.inf
                if np.isinf(magnitudes).all():
                    continue
                neuron = int(np.argmin(magnitudes))
                repaired.root[target_id][layer_index][neuron] *= -1
                flipped[target_id][layer_index].add(neuron)
                logger.debug(
                    f"Region {target_id} duplicated {kept_id}; flipped layer "
                    f"{layer_index} neuron {neuron}"
                )
                break
            else:
                raise SignRepairError((kept_id, target_id))
        return repaired

    @staticmethod
    def patterns_distinct(sign_map: SignMap) -> bool:
        return SignService._first_duplicate(sign_map) is None

    def police_pattern(self, net: MlpNetwork, regions: RegionSet) -> list[np.ndarray]:
        """One shared pattern for the union of all vertices (single-region choice)."""
        layers = self._network_service.hidden_pre_activations(
            net, regions.stacked_vertices()
        )
        return [self._majority_signs(z) for z in layers]
