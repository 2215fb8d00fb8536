import numpy as np
from pydantic import ConfigDict, RootModel

from affine_fence.schemas.array_types import FloatArray, SignArray


class SignMap(RootModel):
    """Region id -> per-hidden-layer ±1 vectors, in region order."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    root: dict[str, list[SignArray]]

    @property
    def region_ids(self) -> list[str]:
        return list(self.root.keys())

    def pattern(self, region_id: str) -> list[np.ndarray]:
        return self.root[region_id]

    def global_pattern(self, region_id: str) -> np.ndarray:
        return np.concatenate(self.root[region_id])

    def clone(self) -> "SignMap":
        return SignMap(
            {key: [signs.copy() for signs in layers] for key, layers in self.root.items()}
        )


class RegionPreActivations(RootModel):
    """Region id -> per-hidden-layer (P_i x width) vertex pre-activations."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    root: dict[str, list[FloatArray]]

    @property
    def region_ids(self) -> list[str]:
        return list(self.root.keys())

    def layers(self, region_id: str) -> list[np.ndarray]:
        return self.root[region_id]
