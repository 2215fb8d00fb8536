from pydantic import BaseModel, ConfigDict, Field, model_validator

from affine_fence.schemas.network_schemas import LayerParams, MlpNetwork
from affine_fence.schemas.region_schemas import ConvexRegion
from affine_fence.schemas.sign_schemas import SignMap

MODEL_SCHEMA_VERSION = 1


class ModelFile(BaseModel):
    """On-disk network; floats are written in shortest round-trip form."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    schema_version: int = MODEL_SCHEMA_VERSION
    activation_slope: float = Field(..., ge=0.0, lt=1.0)
    dims: list[int]
    layers: list[LayerParams] = Field(..., min_length=2)
    sign_map: SignMap | None = None
    regions: list[ConvexRegion] | None = None

    @model_validator(mode="after")
    def check_dims(self):
        if self.schema_version != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {self.schema_version}.")
        layer_dims = [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]
        if layer_dims != self.dims:
            raise ValueError(f"dims {self.dims} do not match the layers {layer_dims}.")
        return self

    @classmethod
    def from_network(
        cls,
        net: MlpNetwork,
        sign_map: SignMap | None = None,
        regions: list[ConvexRegion] | None = None,
    ) -> "ModelFile":
        return cls(
            activation_slope=net.activation_slope,
            dims=net.dims,
            layers=[layer.model_copy(deep=True) for layer in net.layers],
            sign_map=sign_map,
            regions=regions,
        )

    def to_network(self) -> MlpNetwork:
        return MlpNetwork(
            layers=[layer.model_copy(deep=True) for layer in self.layers],
            activation_slope=self.activation_slope,
        )
