import numpy as np
from pydantic import BaseModel, ConfigDict, Field, RootModel, model_validator

from affine_fence.schemas.array_types import FiniteArray, FloatArray, SignArray


class LayerParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: FiniteArray
    biases: FiniteArray

    @model_validator(mode="after")
    def check_shapes(self):
        if self.weights.ndim != 2:
            raise ValueError("weights must be a matrix (out_dim x in_dim).")
        if self.biases.ndim != 1:
            raise ValueError("biases must be a vector.")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ValueError(
                f"weights have {self.weights.shape[0]} rows "
                f"but biases have {self.biases.shape[0]} entries."
            )
        return self

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class MlpNetwork(BaseModel):
    """Layered affine maps with a leaky/pure ReLU between them.

    The last layer is affine only. Parameters may be updated in place by the
    optimizer and the enforcement service; everything else treats the
    network as read-only.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    layers: list[LayerParams] = Field(..., min_length=2)
    activation_slope: float = Field(0.01, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def check_chain(self):
        for index in range(1, len(self.layers)):
            previous, current = self.layers[index - 1], self.layers[index]
            if current.in_dim != previous.out_dim:
                raise ValueError(
                    f"layer {index} expects {current.in_dim} inputs "
                    f"but layer {index - 1} produces {previous.out_dim}."
                )
        return self

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    @property
    def hidden_widths(self) -> list[int]:
        return [layer.out_dim for layer in self.layers[:-1]]

    @property
    def num_hidden(self) -> int:
        return len(self.layers) - 1

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in the order W1, b1, W2, b2, ..."""
        params = []
        for layer in self.layers:
            params.extend([layer.weights, layer.biases])
        return params

    def clone(self) -> "MlpNetwork":
        return self.model_copy(deep=True)

    def load_parameters(self, params: list[np.ndarray]) -> None:
        for layer, weights, biases in zip(self.layers, params[0::2], params[1::2]):
            layer.weights[...] = weights
            layer.biases[...] = biases


class ForwardTrace(BaseModel):
    """Per-layer z and x for one point or a stacked batch (rows = points)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    inputs: FloatArray
    pre_activations: list[FloatArray]
    post_activations: list[FloatArray]


class GradientSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weight_grads: list[FloatArray]
    bias_grads: list[FloatArray]

    def as_list(self) -> list[np.ndarray]:
        grads = []
        for weight_grad, bias_grad in zip(self.weight_grads, self.bias_grads):
            grads.extend([weight_grad, bias_grad])
        return grads

    def scaled_sum(self, other: "GradientSet", scale: float) -> "GradientSet":
        return GradientSet(
            weight_grads=[
                own + scale * theirs
                for own, theirs in zip(self.weight_grads, other.weight_grads)
            ],
            bias_grads=[
                own + scale * theirs
                for own, theirs in zip(self.bias_grads, other.bias_grads)
            ],
        )


class ActivationPattern(RootModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    root: list[SignArray]

    def __len__(self) -> int:
        return len(self.root)

    def __getitem__(self, layer: int) -> np.ndarray:
        return self.root[layer]

    def flat(self) -> np.ndarray:
        return np.concatenate(self.root)
