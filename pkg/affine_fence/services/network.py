import numpy as np

from affine_fence.core.logger import logger
from affine_fence.schemas.network_schemas import (
    ActivationPattern,
    ForwardTrace,
    GradientSet,
    LayerParams,
    MlpNetwork,
)
from affine_fence.services.exceptions import (
    DimensionMismatchError,
    InvalidNetworkError,
)


class NetworkService:
    """Represents a service for evaluating and differentiating MLP networks.

    Every evaluation accepts a single point (shape ``(D,)``) or a stacked
    batch (shape ``(n, D)``); batches go through the layers as one matrix
    product per layer.
    """

    @staticmethod
    def init_network(
        dims: list[int], activation_slope: float = 0.01, seed: int = 0
    ) -> MlpNetwork:
        """Create a network with He-scaled Gaussian weights and zero biases.

        Args:
            dims (list[int]): Layer widths, input first and output last.
            activation_slope (float, optional): Leak slope; 0 is pure ReLU.
                Defaults to 0.01.
            seed (int, optional): Generator seed. Defaults to 0.

        Raises:
            InvalidNetworkError: If there is no hidden layer or a width is not
                positive.

        Returns:
            MlpNetwork: The new network.
        """
        if len(dims) < 3:
            raise InvalidNetworkError(
                f"dims {list(dims)} describe no hidden layer; at least 3 are needed"
            )
        if any(int(width) <= 0 for width in dims):
            raise InvalidNetworkError(f"dims {list(dims)} must all be positive")

        rng = np.random.default_rng(seed)
        layers = [
            LayerParams(
                weights=rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in),
                biases=np.zeros(fan_out),
            )
            for fan_in, fan_out in zip(dims[:-1], dims[1:])
        ]
        logger.debug(f"Initialized network {list(dims)} with seed {seed}")
        return MlpNetwork(layers=layers, activation_slope=activation_slope)

    @staticmethod
    def activate(z: np.ndarray, slope: float) -> np.ndarray:
        return np.where(z >= 0.0, z, slope * z)

    @staticmethod
    def gain(z: np.ndarray, slope: float) -> np.ndarray:
        # zeros take the positive branch
        return np.where(z >= 0.0, 1.0, slope)

    @staticmethod
    def _check_input(net: MlpNetwork, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != net.input_dim or x.ndim > 2:
            raise DimensionMismatchError("network input", net.input_dim, x.shape)
        return x

    @staticmethod
    def forward(net: MlpNetwork, x) -> np.ndarray:
        x = NetworkService._check_input(net, x)
        slope = net.activation_slope
        for layer in net.layers[:-1]:
            x = NetworkService.activate(x @ layer.weights.T + layer.biases, slope)
        last = net.layers[-1]
        return x @ last.weights.T + last.biases

    @staticmethod
    def forward_trace(net: MlpNetwork, x) -> tuple[np.ndarray, ForwardTrace]:
        x = NetworkService._check_input(net, x)
        slope = net.activation_slope
        pre_activations, post_activations = [], []
        current = x
        for index, layer in enumerate(net.layers):
            z = current @ layer.weights.T + layer.biases
            is_hidden = index < net.num_hidden
            current = NetworkService.activate(z, slope) if is_hidden else z
            pre_activations.append(z)
            post_activations.append(current)
        trace = ForwardTrace(
            inputs=x,
            pre_activations=pre_activations,
            post_activations=post_activations,
        )
        return current, trace

    @staticmethod
    def backward(
        net: MlpNetwork, trace: ForwardTrace, output_grad: np.ndarray
    ) -> GradientSet:
        """Backpropagate an output gradient through a recorded trace.

        For a batched trace, ``output_grad`` has one row per point and the
        returned gradients are summed over the batch.

        Args:
            net (MlpNetwork): The network the trace was recorded on.
            trace (ForwardTrace): Result of ``forward_trace``.
            output_grad (np.ndarray): dLoss/dOutput, shaped like the output.

        Raises:
            DimensionMismatchError: If the gradient or trace shapes disagree
                with the network.

        Returns:
            GradientSet: Gradients for every weight matrix and bias vector.
        """
        output = trace.post_activations[-1]
        output_grad = np.asarray(output_grad, dtype=np.float64)
        if output_grad.shape != output.shape:
            raise DimensionMismatchError("output gradient", output.shape, output_grad.shape)
        if len(trace.pre_activations) != len(net.layers):
            raise DimensionMismatchError(
                "trace layers", len(net.layers), len(trace.pre_activations)
            )

        batched = output_grad.ndim == 2
        delta = output_grad
        weight_grads, bias_grads = [], []
        for index in range(len(net.layers) - 1, -1, -1):
            layer_input = trace.inputs if index == 0 else trace.post_activations[index - 1]
            if batched:
                weight_grads.append(delta.T @ layer_input)
                bias_grads.append(delta.sum(axis=0))
            else:
                weight_grads.append(np.outer(delta, layer_input))
                bias_grads.append(delta.copy())
            if index > 0:
                gain = NetworkService.gain(
                    trace.pre_activations[index - 1], net.activation_slope
                )
                delta = (delta @ net.layers[index].weights) * gain
        return GradientSet(weight_grads=weight_grads[::-1], bias_grads=bias_grads[::-1])

    @staticmethod
    def zero_gradients(net: MlpNetwork) -> GradientSet:
        return GradientSet(
            weight_grads=[np.zeros_like(layer.weights) for layer in net.layers],
            bias_grads=[np.zeros_like(layer.biases) for layer in net.layers],
        )

    @staticmethod
    def hidden_pre_activations(net: MlpNetwork, points) -> list[np.ndarray]:
        _, trace = NetworkService.forward_trace(net, points)
        return trace.pre_activations[:-1]

    @staticmethod
    def activation_signs(net: MlpNetwork, points) -> list[np.ndarray]:
        """Per-hidden-layer sign arrays (int8, zeros mapped to +1)."""
        return [
            np.where(z >= 0.0, 1, -1).astype(np.int8)
            for z in NetworkService.hidden_pre_activations(net, points)
        ]

    @staticmethod
    def activation_pattern_at(net: MlpNetwork, x) -> ActivationPattern:
        x = NetworkService._check_input(net, x)
        if x.ndim != 1:
            raise DimensionMismatchError("query point", (net.input_dim,), x.shape)
        return ActivationPattern(NetworkService.activation_signs(net, x))

    @staticmethod
    def extract_affine(
        net: MlpNetwork, pattern: ActivationPattern | list[np.ndarray]
    ) -> tuple[np.ndarray, np.ndarray]:
        """Compose the affine map the network realizes on one activation polytope.

        Args:
            net (MlpNetwork): The network.
            pattern (ActivationPattern | list[np.ndarray]): One ±1 vector per
                hidden layer.

        Raises:
            DimensionMismatchError: If the pattern does not match the hidden
                layer widths.

        Returns:
            tuple[np.ndarray, np.ndarray]: ``(Lambda, gamma)`` with
            ``Lambda`` of shape (K, D) and ``gamma`` of length K.
        """
        signs = pattern.root if isinstance(pattern, ActivationPattern) else pattern
        widths = [len(layer_signs) for layer_signs in signs]
        if widths != net.hidden_widths:
            raise DimensionMismatchError("activation pattern", net.hidden_widths, widths)

        first = net.layers[0]
        linear, offset = first.weights.copy(), first.biases.copy()
        for layer_signs, layer in zip(signs, net.layers[1:]):
            gains = np.where(np.asarray(layer_signs) > 0, 1.0, net.activation_slope)
            linear = layer.weights @ (gains[:, None] * linear)
            offset = layer.weights @ (gains * offset) + layer.biases
        return linear, offset
