import os

os.environ.setdefault("AFFINE_FENCE_LOG_TO_STDERR", "false")
os.environ.setdefault("AFFINE_FENCE_LOG_DIR", os.path.join("logs", "tests"))

import numpy as np
import pytest

from affine_fence.schemas.network_schemas import LayerParams, MlpNetwork
from affine_fence.schemas.region_schemas import RegionSet
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.services.enforce import EnforceService
from affine_fence.services.experiments import ExperimentService, get_experiment_service
from affine_fence.services.network import NetworkService
from affine_fence.services.qpsolver import QpSolverService
from affine_fence.services.regions import RegionService
from affine_fence.services.signs import SignService
from affine_fence.services.trainer import TrainerService, get_trainer_service
from affine_fence.services.verifier import VerifierService, get_verifier_service
from tests import payload


def numeric_gradient(loss, params: list[np.ndarray], step: float = 1e-6) -> list[np.ndarray]:
    """Central differences of ``loss()`` with respect to every entry of ``params``."""
    grads = []
    for param in params:
        grad = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + step
            upper = loss()
            param[index] = original - step
            lower = loss()
            param[index] = original
            grad[index] = (upper - lower) / (2 * step)
        grads.append(grad)
    return grads


def relative_error(first: list[np.ndarray], second: list[np.ndarray]) -> float:
    a = np.concatenate([array.ravel() for array in first])
    b = np.concatenate([array.ravel() for array in second])
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def scalar_network(weight: float, bias: float, slope: float = 0.0) -> MlpNetwork:
    return MlpNetwork(
        layers=[
            LayerParams(weights=[[weight]], biases=[bias]),
            LayerParams(weights=[[1.0]], biases=[0.0]),
        ],
        activation_slope=slope,
    )


def interval_regions(*intervals: tuple[float, float]) -> RegionSet:
    return RegionSet(
        regions=[
            RegionService.make_region(f"R{index + 1}", RegionService.make_interval(*bounds))
            for index, bounds in enumerate(intervals)
        ]
    )


@pytest.fixture
def network_service() -> NetworkService:
    return NetworkService()


@pytest.fixture
def region_service() -> RegionService:
    return RegionService()


@pytest.fixture
def sign_service(network_service) -> SignService:
    return SignService(network_service)


@pytest.fixture
def enforce_service(network_service) -> EnforceService:
    return EnforceService(network_service)


@pytest.fixture
def qp_solver() -> QpSolverService:
    return QpSolverService(tolerance=1e-10, max_iter=100_000)


@pytest.fixture
def trainer_service() -> TrainerService:
    return get_trainer_service()


@pytest.fixture
def verifier_service() -> VerifierService:
    return get_verifier_service()


@pytest.fixture
def experiment_service() -> ExperimentService:
    return get_experiment_service()


@pytest.fixture
def small_net(network_service) -> MlpNetwork:
    return network_service.init_network([2, 8, 8, 1], seed=3)


@pytest.fixture
def deep_net(network_service) -> MlpNetwork:
    return network_service.init_network([2, 16, 16, 16, 1], seed=11)


@pytest.fixture
def box_regions() -> RegionSet:
    return RegionSet(
        regions=[
            RegionService.make_region(
                name, RegionService.make_box(box["lo"], box["hi"])
            )
            for name, box in (
                ("A", payload.box_a),
                ("B", payload.box_b),
                ("C", payload.box_c),
            )
        ]
    )


@pytest.fixture
def bias_only_regions() -> RegionSet:
    return interval_regions(
        payload.bias_only_positive_interval, payload.bias_only_negative_interval
    )


@pytest.fixture
def bias_only_sign_map() -> SignMap:
    return SignMap({"R1": [[1]], "R2": [[-1]]})


@pytest.fixture
def unique_sign_map(sign_service, deep_net, box_regions) -> SignMap:
    preacts = sign_service.propagate_vertices(deep_net, box_regions)
    return sign_service.ensure_unique(sign_service.assign_mean(preacts), preacts)
