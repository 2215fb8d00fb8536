from pydantic import BaseModel, Field

from affine_fence.core.config import config
from affine_fence.schemas.network_schemas import MlpNetwork
from affine_fence.schemas.qp_schemas import BiasFeasibility, QpStatusEnum


class EnforceConfig(BaseModel):
    margin: float = Field(0.0, ge=0.0)
    qp_tolerance: float = Field(default_factory=lambda: config.qp_tolerance, gt=0.0)
    qp_max_iter: int = Field(default_factory=lambda: config.qp_max_iter, gt=0)
    jobs: int = Field(default_factory=lambda: config.jobs, ge=1)


class QpFailure(BaseModel):
    layer: int
    neuron: int
    status: QpStatusEnum
    residual: float


class EnforcementReport(BaseModel):
    adjustment_norms: list[list[float]] = []
    total_shift: float = 0.0
    worst_margin_deficit: float = 0.0
    qp_failures: list[QpFailure] = []
    layer_wall_times: list[float] = []

    @property
    def succeeded(self) -> bool:
        return not self.qp_failures


class BiasOnlyResult(BaseModel):
    feasible: bool
    network: MlpNetwork | None = None
    conflict_layer: int | None = None
    conflict_neuron: int | None = None
    bounds: BiasFeasibility | None = None
