from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from affine_fence.schemas.array_types import FiniteArray, FloatArray


class QpStatusEnum(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


class LeastDistanceQp(BaseModel):
    """min ||u||^2 subject to A u >= c."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    constraint_matrix: FiniteArray
    constraint_rhs: FiniteArray

    @model_validator(mode="after")
    def check_shapes(self):
        if self.constraint_matrix.ndim != 2 or min(self.constraint_matrix.shape) < 1:
            raise ValueError("constraint matrix must be a nonempty m x q matrix.")
        if self.constraint_rhs.shape != (self.constraint_matrix.shape[0],):
            raise ValueError("constraint rhs must have one entry per matrix row.")
        return self

    @property
    def num_constraints(self) -> int:
        return self.constraint_matrix.shape[0]

    @property
    def num_variables(self) -> int:
        return self.constraint_matrix.shape[1]


class QpSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: FloatArray
    status: QpStatusEnum
    max_constraint_residual: float
    iterations: int
    multipliers: FloatArray | None = None
    certificate: FloatArray | None = None

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.u))


class BiasFeasibility(BaseModel):
    """Interval of admissible bias values for one neuron with frozen weights.

    ``lower``/``upper`` are None when unbounded on that side; the row indices
    name the vertex rows that produce the binding bounds.
    """

    feasible: bool
    lower: float | None = None
    upper: float | None = None
    lower_row: int | None = None
    upper_row: int | None = None
