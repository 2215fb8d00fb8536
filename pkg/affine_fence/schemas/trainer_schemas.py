from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from affine_fence.schemas.array_types import FiniteArray
from affine_fence.schemas.enforce_schemas import EnforceConfig, EnforcementReport
from affine_fence.schemas.sign_schemas import SignMap


class SignMethodEnum(str, Enum):
    MAJORITY = "majority"
    MEAN = "mean"


class TaskKindEnum(str, Enum):
    REGRESSION_MSE = "regression_mse"
    CLASSIFICATION_BCE = "classification_bce"


class StopReasonEnum(str, Enum):
    TOLERANCE_MET = "tolerance_met"
    PATIENCE_EXHAUSTED = "patience_exhausted"
    MAX_EPOCHS = "max_epochs"


class TrainConfig(BaseModel):
    learning_rate: float = Field(1e-3, gt=0.0)
    finetune_learning_rate: float | None = Field(None, gt=0.0)
    batch_size: int = Field(256, ge=1)
    pretrain_epochs: int = Field(500, ge=0)
    min_epochs: int = Field(30, ge=0)
    max_epochs: int = Field(50, ge=1)
    patience_threshold: int = Field(20, ge=1)
    lambda_init: float = Field(1.0, ge=0.0)
    lambda_max: float = Field(100.0, ge=0.0)
    penalty_multiplier: float = Field(1.5, gt=1.0)
    lr_decay: float = Field(1.0, gt=0.0, le=1.0)
    violation_tolerance: float = Field(1e-4, gt=0.0)
    filter_equality_data: bool = False
    sign_method: SignMethodEnum = SignMethodEnum.MEAN
    enforce: EnforceConfig = Field(default_factory=EnforceConfig)
    seed: int = 0

    @model_validator(mode="after")
    def check_penalty_range(self):
        if self.lambda_init > self.lambda_max:
            raise ValueError("lambda_init must not exceed lambda_max.")
        return self

    @property
    def effective_finetune_learning_rate(self) -> float:
        if self.finetune_learning_rate is not None:
            return self.finetune_learning_rate
        return 0.1 * self.learning_rate


class Dataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    inputs: FiniteArray
    targets: FiniteArray
    task_kind: TaskKindEnum = TaskKindEnum.REGRESSION_MSE

    @model_validator(mode="after")
    def check_shapes(self):
        if self.inputs.ndim == 1:
            self.inputs = self.inputs.reshape(-1, 1)
        if self.targets.ndim == 1:
            self.targets = self.targets.reshape(-1, 1)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have the same number of rows.")
        if self.task_kind == TaskKindEnum.CLASSIFICATION_BCE and not np.all(
            np.isin(self.targets, (0.0, 1.0))
        ):
            raise ValueError("classification targets must be 0 or 1.")
        return self

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(
            inputs=self.inputs[mask], targets=self.targets[mask], task_kind=self.task_kind
        )


class PretrainReport(BaseModel):
    task_loss: list[float] = []
    wall_time: float = 0.0


class TrainReport(BaseModel):
    task_loss: list[float] = []
    violation: list[float] = []
    lambda_history: list[float] = []
    learning_rate: list[float] = []
    balanced_loss: list[float] = []
    min_margin: list[float] = []
    stop_reason: StopReasonEnum = StopReasonEnum.MAX_EPOCHS
    best_epoch: int = 0
    best_balanced_loss: float | None = None
    pretrain_time: float = 0.0
    finetune_time: float = 0.0
    enforcement_times: list[float] = []
    sign_map: SignMap | None = None
    enforcement: EnforcementReport | None = None

    def curve_rows(self) -> list[dict]:
        return [
            {
                "epoch": epoch,
                "task_loss": task_loss,
                "V": violation,
                "lambda": penalty,
                "L_balanced": balanced,
            }
            for epoch, (task_loss, violation, penalty, balanced) in enumerate(
                zip(
                    self.task_loss,
                    self.violation,
                    self.lambda_history,
                    self.balanced_loss,
                ),
                start=1,
            )
        ]
