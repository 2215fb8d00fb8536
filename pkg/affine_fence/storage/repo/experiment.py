from pathlib import Path
from typing import Type

from affine_fence.schemas.experiment_schemas import (
    ExperimentResult,
    ExperimentSpec,
    experiment_spec_adapter,
)
from affine_fence.services.exceptions import ArtifactNotFoundError
from affine_fence.storage.repo.base import BaseRepo


class ExperimentResultRepo(BaseRepo[ExperimentResult]):
    @classmethod
    def get_model(cls) -> Type[ExperimentResult]:
        return ExperimentResult


class ExperimentSpecRepo:
    """Experiment configs are a tagged union on ``name``, so they go through a
    type adapter instead of a single model class."""

    @staticmethod
    def load(path: str | Path) -> ExperimentSpec:
        path = Path(path)
        if not path.is_file():
            raise ArtifactNotFoundError(path)
        return experiment_spec_adapter.validate_json(path.read_text(encoding="utf-8"))
