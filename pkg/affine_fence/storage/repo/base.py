from abc import ABC, abstractmethod
from pathlib import Path
from typing import Generic, Type, TypeVar

from pydantic import BaseModel

from affine_fence.core.logger import logger
from affine_fence.services.exceptions import ArtifactNotFoundError

T = TypeVar("T", bound=BaseModel)


class BaseRepo(ABC, Generic[T]):
    """Represents a base repository pattern to load and save JSON artifacts."""

    @classmethod
    @abstractmethod
    def get_model(cls) -> Type[T]:
        """Get the model stored by the repository."""
        pass

    @classmethod
    def load(cls, path: str | Path) -> T:
        """Read and validate one artifact.

        Args:
            path (str | Path): The JSON file to read.

        Raises:
            ArtifactNotFoundError: If the file does not exist.
            pydantic.ValidationError: If the content does not match the model.

        Returns:
            T: The validated entity.
        """
        path = Path(path)
        model: Type[T] = cls.get_model()
        if not path.is_file():
            raise ArtifactNotFoundError(path)
        logger.debug(f"Loading {model.__name__} from {path}")
        return model.model_validate_json(path.read_text(encoding="utf-8"))

    @staticmethod
    def save(entity: T, path: str | Path) -> Path:
        """Write one artifact, creating parent directories as needed.

        Args:
            entity (T): The entity to save.
            path (str | Path): Target file.

        Returns:
            Path: The written file.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(entity.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"{entity.__class__.__name__} saved to {path}")
        return path
