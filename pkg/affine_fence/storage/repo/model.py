from pathlib import Path
from typing import Type

from affine_fence.schemas.model_schemas import ModelFile
from affine_fence.schemas.network_schemas import MlpNetwork
from affine_fence.schemas.region_schemas import RegionSet
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.storage.repo.base import BaseRepo


class ModelRepo(BaseRepo[ModelFile]):
    @classmethod
    def get_model(cls) -> Type[ModelFile]:
        return ModelFile

    @classmethod
    def load_network(cls, path: str | Path) -> MlpNetwork:
        return cls.load(path).to_network()

    @classmethod
    def save_network(
        cls,
        net: MlpNetwork,
        path: str | Path,
        sign_map: SignMap | None = None,
        regions: RegionSet | None = None,
    ) -> Path:
        model_file = ModelFile.from_network(
            net, sign_map, regions.regions if regions is not None else None
        )
        return cls.save(model_file, path)
