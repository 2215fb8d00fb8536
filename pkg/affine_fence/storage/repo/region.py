from typing import Type

from affine_fence.schemas.region_schemas import RegionSet
from affine_fence.storage.repo.base import BaseRepo


class RegionRepo(BaseRepo[RegionSet]):
    @classmethod
    def get_model(cls) -> Type[RegionSet]:
        return RegionSet
