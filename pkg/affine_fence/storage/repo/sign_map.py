from typing import Type

from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.storage.repo.base import BaseRepo


class SignMapRepo(BaseRepo[SignMap]):
    @classmethod
    def get_model(cls) -> Type[SignMap]:
        return SignMap
