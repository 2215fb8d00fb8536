from typing import Type

from affine_fence.schemas.enforce_schemas import EnforcementReport
from affine_fence.storage.repo.base import BaseRepo


class EnforcementReportRepo(BaseRepo[EnforcementReport]):
    @classmethod
    def get_model(cls) -> Type[EnforcementReport]:
        return EnforcementReport
