import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from affine_fence.schemas.array_types import FiniteArray

DUPLICATE_VERTEX_TOLERANCE = 1e-12


def _as_row_matrix(value: np.ndarray) -> np.ndarray:
    return value.reshape(1, -1) if value.ndim == 1 else value


class EqualityConstraint(BaseModel):
    """E y = f on the network output y."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    e: FiniteArray
    f: FiniteArray

    @model_validator(mode="after")
    def check_shapes(self):
        self.e = _as_row_matrix(self.e)
        self.f = self.f.reshape(-1)
        if self.e.shape[0] != self.f.shape[0]:
            raise ValueError("equality matrix rows must match the length of f.")
        return self


class InequalityConstraint(BaseModel):
    """C y <= d on the network output y."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    c: FiniteArray
    d: FiniteArray

    @model_validator(mode="after")
    def check_shapes(self):
        self.c = _as_row_matrix(self.c)
        self.d = self.d.reshape(-1)
        if self.c.shape[0] != self.d.shape[0]:
            raise ValueError("inequality matrix rows must match the length of d.")
        return self


class ConvexRegion(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: str
    vertices: FiniteArray
    equality: EqualityConstraint | None = None
    inequality: InequalityConstraint | None = None

    @field_validator("vertices", mode="after")
    @classmethod
    def dedupe_vertices(cls, vertices: np.ndarray) -> np.ndarray:
        if vertices.ndim == 1:
            vertices = vertices.reshape(-1, 1)
        if vertices.ndim != 2 or vertices.shape[0] < 1:
            raise ValueError("a region needs at least one vertex.")
        keep = [0]
        for index in range(1, vertices.shape[0]):
            distances = np.max(np.abs(vertices[keep] - vertices[index]), axis=1)
            if np.all(distances > DUPLICATE_VERTEX_TOLERANCE):
                keep.append(index)
        return vertices[keep]

    @model_validator(mode="after")
    def check_output_dims(self):
        if self.equality is not None and self.inequality is not None:
            if self.equality.e.shape[1] != self.inequality.c.shape[1]:
                raise ValueError("constraints disagree on the output dimension.")
        return self

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def has_constraints(self) -> bool:
        return self.equality is not None or self.inequality is not None

    @property
    def output_dim(self) -> int | None:
        if self.equality is not None:
            return self.equality.e.shape[1]
        if self.inequality is not None:
            return self.inequality.c.shape[1]
        return None


class RegionSet(BaseModel):
    """Ordered regions; pairwise disjointness is the caller's responsibility."""

    regions: list[ConvexRegion] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_regions(self):
        ids = [region.id for region in self.regions]
        if len(ids) != len(set(ids)):
            raise ValueError("region ids must be unique.")
        if len({region.dim for region in self.regions}) > 1:
            raise ValueError("all regions must live in the same input dimension.")
        return self

    def __len__(self) -> int:
        return len(self.regions)

    def __getitem__(self, index: int) -> ConvexRegion:
        return self.regions[index]

    @property
    def ids(self) -> list[str]:
        return [region.id for region in self.regions]

    @property
    def dim(self) -> int:
        return self.regions[0].dim

    def get(self, region_id: str) -> ConvexRegion:
        for region in self.regions:
            if region.id == region_id:
                return region
        raise KeyError(region_id)

    def stacked_vertices(self) -> np.ndarray:
        return np.vstack([region.vertices for region in self.regions])
