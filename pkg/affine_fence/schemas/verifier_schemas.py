from pydantic import BaseModel, computed_field

AFFINE_RESIDUAL_TOLERANCE = 1e-9


class AffinityReport(BaseModel):
    region_id: str
    pattern_constant: bool
    assigned_pattern_matched: bool
    affine_residual: float
    closed_form_residual: float | None = None
    sampled_constraint_violation: float = 0.0
    samples_used: int
    mismatched_samples: int = 0
    fit_on_samples: bool = False
    counterexample: list[float] | None = None

    @computed_field
    @property
    def certified(self) -> bool:
        return (
            self.pattern_constant
            and self.assigned_pattern_matched
            and self.affine_residual <= AFFINE_RESIDUAL_TOLERANCE
        )


class HullReport(BaseModel):
    region_ids: tuple[str, str]
    hull_pattern_constant: bool
    hull_affine_residual: float
    samples_used: int
