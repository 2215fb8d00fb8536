from typing import Any


class BaseError(Exception):
    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(message)

    def errors(self):
        return self.message


class DimensionMismatchError(BaseError):
    def __init__(self, what: str, expected: Any, actual: Any) -> None:
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class NonFiniteValueError(BaseError):
    def __init__(self, what: str) -> None:
        self.what = what
        super().__init__(f"{what} contains non-finite entries")


class RankDeficientError(BaseError):
    def __init__(self, rank: int, cols: int) -> None:
        self.rank = rank
        self.cols = cols
        super().__init__(
            f"Design matrix is rank-deficient: numerical rank {rank} < {cols} columns"
        )


class InvalidNetworkError(BaseError):
    def __init__(self, message: str = "Invalid network architecture") -> None:
        super().__init__(message)


class InvalidRegionError(BaseError):
    def __init__(self, message: str = "Invalid region definition") -> None:
        super().__init__(message)


class VertexLimitError(BaseError):
    def __init__(self, dimension: int, vertex_count: int) -> None:
        self.dimension = dimension
        self.vertex_count = vertex_count
        super().__init__(
            f"A box in dimension {dimension} has {vertex_count} vertices, "
            "which exceeds the supported limit"
        )


class SignRepairError(BaseError):
    def __init__(self, region_ids: tuple[str, str]) -> None:
        self.region_ids = region_ids
        super().__init__(
            f"Regions {region_ids[0]} and {region_ids[1]} still share a pattern "
            "after every neuron has been flipped"
        )


class EnforcementFailedError(BaseError):
    def __init__(self, report: Any) -> None:
        self.report = report
        failures = ", ".join(
            f"(layer {failure.layer}, neuron {failure.neuron}: {failure.status})"
            for failure in report.qp_failures
        )
        super().__init__(f"Sign enforcement aborted at {failures}")


class NonFiniteLossError(BaseError):
    def __init__(self, stage: str, epoch: int) -> None:
        self.stage = stage
        self.epoch = epoch
        super().__init__(f"Non-finite loss during {stage} at epoch {epoch}")


class PatternMismatchError(BaseError):
    def __init__(self, region_id: str, point: list[float]) -> None:
        self.region_id = region_id
        self.point = point
        super().__init__(
            f"Activation pattern mismatch in region {region_id} at point {point}"
        )


class ExperimentStageError(BaseError):
    def __init__(self, stage: str, cause: Exception) -> None:
        self.stage = stage
        self.cause = cause
        detail = cause.errors() if isinstance(cause, BaseError) else str(cause)
        super().__init__(f"Experiment failed at stage '{stage}': {detail}")


class ArtifactNotFoundError(BaseError):
    def __init__(self, path: Any) -> None:
        self.path = path
        super().__init__(f"Artifact file {path} not found")


class InvalidConfigError(BaseError):
    def __init__(self, field_path: str, message: str) -> None:
        self.field_path = field_path
        super().__init__(f"Invalid configuration at '{field_path}': {message}")


class InvalidValueError(BaseError):
    def __init__(self, what: str, value: Any, requirement: str) -> None:
        self.what = what
        self.value = value
        self.requirement = requirement
        super().__init__(f"{what} = {value} is invalid: {requirement}")
