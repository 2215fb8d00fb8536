from pydantic import ValidationError

from affine_fence.core.logger import logger
from affine_fence.services.exceptions import (
    ArtifactNotFoundError,
    BaseError,
    EnforcementFailedError,
    ExperimentStageError,
    InvalidConfigError,
    PatternMismatchError,
)

EXIT_SUCCESS = 0
EXIT_METHOD_FAILURE = 1
EXIT_USAGE_ERROR = 2


def invalid_config_exception_handler(exc: InvalidConfigError) -> int:
    logger.error(f"InvalidConfigError error: {exc.errors()}")
    return EXIT_USAGE_ERROR


def validation_exception_handler(exc: ValidationError) -> int:
    for error in exc.errors():
        field_path = ".".join(str(part) for part in error["loc"]) or "<root>"
        logger.error(f"ValidationError error at '{field_path}': {error['msg']}")
    return EXIT_USAGE_ERROR


def artifact_not_found_exception_handler(exc: ArtifactNotFoundError) -> int:
    logger.error(f"ArtifactNotFoundError error: {exc.errors()}")
    return EXIT_USAGE_ERROR


def enforcement_failed_exception_handler(exc: EnforcementFailedError) -> int:
    logger.error(f"EnforcementFailedError error: {exc.errors()}")
    return EXIT_METHOD_FAILURE


def pattern_mismatch_exception_handler(exc: PatternMismatchError) -> int:
    logger.error(f"PatternMismatchError error: {exc.errors()}")
    return EXIT_METHOD_FAILURE


def experiment_stage_exception_handler(exc: ExperimentStageError) -> int:
    logger.error(f"ExperimentStageError error: {exc.errors()}")
    if isinstance(exc.cause, EnforcementFailedError):
        for failure in exc.cause.report.qp_failures:
            logger.error(
                f"QP failure at layer {failure.layer}, neuron {failure.neuron}: "
                f"{failure.status.value} (residual {failure.residual:.3e})"
            )
    return EXIT_METHOD_FAILURE


def base_exception_handler(exc: BaseError) -> int:
    logger.error(f"{exc.__class__.__name__} error: {exc.errors()}")
    return EXIT_METHOD_FAILURE


exception_handlers = {
    InvalidConfigError: invalid_config_exception_handler,
    ValidationError: validation_exception_handler,
    ArtifactNotFoundError: artifact_not_found_exception_handler,
    EnforcementFailedError: enforcement_failed_exception_handler,
    PatternMismatchError: pattern_mismatch_exception_handler,
    ExperimentStageError: experiment_stage_exception_handler,
    BaseError: base_exception_handler,
}


def handle_exception(exc: Exception) -> int:
    """Map an exception to a process exit code through the nearest registered handler.

    Raises:
        Exception: ``exc`` itself when no handler is registered for it.
    """
    for cls in type(exc).__mro__:
        handler = exception_handlers.get(cls)
        if handler is not None:
            return handler(exc)
    raise exc
