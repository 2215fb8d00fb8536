import os
import sys

from loguru import logger as base_logger

from affine_fence.core.config import config


class Logger:
    def __init__(self):
        self._logger = base_logger
        self._logger.remove()

        log_file = os.path.join(config.log_dir, "affine_fence.log")
        log_format = "{time} {level} {message}"
        self._logger.add(
            log_file, format=log_format, level=config.log_level, rotation="10 MB"
        )
        self._stderr_sink = None
        if config.log_to_stderr:
            self.set_level(config.log_level)

    def set_level(self, level: str) -> None:
        """Re-attach the stderr sink at a new level (the file sink is untouched)."""
        if self._stderr_sink is not None:
            self._logger.remove(self._stderr_sink)
            self._stderr_sink = None
        self._stderr_sink = self._logger.add(
            sys.stderr, format="{level: <8} {message}", level=level.upper()
        )

    def info(self, message):
        self._logger.info(message)

    def warning(self, message):
        self._logger.warning(message)

    def error(self, message):
        self._logger.error(message)

    def debug(self, message):
        self._logger.debug(message)


logger = Logger()
