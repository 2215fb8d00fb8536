import csv
from pathlib import Path

import numpy as np

from affine_fence.core.logger import logger
from affine_fence.schemas.experiment_schemas import BENCH_HEADER, BenchRow
from affine_fence.schemas.trainer_schemas import TrainReport


def write_rows(path: str | Path, rows: list[dict], fieldnames: list[str]) -> Path:
    """Write dict rows under a fixed header.

    Args:
        path (str | Path): Target file; parent directories are created.
        rows (list[dict]): The rows to save.
        fieldnames (list[str]): Column order.

    Returns:
        Path: The written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, mode="w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(file, fieldnames=fieldnames)

        writer.writeheader()
        writer.writerows(rows)

    logger.info(f"{len(rows)} rows written to {path}")
    return path


def write_curves(path: str | Path, report: TrainReport) -> Path:
    return write_rows(
        path, report.curve_rows(), ["epoch", "task_loss", "V", "lambda", "L_balanced"]
    )


def write_predictions(path: str | Path, inputs: np.ndarray, outputs: np.ndarray) -> Path:
    inputs = np.atleast_2d(inputs)
    outputs = np.atleast_2d(outputs)
    input_names = [f"x{index}" for index in range(inputs.shape[1])]
    output_names = [f"y{index}" for index in range(outputs.shape[1])]
    rows = [
        dict(zip(input_names + output_names, [*point.tolist(), *value.tolist()]))
        for point, value in zip(inputs, outputs)
    ]
    return write_rows(path, rows, input_names + output_names)


def write_bench(path: str | Path, rows: list[BenchRow]) -> Path:
    return write_rows(path, [row.csv_row() for row in rows], BENCH_HEADER)
