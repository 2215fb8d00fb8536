from typing import Annotated

import numpy as np
from pydantic import PlainSerializer, PlainValidator


def _to_finite_array(value) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise ValueError("array entries must be finite")
    return array


def _to_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _to_sign_array(value) -> np.ndarray:
    array = np.asarray(value, dtype=np.int8)
    if array.ndim != 1:
        raise ValueError("sign vector must be one-dimensional")
    if not np.all(np.abs(array) == 1):
        raise ValueError("sign entries must be +1 or -1")
    return array


def _to_list(array: np.ndarray) -> list:
    return array.tolist()


FiniteArray = Annotated[
    np.ndarray,
    PlainValidator(_to_finite_array),
    PlainSerializer(_to_list, return_type=list),
]

FloatArray = Annotated[
    np.ndarray,
    PlainValidator(_to_array),
    PlainSerializer(_to_list, return_type=list),
]

SignArray = Annotated[
    np.ndarray,
    PlainValidator(_to_sign_array),
    PlainSerializer(_to_list, return_type=list),
]
