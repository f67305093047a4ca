"""Guards for array arguments shared across the numerical modules"""

from typing import Sequence, Tuple

import numpy as np

from shared.exceptions import NonFiniteError, ValidationError


def require_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    """Raise NonFiniteError if any entry is NaN or infinite"""
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{name} has {bad} non-finite entries", node=name)
    return arr


def require_shape(arr: np.ndarray, shape: Sequence[int], name: str = "array") -> np.ndarray:
    """Raise ValidationError unless the trailing axes of arr equal shape"""
    shape = tuple(shape)
    if arr.ndim < len(shape) or tuple(arr.shape[arr.ndim - len(shape):]) != shape:
        raise ValidationError(
            f"{name} has shape {tuple(arr.shape)}, expected trailing shape {shape}",
            details={"got": list(arr.shape), "expected": list(shape)},
        )
    return arr


def require_square_image(arr: np.ndarray, name: str = "image", min_side: int = 2) -> Tuple[int, int]:
    """Validate an n×n real image and return its shape"""
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be a square 2-D array, got shape {tuple(arr.shape)}")
    if arr.shape[0] < min_side:
        raise ValidationError(f"{name} side {arr.shape[0]} is below the minimum {min_side}")
    return arr.shape
