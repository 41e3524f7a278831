"""Input validation helpers shared by the estimators and the pipeline ops."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

MATRIX_ROWS = 120


def check_sample_array(X, channels: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a float32 sample batch.

    Accepts ``(n, 120, 45)`` or ``(n, c, 120, 45)``; returns the array
    with an explicit channel axis.  ``channels`` pins the expected
    channel count when given.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[:, None, :, :]
    if X.ndim != 4:
        raise ValidationError(
            f"{name} must be (n_samples, rows, cols) or (n_samples, channels, rows, cols), "
            f"got shape {X.shape}"
        )
    n, c, rows, cols = X.shape
    if rows != MATRIX_ROWS or cols != 45:
        raise ValidationError(f"{name} samples must be {MATRIX_ROWS}x45, got {rows}x{cols}")
    if channels is not None and c != channels:
        raise ValidationError(f"{name} must have {channels} channel(s), got {c}")
    if not np.isfinite(X).all():
        raise ValidationError(f"{name} contains non-finite values")
    return X


def check_binary_labels(y, n: int | None = None, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {y.shape}")
    if n is not None and len(y) != n:
        raise ValidationError(f"{name} has {len(y)} entries, expected {n}")
    if len(y) and not np.isin(y, (0, 1)).all():
        raise ValidationError(f"{name} must contain only 0 (benign) and 1 (malicious)")
    return y.astype(np.int64)


def check_split_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValidationError(f"expected (train, validation, test) ratios, got {ratios}")
    if any(r <= 0.0 for r in ratios):
        raise ValidationError("all three split ratios must be positive (validation and test are required)")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must sum to 1, got {sum(ratios)}")
    return ratios


def check_fraction(value, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1], got {value}")
    return value
