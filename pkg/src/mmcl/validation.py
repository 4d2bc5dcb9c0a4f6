"""Input validation helpers used at public API boundaries.

All helpers raise :class:`mmcl.exceptions.ValidationError` (or a subclass)
with a message naming the offending argument, so callers can surface
actionable errors instead of cryptic shape mismatches deep inside torch.
"""
from __future__ import annotations

import numpy as np
import torch

from .exceptions import ConfigurationError, ValidationError

UNIT_ROW_TOL = 1e-6


def as_float_matrix(x, name: str) -> torch.Tensor:
    """Coerce ``x`` to a 2-D floating-point tensor."""
    t = torch.as_tensor(x)
    if not torch.is_floating_point(t):
        t = t.float()
    if t.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {tuple(t.shape)}")
    if not torch.isfinite(t).all():
        raise ValidationError(f"{name} contains non-finite values")
    return t


def check_unit_rows(z: torch.Tensor, name: str, tol: float = UNIT_ROW_TOL) -> None:
    """Require every row of ``z`` to have unit L2 norm within ``tol``."""
    norms = torch.linalg.vector_norm(z.detach(), dim=1)
    err = (norms - 1.0).abs().max().item() if z.shape[0] else 0.0
    if err > tol:
        raise ValidationError(
            f"{name} rows must be unit-normalized (max |norm - 1| = {err:.3e} > {tol:g})"
        )


def check_binary_matrix(y, name: str) -> torch.Tensor:
    """Coerce ``y`` to a 2-D tensor and require entries in {0, 1}."""
    t = torch.as_tensor(y)
    if t.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {tuple(t.shape)}")
    vals = t.float()
    if not bool(((vals == 0) | (vals == 1)).all()):
        raise ValidationError(f"{name} must contain only 0/1 entries")
    return vals


def check_same_rows(a: torch.Tensor, b: torch.Tensor, name_a: str, name_b: str) -> None:
    if a.shape[0] != b.shape[0]:
        raise ConfigurationError(
            f"{name_a} and {name_b} must agree on the row count "
            f"({a.shape[0]} vs {b.shape[0]})"
        )


def check_same_cols(a: torch.Tensor, b: torch.Tensor, name_a: str, name_b: str) -> None:
    if a.shape[1] != b.shape[1]:
        raise ConfigurationError(
            f"{name_a} and {name_b} must agree on the embedding dimension "
            f"({a.shape[1]} vs {b.shape[1]})"
        )


def check_temperature(temperature: float) -> float:
    if not np.isfinite(temperature) or temperature <= 0:
        raise ValidationError(f"temperature must be a positive real, got {temperature!r}")
    return float(temperature)


def check_positive_int(value: int, name: str, minimum: int = 1) -> int:
    if int(value) != value or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_fraction(value: float, name: str, *, inclusive_top: bool = True) -> float:
    top_ok = value <= 1.0 if inclusive_top else value < 1.0
    if not (0.0 < value and top_ok):
        bound = "(0, 1]" if inclusive_top else "(0, 1)"
        raise ValidationError(f"{name} must lie in {bound}, got {value!r}")
    return float(value)


def check_patch_array(x, name: str) -> np.ndarray:
    """Require a finite 3-D (channels, height, width) float array."""
    arr = np.asarray(x)
    if arr.ndim != 3:
        raise ValidationError(f"{name} must be 3-D (C, H, W), got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr
