"""Soft-thresholding operators used by the consensus updates."""

import numpy as np

__all__ = ["soft_threshold", "group_soft_threshold"]


def soft_threshold(a, b):
    """Entrywise soft threshold sign(a) * max(|a| - b, 0).

    Proximal operator of b * |.|; a may be a scalar or an array.
    """
    if b < 0:
        raise ValueError("threshold must be nonnegative")
    a = np.asarray(a, dtype=float)
    out = np.sign(a) * np.maximum(np.abs(a) - b, 0.0)
    return float(out) if out.ndim == 0 else out


def group_soft_threshold(c, d):
    """Blockwise soft threshold (1 - d / ||c||_2)+ c, with 0 mapped to 0.

    Proximal operator of d * ||.||_2 on a vector.
    """
    if d < 0:
        raise ValueError("threshold must be nonnegative")
    c = np.asarray(c, dtype=float)
    norm = float(np.sqrt((c * c).sum()))
    if norm == 0.0 or norm <= d:
        return np.zeros_like(c)
    # (norm - d) / norm rather than 1 - d / norm: subtracting first keeps
    # full precision when d is close to the norm
    return ((norm - d) / norm) * c
