"""Binary-mask utilities: latent-resolution downsampling and compositing."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .utils import is_binary


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Resize a binary [H, W] mask to latent resolution [1, H/f, W/f].

    A latent cell is active iff any pixel in its f x f block is active
    (max-pool rule), so adding foreground pixels can never deactivate a
    cell.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {mask.shape}")
    if not is_binary(mask):
        raise ShapeError("mask must be binary (0/1)")
    h, w = mask.shape
    if factor < 1 or h % factor or w % factor:
        raise ShapeError(f"mask shape {mask.shape} not divisible by factor {factor}")
    blocks = mask.reshape(h // factor, factor, w // factor, factor)
    pooled = blocks.max(axis=(1, 3)).astype(np.uint8)
    return pooled[None]


def composite_background(
    generated: np.ndarray, original: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Keep generated pixels inside the mask, original pixels outside.

    Selection is done with ``np.where`` so out-of-mask pixels come back
    bitwise identical to the original.
    """
    generated = np.asarray(generated)
    original = np.asarray(original)
    mask = np.asarray(mask)
    if generated.shape != original.shape:
        raise ShapeError(
            f"generated shape {generated.shape} != original shape {original.shape}"
        )
    if mask.shape != generated.shape[-2:]:
        raise ShapeError(
            f"mask shape {mask.shape} does not match image spatial dims "
            f"{generated.shape[-2:]}"
        )
    if not is_binary(mask):
        raise ShapeError("mask must be binary (0/1)")
    return np.where(mask.astype(bool), generated, original)
