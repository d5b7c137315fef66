"""Joint image/mask augmentations: flips, 90-degree rotations, color jitter.

Geometric transforms are applied identically to the image, the mask and
any extra per-pixel map (e.g. an uncertainty map) so correspondences are
preserved exactly. Color jitter touches the image only.
"""

from __future__ import annotations

import numpy as np

from .utils import as_rng

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def color_jitter(image: np.ndarray, rng, strength: float = 0.1) -> np.ndarray:
    """Randomly scale brightness, contrast and saturation by up to +/-strength."""
    rng = as_rng(rng)
    out = image.astype(np.float32, copy=True)
    b, c, s = 1.0 + strength * rng.uniform(-1.0, 1.0, size=3)
    out = out * b
    mean = out.mean()
    out = mean + (out - mean) * c
    gray = (_LUMA[:, None, None] * out).sum(axis=0, keepdims=True)
    out = gray + (out - gray) * s
    return np.clip(out, 0.0, 1.0)


def joint_augment(
    image: np.ndarray,
    mask: np.ndarray,
    extra: np.ndarray | None = None,
    rng=0,
    jitter: float = 0.1,
):
    """Random flip/rotation applied jointly, plus color jitter on the image.

    Returns ``(image, mask, extra)``; ``extra`` stays None when not given.
    """
    rng = as_rng(rng)
    k = int(rng.integers(4))
    flip = bool(rng.integers(2))

    def geo(arr):
        out = np.rot90(arr, k, axes=(-2, -1))
        if flip:
            out = np.flip(out, axis=-1)
        return np.ascontiguousarray(out)

    image = geo(image)
    mask = geo(mask)
    if extra is not None:
        extra = geo(extra)
    if jitter > 0:
        image = color_jitter(image, rng, jitter)
    return image, mask, extra
