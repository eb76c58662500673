"""Median and adaptive median filters used as benchmark comparators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgio import validate_image

# ndimage "mirror" is the reflect-without-edge-repeat padding used for patches
_PAD_MODE = "mirror"


@dataclass(frozen=True)
class AmfSettings:
    initial_window: int = 3
    max_window: int = 11

    def __post_init__(self):
        for name in ("initial_window", "max_window"):
            w = getattr(self, name)
            if w < 3 or w % 2 == 0:
                raise ValueError(f"{name} must be an odd integer >= 3, got {w}")
        if self.max_window < self.initial_window:
            raise ValueError("max_window must be >= initial_window")


def _check_window(window: int, shape) -> None:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd positive integer, got {window}")
    if window // 2 >= min(shape):
        raise ValueError(f"window {window} too large for image of shape {shape}")


def median_filter(img, window: int = 3) -> np.ndarray:
    """Replace every pixel by the median of its ``window x window`` neighbourhood."""
    img = validate_image(img)
    _check_window(window, img.shape)
    return ndimage.median_filter(img, size=window, mode=_PAD_MODE)


def adaptive_median_filter(img, settings: AmfSettings = AmfSettings()) -> np.ndarray:
    """Adaptive median filter for salt-and-pepper noise.

    Only impulse pixels (0 or 255) are candidates for replacement.  For each
    of them the window grows from ``initial_window`` until its median lies
    strictly between the window minimum and maximum; the pixel then takes
    that median.  Pixels still unresolved at ``max_window`` take the median
    of the largest window, which may itself be an impulse value.
    """
    img = validate_image(img)
    out = img.copy()
    pending = (img == 0) | (img == 255)
    zmed = img
    for w in range(settings.initial_window, settings.max_window + 1, 2):
        if not pending.any():
            break
        _check_window(w, img.shape)
        zmin = ndimage.minimum_filter(img, size=w, mode=_PAD_MODE)
        zmax = ndimage.maximum_filter(img, size=w, mode=_PAD_MODE)
        zmed = ndimage.median_filter(img, size=w, mode=_PAD_MODE)
        done = pending & (zmin < zmed) & (zmed < zmax)
        out[done] = zmed[done]
        pending &= ~done
    out[pending] = zmed[pending]
    return out
