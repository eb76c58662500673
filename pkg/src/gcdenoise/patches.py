"""Dense overlapping patch extraction with mean-filled noise entries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imgio import validate_image
from .noise import NoiseMask

ALL_NOISY_FALLBACK = 128.0


@dataclass
class PatchSet:
    """One ``L x L`` patch centred on every pixel, flattened row-major.

    ``vectors[n]`` and ``noise_submasks[n]`` belong to the patch centred at
    ``positions[n]``; patch ``n`` is centred on pixel ``(n // W, n % W)``.
    """

    patch_size: int
    vectors: np.ndarray          # (N, d) float64, mean-filled
    noise_submasks: np.ndarray   # (N, d) bool
    source_dims: tuple[int, int]

    @property
    def dim(self) -> int:
        return self.patch_size * self.patch_size

    @property
    def center(self) -> int:
        """Index of the centre pixel inside a flattened patch."""
        return self.dim // 2

    @property
    def positions(self) -> np.ndarray:
        h, w = self.source_dims
        rows, cols = np.divmod(np.arange(h * w), w)
        return np.stack([rows, cols], axis=1)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def index_of(self, row: int, col: int) -> int:
        return row * self.source_dims[1] + col


def mean_fill(values, submask, global_fallback: float) -> np.ndarray:
    """Replace flagged entries with the mean of the unflagged ones.

    If every entry is flagged, all of them become ``global_fallback``.
    """
    values = np.asarray(values, dtype=np.float64)
    submask = np.asarray(submask, dtype=bool)
    if values.shape != submask.shape:
        raise ValueError("values and submask must have the same length")
    out = values.copy()
    clean = ~submask
    if clean.any():
        out[submask] = values[clean].mean()
    else:
        out[:] = global_fallback
    return out


def global_clean_mean(img: np.ndarray, mask: NoiseMask) -> float:
    clean = ~mask.flags
    if not clean.any():
        return ALL_NOISY_FALLBACK
    return float(img[clean].mean(dtype=np.float64))


def check_patch_size(patch_size: int, shape) -> None:
    if patch_size < 3 or patch_size % 2 == 0:
        raise ValueError(f"patch size must be an odd integer >= 3, got {patch_size}")
    if patch_size > min(shape):
        raise ValueError(f"patch size {patch_size} exceeds image dimensions {tuple(shape)}")


def extract(img, mask: NoiseMask, patch_size: int) -> PatchSet:
    """Extract a patch at every pixel using reflect padding at the borders."""
    img = validate_image(img)
    if mask.shape != img.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image shape {img.shape}")
    check_patch_size(patch_size, img.shape)

    r = patch_size // 2
    d = patch_size * patch_size
    padded = np.pad(img.astype(np.float64), r, mode="reflect")
    padded_mask = np.pad(mask.flags, r, mode="reflect")
    vectors = sliding_window_view(padded, (patch_size, patch_size)).reshape(-1, d).copy()
    submasks = sliding_window_view(padded_mask, (patch_size, patch_size)).reshape(-1, d).copy()

    # vectorised mean_fill over all rows
    clean = ~submasks
    n_clean = clean.sum(axis=1)
    sums = np.where(clean, vectors, 0.0).sum(axis=1)
    fill = np.full(len(vectors), global_clean_mean(img, mask))
    has_clean = n_clean > 0
    fill[has_clean] = sums[has_clean] / n_clean[has_clean]
    vectors = np.where(submasks, fill[:, None], vectors)

    return PatchSet(patch_size, vectors, submasks, img.shape)
