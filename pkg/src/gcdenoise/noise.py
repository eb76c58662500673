"""Salt-and-pepper noise injection and threshold-based detection.

Randomness comes from NumPy's PCG64 bit generator (``numpy.random.PCG64``),
seeded explicitly per call.  PCG64 output for a given seed is stable across
platforms and NumPy versions, so benchmark sweeps reproduce exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgio import validate_image

CLEAN = 0
PEPPER = 1
SALT = 2

KIND_NAMES = {PEPPER: "pepper", SALT: "salt"}


@dataclass(frozen=True)
class NoiseMask:
    """Per-pixel noise flags.

    ``kind`` holds ``CLEAN``, ``PEPPER`` or ``SALT`` for every pixel; the
    boolean ``flags`` view is derived from it so the two can never disagree.
    """

    kind: np.ndarray

    def __post_init__(self):
        kind = np.asarray(self.kind, dtype=np.uint8)
        if kind.ndim != 2:
            raise ValueError("mask must be 2-D")
        if kind.size and kind.max() > SALT:
            raise ValueError("unknown noise kind code")
        object.__setattr__(self, "kind", kind)

    @property
    def flags(self) -> np.ndarray:
        return self.kind != CLEAN

    @property
    def shape(self) -> tuple[int, int]:
        return self.kind.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.kind))

    @classmethod
    def empty(cls, shape) -> "NoiseMask":
        return cls(np.zeros(shape, dtype=np.uint8))

    def to_pgm_array(self) -> np.ndarray:
        """0 for clean pixels, 255 for flagged ones."""
        return np.where(self.flags, 255, 0).astype(np.uint8)

    def to_csv(self) -> str:
        """Sidecar listing of flagged pixels as ``row,col,kind`` lines."""
        rows, cols = np.nonzero(self.kind)
        lines = ["row,col,kind"]
        for r, c in zip(rows.tolist(), cols.tolist()):
            lines.append(f"{r},{c},{KIND_NAMES[int(self.kind[r, c])]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, shape) -> "NoiseMask":
        codes = {name: code for code, name in KIND_NAMES.items()}
        kind = np.zeros(shape, dtype=np.uint8)
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != "row,col,kind":
            raise ValueError("mask CSV must start with header 'row,col,kind'")
        for line in lines[1:]:
            r, c, name = line.strip().split(",")
            kind[int(r), int(c)] = codes[name]
        return cls(kind)


@dataclass(frozen=True)
class NoiseParams:
    density: float
    salt_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must be in [0, 1], got {self.density}")
        if not 0.0 <= self.salt_fraction <= 1.0:
            raise ValueError(f"salt_fraction must be in [0, 1], got {self.salt_fraction}")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def inject(img, params: NoiseParams) -> tuple[np.ndarray, NoiseMask]:
    """Corrupt each pixel independently with probability ``params.density``.

    A corrupted pixel becomes 255 with probability ``salt_fraction`` and 0
    otherwise.  Returns the noisy image and the ground-truth mask.
    """
    img = validate_image(img)
    rng = make_rng(params.seed)
    corrupt = rng.random(img.shape) < params.density
    salt = rng.random(img.shape) < params.salt_fraction

    kind = np.zeros(img.shape, dtype=np.uint8)
    kind[corrupt & salt] = SALT
    kind[corrupt & ~salt] = PEPPER

    noisy = img.copy()
    noisy[kind == SALT] = 255
    noisy[kind == PEPPER] = 0
    return noisy, NoiseMask(kind)


def detect(img, t_p: int = 0, t_s: int = 255) -> NoiseMask:
    """Flag pepper pixels (value <= t_p) and salt pixels (value >= t_s).

    Both intervals are closed so that the default thresholds (0, 255) catch
    exact 0/255 impulses.
    """
    img = validate_image(img)
    if not (0 <= t_p < t_s <= 255):
        raise ValueError(f"thresholds must satisfy 0 <= t_p < t_s <= 255, got t_p={t_p}, t_s={t_s}")
    kind = np.zeros(img.shape, dtype=np.uint8)
    kind[img <= t_p] = PEPPER
    kind[img >= t_s] = SALT
    return NoiseMask(kind)


def estimate_thresholds(img, reach: int = 10, spike_factor: float = 2.0) -> tuple[int, int]:
    """Heuristic threshold guess from the intensity histogram.

    ``t_p`` is the largest intensity ``v <= reach`` whose histogram count
    exceeds ``spike_factor`` times the median bin count (0 if none); ``t_s``
    is the mirror image near 255.  This is a rough helper only; the
    detector defaults remain (0, 255).
    """
    img = validate_image(img)
    hist = np.bincount(img.ravel(), minlength=256)
    limit = spike_factor * float(np.median(hist))

    t_p = 0
    for v in range(reach, -1, -1):
        if hist[v] > limit:
            t_p = v
            break
    t_s = 255
    for v in range(255 - reach, 256):
        if hist[v] > limit:
            t_s = v
            break
    if t_p >= t_s:
        return 0, 255
    return t_p, t_s
