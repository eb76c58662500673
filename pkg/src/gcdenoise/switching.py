"""Class-restricted non-local switching filter.

Every flagged pixel is rebuilt from the centre pixels of similar patches
drawn from its own cluster (widening to the nearest other clusters when
the cluster is too small).  Reference weights are

    s = exp(-msd / sigma_n) / ln(sigma_n),    w = s / sum(s)

where ``msd`` is the mean squared difference between mean-filled patch
vectors over positions that are clean in both patches.  Clean pixels are
never touched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gmm import Assignment, GmmModel
from .imgio import validate_image
from .noise import NoiseMask
from .patches import PatchSet


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class FilterSettings:
    sigma_n: float = 100.0
    n_min: int = 30
    n_max: int = 200

    def __post_init__(self):
        if not self.sigma_n > 1:
            raise ValueError(f"sigma_n must be > 1, got {self.sigma_n}")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError(f"need 1 <= n_min <= n_max, got n_min={self.n_min}, n_max={self.n_max}")


@dataclass
class CandidateSet:
    target_index: int
    reference_indices: np.ndarray
    cluster_trail: list
    distances: np.ndarray = field(default=None, repr=False)


class ClusterIndex:
    """Patch indices grouped by label, plus the retained cluster means."""

    def __init__(self, assignment: Assignment, model: GmmModel):
        labels = np.asarray(assignment.labels)
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(model.k + 1))
        self.members = [order[bounds[c]:bounds[c + 1]] for c in range(model.k)]
        self.labels = labels
        self.retained = np.flatnonzero(model.retained)
        self.means = model.means
        if self.retained.size == 0:
            raise PipelineError("no retained clusters")


def masked_distances(target: int, refs, patches: PatchSet) -> np.ndarray:
    """Mean squared difference between patch ``target`` and each of ``refs``.

    Only positions clean in both patches are compared; a pair with no such
    position falls back to comparing all positions of the mean-filled vectors.
    """
    refs = np.asarray(refs, dtype=np.intp)
    diff = patches.vectors[refs] - patches.vectors[target]
    sq = diff * diff
    common = ~(patches.noise_submasks[refs] | patches.noise_submasks[target])
    count = common.sum(axis=1)
    num = np.where(common, sq, 0.0).sum(axis=1)
    out = sq.mean(axis=1)
    has = count > 0
    out[has] = num[has] / count[has]
    return out


def masked_distance(a: int, b: int, patches: PatchSet) -> float:
    return float(masked_distances(a, [b], patches)[0])


def similarity(distance, sigma_n: float, log_factor: bool = True):
    """Reference similarity ``exp(-distance / sigma_n) / ln(sigma_n)``.

    ``log_factor=False`` drops the constant ``1 / ln(sigma_n)``, which
    cancels in the normalised weights anyway.
    """
    if not sigma_n > 1:
        raise ValueError(f"sigma_n must be > 1, got {sigma_n}")
    s = np.exp(-np.asarray(distance, dtype=np.float64) / sigma_n)
    if log_factor:
        s = s / math.log(sigma_n)
    return s


def weights(similarities) -> np.ndarray | None:
    s = np.asarray(similarities, dtype=np.float64)
    total = s.sum()
    if not total > 0:
        return None
    return s / total


def build_candidates(target: int, assignment: Assignment, model: GmmModel,
                     patches: PatchSet, settings: FilterSettings,
                     index: ClusterIndex | None = None) -> CandidateSet:
    """Collect reference patches for ``target`` from its cluster outward.

    Patches sharing the target's label come first.  While fewer than
    ``n_min`` references are available, whole clusters are appended in order
    of increasing distance between the target vector and their means.  The
    result keeps the ``n_max`` references closest to the target, ordered by
    masked distance (ties by index).
    """
    if index is None:
        index = ClusterIndex(assignment, model)
    own = int(index.labels[target])
    trail = [own]
    refs = [index.members[own][index.members[own] != target]]
    count = refs[0].size

    if count < settings.n_min:
        others = index.retained[index.retained != own]
        if others.size:
            gap = index.means[others] - patches.vectors[target]
            ranked = others[np.argsort(np.einsum("ij,ij->i", gap, gap), kind="stable")]
            for c in ranked:
                if count >= settings.n_min:
                    break
                members = index.members[int(c)]
                trail.append(int(c))
                if members.size:
                    refs.append(members)
                    count += members.size

    refs = np.concatenate(refs) if len(refs) > 1 else refs[0]
    dist = masked_distances(target, refs, patches)
    order = np.lexsort((refs, dist))[:settings.n_max]
    return CandidateSet(target, refs[order], trail, dist[order])


def restore_value(distances, centers, sigma_n: float, log_factor: bool = True) -> int:
    """Weighted average of reference centre values, rounded half-up into [0, 255]."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.size == 0:
        raise PipelineError("empty candidate set")
    w = weights(similarity(distances, sigma_n, log_factor))
    value = centers.mean() if w is None else float(w @ centers)
    return int(min(255, max(0, math.floor(value + 0.5))))


def restore_pixel(target: int, candidates: CandidateSet, patches: PatchSet,
                  settings: FilterSettings, log_factor: bool = True) -> int:
    """Restore the centre pixel of patch ``target`` from its candidates.

    Reference centres flagged as noise enter through their mean-filled
    value, which is what ``patches.vectors`` already holds.
    """
    refs = candidates.reference_indices
    dist = candidates.distances
    if dist is None:
        dist = masked_distances(target, refs, patches)
    centers = patches.vectors[refs, patches.center]
    return restore_value(dist, centers, settings.sigma_n, log_factor)


def restore_all(mask: NoiseMask, assignment: Assignment, model: GmmModel,
                patches: PatchSet, settings: FilterSettings) -> dict:
    """Restored intensity for every flagged pixel, keyed by ``(row, col)``."""
    index = ClusterIndex(assignment, model)
    width = mask.shape[1]
    restored = {}
    for flat in np.flatnonzero(mask.flags.ravel()):
        cands = build_candidates(int(flat), assignment, model, patches, settings, index)
        if cands.reference_indices.size == 0:
            raise PipelineError(f"no reference patches available for pixel {divmod(int(flat), width)}")
        restored[divmod(int(flat), width)] = restore_pixel(int(flat), cands, patches, settings)
    return restored


def fuse(img, mask: NoiseMask, restored: dict) -> np.ndarray:
    """Clean pixels from ``img``, flagged pixels from ``restored``."""
    img = validate_image(img)
    out = img.copy()
    flagged = set(zip(*(a.tolist() for a in np.nonzero(mask.flags))))
    missing = flagged - restored.keys()
    if missing:
        raise PipelineError(f"{len(missing)} flagged pixels have no restored value, e.g. {min(missing)}")
    for (r, c), value in restored.items():
        if (r, c) in flagged:
            out[r, c] = value
    return out
