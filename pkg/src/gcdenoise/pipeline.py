"""End-to-end denoising: detect, cluster patches, restore, fuse."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import gmm, noise, patches, switching
from .imgio import validate_image

# (upper density bound, patch size, cluster count), indexed by density decile
_DENSITY_TABLE = [
    (0.1, 3, 300),
    (0.2, 3, 300),
    (0.3, 4, 300),
    (0.4, 4, 300),
    (0.5, 5, 300),
    (0.6, 6, 150),
    (0.7, 7, 150),
    (0.8, 8, 150),
    (0.9, 11, 150),
]


@dataclass(frozen=True)
class DenoiseConfig:
    patch_size: int = 3
    cluster_count: int = 100
    em: gmm.EmSettings = gmm.EmSettings()
    filter: switching.FilterSettings = switching.FilterSettings()
    t_p: int = 0
    t_s: int = 255
    min_cluster_size: int | None = None
    max_patch_size: int = 11

    @property
    def beta(self) -> float:
        return self.em.beta

    def __post_init__(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise ValueError(f"patch_size must be an odd integer >= 3, got {self.patch_size}")
        if self.patch_size > self.max_patch_size:
            raise ValueError(f"patch_size {self.patch_size} exceeds max_patch_size {self.max_patch_size}")
        if self.cluster_count < 1:
            raise ValueError("cluster_count must be >= 1")
        if not (0 <= self.t_p < self.t_s <= 255):
            raise ValueError(f"thresholds must satisfy 0 <= t_p < t_s <= 255, got {self.t_p}, {self.t_s}")
        if self.min_cluster_size is not None and self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DenoiseConfig":
        data = dict(data)
        if "em" in data:
            data["em"] = gmm.EmSettings(**data["em"])
        if "filter" in data:
            data["filter"] = switching.FilterSettings(**data["filter"])
        return cls(**data)


@dataclass
class RunStats:
    flagged: int = 0
    patch_size: int = 0
    cluster_count: int = 0
    cluster_sizes_before: list = field(default_factory=list)
    cluster_sizes_after: list = field(default_factory=list)
    clusters_retained: int = 0
    em_iterations: int = 0
    objective_trace: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)
    model: gmm.GmmModel | None = field(default=None, repr=False, compare=False)

    def summary_lines(self) -> list[str]:
        lines = [
            f"flagged={self.flagged}",
            f"patch_size={self.patch_size}",
            f"cluster_count={self.cluster_count}",
            f"clusters_retained={self.clusters_retained}",
            f"em_iterations={self.em_iterations}",
        ]
        if self.objective_trace:
            lines.append(f"final_objective={self.objective_trace[-1]:.6f}")
        for stage, secs in self.stage_seconds.items():
            lines.append(f"time_{stage}_s={secs:.3f}")
        return lines

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "model"}
        return json_safe(out)


def json_safe(value):
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def table_entry(density: float) -> tuple[int, int]:
    """(patch size, cluster count) for a noise density, before odd rounding."""
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must be in [0, 1], got {density}")
    for bound, size, count in _DENSITY_TABLE:
        if density <= bound + 1e-9:
            return size, count
    return _DENSITY_TABLE[-1][1:]


def default_config_for_density(density: float, base: DenoiseConfig | None = None) -> DenoiseConfig:
    """Pick patch size and cluster count for a noise density.

    Even patch sizes in the table are rounded up to the next odd size so
    every patch has a centre pixel.
    """
    size, count = table_entry(density)
    if size % 2 == 0:
        size += 1
    base = base or DenoiseConfig()
    return replace(base, patch_size=size, cluster_count=count,
                   max_patch_size=max(base.max_patch_size, size))


def denoise(img, config: DenoiseConfig = DenoiseConfig(),
            model: gmm.GmmModel | None = None) -> tuple[np.ndarray, RunStats]:
    """Run detection, patch clustering, switching restoration and fusion.

    A previously fitted ``model`` (same patch size) skips the EM fit; only
    the E-step assignment and pruning are redone.  The fitted, unpruned
    model is available as ``stats.model``.
    """
    img = validate_image(img)
    stats = RunStats(patch_size=config.patch_size)
    clock = time.perf_counter

    t0 = clock()
    mask = noise.detect(img, config.t_p, config.t_s)
    stats.flagged = mask.count
    stats.stage_seconds["detect"] = clock() - t0
    if stats.flagged == 0:
        return img.copy(), stats

    t0 = clock()
    ps = patches.extract(img, mask, config.patch_size)
    stats.stage_seconds["extract"] = clock() - t0

    t0 = clock()
    if model is None:
        k = min(config.cluster_count, len(ps))
        model, assignment = gmm.fit(ps.vectors, k, config.em)
    else:
        if model.dim != ps.dim:
            raise ValueError(f"model dimension {model.dim} does not match patch size {config.patch_size}")
        k = model.k
        model = replace(model, retained=np.ones(k, dtype=bool))
        log_resp, _ = gmm.e_step_log(ps.vectors, model)
        assignment = gmm.Assignment(labels=np.argmax(log_resp, axis=1), log_resp=log_resp)
    stats.model = model
    stats.cluster_count = k
    stats.em_iterations = model.n_iter
    stats.objective_trace = list(model.objective_trace)
    stats.cluster_sizes_before = assignment.sizes(k).tolist()
    min_size = config.min_cluster_size
    if min_size is None:
        min_size = config.em.min_cluster_size
    if min_size is None:
        min_size = gmm.default_min_cluster_size(len(ps), k)
    model, assignment = gmm.prune(model, assignment, min_size)
    sizes = assignment.sizes(k)
    stats.cluster_sizes_after = sizes[model.retained].tolist()
    stats.clusters_retained = int(model.retained.sum())
    stats.stage_seconds["cluster"] = clock() - t0

    t0 = clock()
    restored = switching.restore_all(mask, assignment, model, ps, config.filter)
    out = switching.fuse(img, mask, restored)
    stats.stage_seconds["filter"] = clock() - t0
    return out, stats


def estimated_density(img, t_p: int = 0, t_s: int = 255) -> float:
    mask = noise.detect(img, t_p, t_s)
    return mask.count / mask.kind.size
