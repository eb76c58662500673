"""Gaussian mixture over patch vectors with a Dirichlet prior on the weights.

The mixture is fitted by MAP-EM.  E-step responsibilities are computed in
log space; the M-step uses the Dirichlet-smoothed weight update

    phi_k = (sum_n h_nk + beta) / (N + K * beta)

together with responsibility-weighted means and covariances.  Covariances
carry a trace penalty on their inverse, which adds a small ridge to every
estimate so the Gaussian densities stay evaluable on the rank-deficient
data produced by overlapping, mean-filled patches.  Because the penalty is
a proper log-prior, the MAP objective never decreases across iterations.

Clusters that end up holding only a handful of patches can be abandoned
with :func:`prune`; their patches move to the best surviving cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .noise import make_rng

LOG_2PI = math.log(2.0 * math.pi)
RIDGE_FLOOR = 1e-6
# total responsibility below this counts as an empty cluster
EMPTY_MASS = 1e-10
FORMAT_VERSION = 1


class NumericalError(ArithmeticError):
    """Raised when a density or responsibility cannot be evaluated."""


@dataclass
class GmmModel:
    phi: np.ndarray            # (K,)
    means: np.ndarray          # (K, d)
    covariances: np.ndarray    # (K, d, d); diagonal matrices in "diag" mode
    beta: float
    retained: np.ndarray       # (K,) bool
    empty: np.ndarray = None   # (K,) bool, clusters that received no mass in the last M-step
    covariance_type: str = "full"
    objective_trace: list = field(default_factory=list)
    n_iter: int = 0

    def __post_init__(self):
        if self.empty is None:
            self.empty = np.zeros(len(self.phi), dtype=bool)

    @property
    def k(self) -> int:
        return len(self.phi)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class Assignment:
    labels: np.ndarray         # (N,) int
    log_resp: np.ndarray       # (N, K)

    @property
    def responsibilities(self) -> np.ndarray:
        return np.exp(self.log_resp)

    @property
    def membership(self) -> np.ndarray:
        """Largest responsibility of each patch."""
        return np.exp(self.log_resp.max(axis=1))

    def sizes(self, k: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=k)


@dataclass(frozen=True)
class EmSettings:
    max_iters: int = 30
    rel_tol: float = 1e-5
    ridge: float = 1e-3
    beta: float = 1.0
    min_cluster_size: int | None = None
    seed: int = 0
    covariance_type: str = "full"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.covariance_type not in ("full", "diag"):
            raise ValueError(f"covariance_type must be 'full' or 'diag', got {self.covariance_type!r}")


def default_min_cluster_size(n: int, k: int) -> int:
    return max(10, math.ceil(0.1 * n / k))


def _cholesky(sigma: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance is not positive definite") from None
    if not np.all(np.diag(chol) > 0):
        raise NumericalError("covariance is not positive definite")
    return chol


def _precision_factor(chol: np.ndarray) -> np.ndarray:
    # upper-triangular U with inv(Sigma) = U @ U.T
    d = chol.shape[0]
    return solve_triangular(chol, np.eye(d), lower=True, check_finite=False).T


def _logpdf_chol(x: np.ndarray, mu: np.ndarray, chol: np.ndarray) -> np.ndarray:
    d = mu.shape[0]
    u = _precision_factor(chol)
    z = x @ u - mu @ u
    maha = np.einsum("ij,ij->i", z, z)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (d * LOG_2PI + logdet + maha)


def _logpdf_diag(x: np.ndarray, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    if not np.all(var > 0):
        raise NumericalError("diagonal covariance has non-positive entries")
    d = mu.shape[0]
    diff = x - mu
    maha = (diff * diff / var).sum(axis=1)
    return -0.5 * (d * LOG_2PI + np.log(var).sum() + maha)


def gauss_logpdf(p, mu, sigma):
    """Log multivariate normal density via a Cholesky factorisation.

    ``p`` may be a single ``d``-vector (returns a float) or an ``(N, d)``
    array (returns ``N`` values).
    """
    p = np.asarray(p, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(mu.size, mu.size)
    single = p.ndim == 1
    out = _logpdf_chol(np.atleast_2d(p), mu, _cholesky(sigma))
    return float(out[0]) if single else out


def log_joint(vectors: np.ndarray, model: GmmModel) -> np.ndarray:
    """``log phi_k + log Gauss(p_n | mu_k, Sigma_k)`` as an ``(N, K)`` array."""
    x = np.asarray(vectors, dtype=np.float64)
    out = np.empty((x.shape[0], model.k))
    with np.errstate(divide="ignore"):
        log_phi = np.log(model.phi)
    for k in range(model.k):
        if model.covariance_type == "diag":
            out[:, k] = _logpdf_diag(x, model.means[k], np.diag(model.covariances[k]))
        else:
            out[:, k] = _logpdf_chol(x, model.means[k], _cholesky(model.covariances[k]))
        out[:, k] += log_phi[k]
    return out


def _normalise(lj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    row_max = lj.max(axis=1)
    if not np.all(np.isfinite(row_max)):
        raise NumericalError("all component densities underflowed for some patch")
    lse = logsumexp(lj, axis=1)
    return lj - lse[:, None], lse


def e_step_log(vectors, model: GmmModel) -> tuple[np.ndarray, float]:
    """Log responsibilities and the data log-likelihood under ``model``."""
    log_resp, lse = _normalise(log_joint(vectors, model))
    return log_resp, float(lse.sum())


def e_step(vectors, model: GmmModel) -> np.ndarray:
    """Responsibilities ``h_nk``; every row sums to one."""
    return np.exp(e_step_log(vectors, model)[0])


def log_prior(phi: np.ndarray, beta: float) -> float:
    # Dirichlet prior for which the smoothed weight update is the exact maximiser.
    with np.errstate(divide="ignore"):
        return float(beta * np.log(phi).sum())


def ridge_strength(vectors, k: int, ridge: float) -> float:
    """Covariance penalty ``lam`` for ``ridge``.

    The M-step adds ``lam / N_k`` to the diagonal of cluster ``k``, where
    ``lam = ridge * (mean per-component variance + 1e-6) * N / K``; a
    cluster of average size ``N / K`` is thus widened by ``ridge`` times
    the data's average variance.
    """
    x = np.asarray(vectors, dtype=np.float64)
    return ridge * (float(x.var(axis=0).mean()) + RIDGE_FLOOR) * x.shape[0] / k


def covariance_penalty(model: GmmModel, lam: float) -> float:
    """``-lam/2 * sum_k tr(inv(Sigma_k))``, the log-prior matching the ridge."""
    if lam == 0:
        return 0.0
    total = 0.0
    for k in range(model.k):
        if model.covariance_type == "diag":
            total += float((1.0 / np.diag(model.covariances[k])).sum())
        else:
            u = _precision_factor(_cholesky(model.covariances[k]))
            total += float((u * u).sum())
    return -0.5 * lam * total


def map_objective(vectors, model: GmmModel, ridge: float = 0.0) -> float:
    """Log-likelihood plus the weight and covariance log-priors."""
    lam = ridge_strength(vectors, model.k, ridge)
    return (e_step_log(vectors, model)[1] + log_prior(model.phi, model.beta)
            + covariance_penalty(model, lam))


def m_step(vectors, responsibilities, beta: float, ridge: float,
           previous: GmmModel | None = None, covariance_type: str = "full") -> GmmModel:
    """Re-estimate weights, means and covariances from responsibilities.

    Covariances are ``(S_k + lam I) / N_k`` with ``S_k`` the weighted
    scatter matrix and ``lam`` from :func:`ridge_strength`; with
    ``ridge=0`` this is the plain weighted covariance.  A cluster whose total responsibility is zero keeps its previous mean and
    covariance (taken from ``previous``) and is flagged in ``empty``.
    """
    x = np.asarray(vectors, dtype=np.float64)
    h = np.asarray(responsibilities, dtype=np.float64)
    n, d = x.shape
    k = h.shape[1]

    nk = h.sum(axis=0)
    phi = (nk + beta) / (n + k * beta)
    phi = phi / phi.sum()

    lam = ridge_strength(x, k, ridge)
    means = np.zeros((k, d))
    covs = np.zeros((k, d, d))
    empty = nk < EMPTY_MASS
    for j in range(k):
        if empty[j]:
            if previous is None:
                raise NumericalError(f"cluster {j} received no responsibility and has no previous estimate")
            means[j] = previous.means[j]
            covs[j] = previous.covariances[j]
            continue
        # rows with exactly zero responsibility contribute nothing
        rows = np.flatnonzero(h[:, j] > 0)
        w = h[rows, j]
        xs = x[rows]
        means[j] = w @ xs / nk[j]
        diff = xs - means[j]
        if covariance_type == "diag":
            scatter = np.diag(w @ (diff * diff))
        else:
            scaled = diff * np.sqrt(w)[:, None]
            scatter = scaled.T @ scaled
            scatter = 0.5 * (scatter + scatter.T)
        scatter[np.diag_indices(d)] += lam
        covs[j] = scatter / nk[j]

    return GmmModel(phi=phi, means=means, covariances=covs, beta=beta,
                    retained=np.ones(k, dtype=bool), empty=empty,
                    covariance_type=covariance_type)


def init_means(vectors: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Pick ``k`` distinct rows by greedy k-means++ seeding.

    Each step draws ``2 + floor(ln k)`` candidates with squared-distance
    weighting and keeps the one that most reduces the total squared distance
    to the chosen set.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    rng = make_rng(seed)
    trials = 2 + int(math.log(k)) if k > 1 else 1
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for _ in range(1, k):
        weights = np.where(taken, 0.0, d2)
        total = weights.sum()
        if total > 0:
            cands = rng.choice(n, size=trials, p=weights / total)
        else:
            # fewer distinct vectors than clusters: fall back to uniform over unused rows
            cands = rng.choice(np.flatnonzero(~taken), size=1)
        best, best_d2, best_cost = -1, None, math.inf
        for c in cands:
            c = int(c)
            if taken[c]:
                continue
            cand_d2 = np.minimum(d2, ((x - x[c]) ** 2).sum(axis=1))
            cost = float(cand_d2.sum())
            if cost < best_cost:
                best, best_d2, best_cost = c, cand_d2, cost
        chosen.append(best)
        taken[best] = True
        d2 = best_d2
    return x[chosen].copy()


def initial_model(vectors, k: int, settings: EmSettings, means=None) -> GmmModel:
    x = np.asarray(vectors, dtype=np.float64)
    d = x.shape[1]
    if means is None:
        means = init_means(x, k, settings.seed)
    means = np.asarray(means, dtype=np.float64).reshape(k, d)
    s2 = max(float(x.var(axis=0).mean()), RIDGE_FLOOR)
    covs = np.broadcast_to(s2 * np.eye(d), (k, d, d)).copy()
    return GmmModel(phi=np.full(k, 1.0 / k), means=means, covariances=covs,
                    beta=settings.beta, retained=np.ones(k, dtype=bool),
                    covariance_type=settings.covariance_type)


def fit(vectors, k: int, settings: EmSettings = EmSettings(), init=None) -> tuple[GmmModel, Assignment]:
    """Fit a ``k``-component mixture by MAP-EM.

    Iterates until ``settings.max_iters`` M-steps have run or the relative
    change of the MAP objective drops below ``settings.rel_tol``.  ``init``
    optionally supplies the ``(k, d)`` starting means instead of the seeded
    k-means++ draw.  The returned model records its objective trace (one
    value per evaluated parameter set, starting at the initial one) and
    has every cluster retained.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("vectors must be an (N, d) array with d >= 1")
    if k < 1 or x.shape[0] < k:
        raise ValueError(f"need at least k={k} vectors, got {x.shape[0]}")

    model = initial_model(x, k, settings, init)
    lam = ridge_strength(x, k, settings.ridge)
    trace = []
    n_iter = 0
    while True:
        log_resp, loglik = e_step_log(x, model)
        objective = loglik + log_prior(model.phi, model.beta) + covariance_penalty(model, lam)
        trace.append(objective)
        if len(trace) > 1:
            prev = trace[-2]
            if abs(objective - prev) <= settings.rel_tol * abs(prev):
                break
        if n_iter >= settings.max_iters:
            break
        model = m_step(x, np.exp(log_resp), model.beta, settings.ridge,
                       previous=model, covariance_type=settings.covariance_type)
        n_iter += 1

    model.objective_trace = trace
    model.n_iter = n_iter
    labels = np.argmax(log_resp, axis=1)
    return model, Assignment(labels=labels, log_resp=log_resp)


def prune(model: GmmModel, assignment: Assignment, min_cluster_size: int) -> tuple[GmmModel, Assignment]:
    """Abandon clusters holding fewer than ``min_cluster_size`` patches.

    Responsibilities are renormalised over the surviving clusters and every
    patch is relabelled to its most responsible survivor.  The largest
    cluster always survives.
    """
    sizes = assignment.sizes(model.k)
    retained = model.retained & (sizes >= min_cluster_size)
    if not retained.any():
        retained = np.zeros(model.k, dtype=bool)
        retained[int(np.argmax(sizes))] = True
    if np.array_equal(retained, model.retained):
        return model, assignment

    restricted = np.where(retained, assignment.log_resp, -np.inf)
    log_resp = restricted - logsumexp(restricted, axis=1)[:, None]
    labels = np.argmax(log_resp, axis=1)
    return replace(model, retained=retained), Assignment(labels=labels, log_resp=log_resp)


def save_model(path, model: GmmModel) -> None:
    """Store a model losslessly as a NumPy ``.npz`` archive (format version 1)."""
    np.savez(
        path,
        format_version=np.array(FORMAT_VERSION),
        phi=model.phi,
        means=model.means,
        covariances=model.covariances,
        beta=np.array(model.beta),
        retained=model.retained,
        empty=model.empty,
        covariance_type=np.array(model.covariance_type),
        objective_trace=np.asarray(model.objective_trace, dtype=np.float64),
        n_iter=np.array(model.n_iter),
    )


def load_model(path) -> GmmModel:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        return GmmModel(
            phi=data["phi"].copy(),
            means=data["means"].copy(),
            covariances=data["covariances"].copy(),
            beta=float(data["beta"]),
            retained=data["retained"].copy(),
            empty=data["empty"].copy(),
            covariance_type=str(data["covariance_type"]),
            objective_trace=data["objective_trace"].tolist(),
            n_iter=int(data["n_iter"]),
        )
