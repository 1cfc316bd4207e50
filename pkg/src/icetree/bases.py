"""Base partitions: z-scored features, k-means runs with random cluster counts."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InputError
from .model import Dataset, Ensemble

MAX_ITER = 100
TOL = 1e-4


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    renumbered: bool = False
    inertia_history: list = field(default_factory=list)


@dataclass(frozen=True)
class EnsembleSpec:
    """c k-means runs, cluster counts drawn uniformly from ``k_range`` (inclusive)."""

    k_range: tuple[int, int]
    c: int = 30
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        lo, hi = self.k_range
        if self.c < 1:
            raise InputError(f"ensemble size must be >= 1, got {self.c}")
        if lo < 1 or hi < lo:
            raise InputError(f"invalid cluster-count range [{lo}, {hi}]")

    @classmethod
    def for_k(cls, k: int, c: int = 30, seed: int = 0) -> "EnsembleSpec":
        return cls((k, 3 * k), c=c, seed=seed)


def standardize(ds: Dataset) -> Dataset:
    x = ds.features
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population std
    centered = x - mean
    # a constant column can leave a rounding-sized mean residue; treat it as zero spread
    constant = x.max(axis=0) == x.min(axis=0)
    scaled = np.divide(centered, std, out=np.zeros_like(centered), where=(std > 0) & ~constant)
    return ds.with_features(scaled)


def minmax_scale(ds: Dataset) -> Dataset:
    """Rescale every feature to [0, 1]; constant features become 0."""
    x = ds.features
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    scaled = np.divide(x - lo, span, out=np.zeros_like(x), where=span > 0)
    return ds.with_features(scaled)


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            i = int(rng.choice(n, p=d2 / total))
        else:
            i = int(rng.integers(n))
        chosen.append(i)
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(points, k: int, seed: int, max_iter: int = MAX_ITER, tol: float = TOL) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeding.

    Stops on stable assignments, on total squared centroid movement below
    ``tol``, or after ``max_iter`` iterations. A cluster that loses all its
    points is re-seeded at the point farthest from its current centroid.
    Labels of the result are renumbered densely.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"k-means needs 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centroids = _plusplus(x, k, rng)

    history = []
    prev_labels = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _sq_dists(x, centroids)
        labels = d2.argmin(axis=1)
        point_cost = d2[np.arange(n), labels]
        inertia = float(point_cost.sum())
        _check_monotone(history, inertia)
        history.append(inertia)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        updated = centroids.copy()
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, None]
        if not filled.all():
            cost = point_cost.copy()
            for j in np.flatnonzero(~filled):
                far = int(cost.argmax())
                updated[j] = x[far]
                cost[far] = -1.0
        shift = float(((updated - centroids) ** 2).sum())
        centroids = updated
        prev_labels = labels
        if shift < tol:
            d2 = _sq_dists(x, centroids)
            labels = d2.argmin(axis=1)
            inertia = float(d2[np.arange(n), labels].sum())
            _check_monotone(history, inertia)
            history.append(inertia)
            break

    present, dense = np.unique(labels, return_inverse=True)
    return KMeansResult(
        labels=dense.reshape(-1),
        centroids=centroids[present],
        inertia=inertia,
        iterations=iterations,
        renumbered=len(present) < k,
        inertia_history=history,
    )


def _check_monotone(history, inertia):
    if history and inertia > history[-1] * (1 + 1e-12) + 1e-12:
        raise ContractError(f"k-means inertia increased from {history[-1]} to {inertia}")


def _run_seeds(spec: EnsembleSpec):
    lo, hi = spec.k_range
    out = []
    for t in range(spec.c):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(t,)))
        k_t = int(rng.integers(lo, hi + 1))
        out.append((k_t, int(rng.integers(2**63))))
    return out


def generate_ensemble(ds: Dataset, spec: EnsembleSpec, n_jobs: int = 1) -> Ensemble:
    """Run ``spec.c`` independent k-means partitions of ``ds``.

    Run t draws its cluster count and k-means seed from a stream derived from
    ``(spec.seed, t)`` alone, so results do not depend on ``n_jobs``.
    """
    if ds.n == 0:
        raise InputError("cannot generate base partitions for an empty dataset")
    x = standardize(ds).features if spec.standardize else ds.features
    runs = _run_seeds(spec)

    def one(run):
        return kmeans(x, run[0], run[1])

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, runs))
    else:
        results = [one(r) for r in runs]

    meta = {
        "seed": spec.seed,
        "c": spec.c,
        "k_range": list(spec.k_range),
        "standardized": spec.standardize,
        "drawn_k": [k for k, _ in runs],
        "realized_k": [len(r.centroids) for r in results],
        "run_seeds": [s for _, s in runs],
        "kmeans": {"init": "k-means++", "max_iter": MAX_ITER, "tol": TOL},
    }
    return Ensemble(np.vstack([r.labels for r in results]), metadata=meta)
