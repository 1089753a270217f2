"""Unsupervised structure probing of pooled embeddings: k-means with
k-means++ seeding and restarts, PCA, exact t-SNE, and silhouette scoring."""

from dataclasses import dataclass

import numpy as np

from .seeding import rng_for


@dataclass
class PointSet:
    ids: list[str]
    x: np.ndarray
    labels: np.ndarray | None = None  # for coloring only

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[0] < 2:
            raise ValueError("point set needs an n x d matrix with n >= 2")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("point set contains non-finite values")

    def __len__(self):
        return self.x.shape[0]


@dataclass
class ClusterReport:
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    silhouette: float | None
    seed: int

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "k": int(self.centroids.shape[0]),
                "inertia": self.inertia,
                "silhouette": self.silhouette,
                "seed": self.seed,
                "cluster_sizes": np.bincount(
                    self.assignment, minlength=self.centroids.shape[0]
                ).tolist(),
            },
            sort_keys=True,
        )


def _sq_dists(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp_init(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(x, centers, max_iter, tol):
    k = centers.shape[0]
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        assign = d2.argmin(axis=1)
        # Repair empty clusters by stealing the farthest point from the
        # largest cluster.
        for j in range(k):
            if np.any(assign == j):
                continue
            sizes = np.bincount(assign, minlength=k)
            big = int(sizes.argmax())
            members = np.where(assign == big)[0]
            far = members[d2[members, big].argmax()]
            assign[far] = j
            centers[j] = x[far]
        new_centers = np.stack([x[assign == j].mean(axis=0) for j in range(k)])
        movement = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if movement < tol:
            break
    d2 = _sq_dists(x, centers)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(x.shape[0]), assign].sum())
    return assign, centers, inertia


def kmeans(
    ps: PointSet,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_restarts: int = 10,
    init_centroids: np.ndarray | None = None,
) -> ClusterReport:
    """Lloyd iterations from k-means++ starts; keeps the best of n_restarts.

    Passing init_centroids runs a single Lloyd descent from those centers.
    """
    n = len(ps)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    if init_centroids is not None:
        assign, centers, inertia = _lloyd(
            ps.x, np.array(init_centroids, dtype=np.float64), max_iter, tol
        )
        best = (assign, centers, inertia)
    else:
        best = None
        for r in range(n_restarts):
            rng = rng_for(seed, f"kmeans:restart{r}")
            centers = _kmeans_pp_init(ps.x, k, rng)
            assign, centers, inertia = _lloyd(ps.x, centers, max_iter, tol)
            if best is None or inertia < best[2]:
                best = (assign, centers, inertia)

    assign, centers, inertia = best
    sil = silhouette(ps, assign) if k >= 2 else None
    return ClusterReport(
        assignment=assign, centroids=centers, inertia=inertia, silhouette=sil, seed=seed
    )


def pca(ps: PointSet, out_dims: int):
    """Principal components via SVD of the centered data.

    Returns (projection n x out_dims, components out_dims x d, explained
    variance fractions). Sign convention: each component's largest-magnitude
    entry is positive.
    """
    n, d = ps.x.shape
    if not 1 <= out_dims <= min(n - 1, d):
        raise ValueError(f"out_dims must be in [1, {min(n - 1, d)}], got {out_dims}")
    xc = ps.x - ps.x.mean(axis=0)
    _, svals, vt = np.linalg.svd(xc, full_matrices=False)
    components = vt[:out_dims].copy()
    for row in components:
        if row[np.abs(row).argmax()] < 0:
            row *= -1.0
    variances = svals**2 / (n - 1)
    total = xc.var(axis=0, ddof=1).sum()
    explained = variances[:out_dims] / total if total > 0 else np.zeros(out_dims)
    return xc @ components.T, components, explained


def _pairwise_sq_dists(x):
    sq = (x**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def conditional_probabilities(x: np.ndarray, perplexity: float, tol: float = 1e-5,
                              max_steps: int = 100):
    """Per-point Gaussian neighbor distributions whose entropy matches
    log(perplexity), found by binary search on each precision.

    Returns (P_conditional n x n with zero diagonal, precisions beta).
    """
    n = x.shape[0]
    d2 = _pairwise_sq_dists(np.asarray(x, dtype=np.float64))
    target = np.log(perplexity)
    p_cond = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        di = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_steps):
            w = np.exp(-beta * (di - di.min()))
            sum_w = w.sum()
            p = w / sum_w
            # Shannon entropy in nats, computed stably from the weights.
            entropy = np.log(sum_w) + beta * float((di - di.min()) @ p)
            if abs(entropy - target) < tol:
                break
            if entropy > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
        row = np.zeros(n)
        row[np.arange(n) != i] = p
        p_cond[i] = row
        betas[i] = beta
    return p_cond, betas


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


@dataclass
class TsneResult:
    embedding: np.ndarray  # n x 2
    kl_initial: float
    kl_final: float


def tsne(
    ps: PointSet,
    perplexity: float = 30.0,
    iters: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
) -> TsneResult:
    """Exact t-SNE to 2-D.

    Symmetrized Gaussian P, Student-t Q, gradient descent with momentum 0.5
    (0.8 after iteration 250) and x12 early exaggeration for the first 250
    iterations; the embedding starts from seeded Gaussian noise scaled 1e-4.
    """
    n = len(ps)
    if n < 5:
        raise ValueError("t-SNE needs at least 5 points")
    if perplexity >= n:
        raise ValueError(f"perplexity ({perplexity}) must be < n ({n})")

    p_cond, _ = conditional_probabilities(ps.x, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)

    rng = rng_for(seed, "tsne")
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)

    def q_of(y_emb):
        num = 1.0 / (1.0 + _pairwise_sq_dists(y_emb))
        np.fill_diagonal(num, 0.0)
        return np.maximum(num / num.sum(), 1e-12), num

    q, _ = q_of(y)
    kl_initial = kl_divergence(p, q)

    exaggeration = 12.0
    for it in range(iters):
        p_eff = p * exaggeration if it < 250 else p
        momentum = 0.5 if it < 250 else 0.8
        q, num = q_of(y)
        coeff = (p_eff - q) * num
        grad = 4.0 * ((np.diag(coeff.sum(axis=1)) - coeff) @ y)
        velocity = momentum * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)

    q, _ = q_of(y)
    return TsneResult(embedding=y, kl_initial=kl_initial, kl_final=kl_divergence(p, q))


def silhouette(ps: PointSet, assignment) -> float:
    """Mean silhouette with Euclidean distances.

    Per point: s = (b - a) / max(a, b) with a the mean intra-cluster distance
    (excluding self) and b the smallest mean distance to another cluster.
    Points in singleton clusters contribute 0.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    clusters = np.unique(assignment)
    if clusters.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    dists = np.sqrt(_pairwise_sq_dists(ps.x))
    n = len(ps)
    scores = np.zeros(n)
    for i in range(n):
        own = assignment[i]
        same = (assignment == own) & (np.arange(n) != i)
        if not np.any(same):
            scores[i] = 0.0  # singleton cluster
            continue
        a = dists[i, same].mean()
        b = min(
            dists[i, assignment == c].mean() for c in clusters if c != own
        )
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def match_accuracy(assignment, labels) -> float:
    """Best label-permutation agreement between cluster ids and true labels
    (two clusters, two labels)."""
    assignment = np.asarray(assignment)
    labels = np.asarray(labels)
    direct = float(np.mean(assignment == labels))
    return max(direct, 1.0 - direct)
