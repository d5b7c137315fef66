"""Seeded Lloyd's k-means with k-means++ initialization.

Hand-rolled rather than delegated so the contracts the bank relies on
are explicit: assignment ties break toward the lowest cluster index,
reruns with the same seed are bit-identical, and the returned labels
are a fixed point of assign-then-update.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .utils import as_rng


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clamp tiny negatives from cancellation.
    d2 = (
        (points**2).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers**2).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeans_pp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding over distinct point indices."""
    rng = as_rng(rng)
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # All remaining mass is zero (duplicate points); fall back to
            # the lowest-index point not yet chosen.
            remaining = [i for i in range(n) if i not in chosen]
            idx = remaining[0]
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans(points: np.ndarray, k: int, seed, max_iters: int = 100):
    """Cluster ``points`` [n, d] into ``k`` groups.

    Returns ``(centroids [k, d], labels [n], inertia_history)``. The
    history holds the assignment-step objective (sum of squared
    distances to the nearest centroid), which Lloyd's algorithm keeps
    non-increasing. On convergence the labels are stable under one more
    assign-then-update round.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ParameterError(f"points must be 2-D, got shape {points.shape}")
    n = points.shape[0]
    if not (1 <= k <= n):
        raise ParameterError(f"need 1 <= k <= n ({n}), got k={k}")
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")

    rng = as_rng(seed)
    centroids = kmeans_pp_init(points, k, rng)
    labels = None
    history: list[float] = []
    for _ in range(max_iters):
        d2 = _pairwise_sq_dists(points, centroids)
        new_labels = d2.argmin(axis=1)  # argmin ties -> lowest cluster index
        history.append(float(d2[np.arange(n), new_labels].sum()))
        new_labels = _repair_empty(points, centroids, new_labels, k)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return centroids, labels, history


def _repair_empty(points, centroids, labels, k) -> np.ndarray:
    """Reseed empty clusters with the point farthest from its centroid."""
    counts = np.bincount(labels, minlength=k)
    if (counts > 0).all():
        return labels
    labels = labels.copy()
    for j in range(k):
        if counts[j] > 0:
            continue
        resid = ((points - centroids[labels]) ** 2).sum(axis=1)
        # Only steal from clusters that can spare a point.
        resid[counts[labels] <= 1] = -1.0
        donor = int(resid.argmax())
        counts[labels[donor]] -= 1
        labels[donor] = j
        counts[j] = 1
    return labels
