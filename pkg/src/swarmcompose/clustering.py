"""Seeded k-means with k-means++ initialisation."""

from __future__ import annotations

import numpy as np


def kmeans_plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a chosen centre
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[i] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6):
    """Partition ``points`` into ``k`` non-empty clusters.

    Returns ``(labels, centroids)``. Distance ties go to the lowest cluster
    index. A cluster that empties during Lloyd iterations is re-seeded with the
    point farthest from its current centre, so every label in ``range(k)`` is
    used whenever ``k <= len(points)``.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centers = kmeans_plusplus_init(points, k, rng)
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        labels = _fill_empty(points, labels, d2, k)
        new = _means(points, labels, k)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = _fill_empty(points, np.argmin(d2, axis=1), d2, k)
    return labels, _means(points, labels, k)


def _means(points, labels, k):
    sizes = np.bincount(labels, minlength=k)[:, None]
    sums = np.stack([np.bincount(labels, weights=points[:, c], minlength=k)
                     for c in range(points.shape[1])], axis=1)
    return sums / sizes


def _fill_empty(points, labels, d2, k):
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        own = d2[np.arange(len(points)), labels]
        sizes = np.bincount(labels, minlength=k)
        # only steal from clusters that keep at least one member
        own = np.where(sizes[labels] > 1, own, -1.0)
        labels[int(np.argmax(own))] = j
    return labels
