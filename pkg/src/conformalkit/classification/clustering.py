from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from conformalkit.core.errors import InputError


@dataclass(frozen=True)
class KMeansResult:
    """Outcome of a k-means run.

    Attributes:
        labels (NDArray[np.int64]): Cluster index of every point.
        centers (NDArray[np.float64]): The final cluster centers.
        iterations (int): Number of Lloyd iterations performed.
    """

    labels: NDArray[np.int64]
    centers: NDArray[np.float64]
    iterations: int


def _squared_distances(
    data: NDArray[np.float64], centers: NDArray[np.float64]
) -> NDArray[np.float64]:
    diff = data[:, np.newaxis, :] - centers[np.newaxis, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_plus_plus(
    data: NDArray[np.float64], num_clusters: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Pick initial centers by D^2 sampling.

    Args:
        data (NDArray[np.float64]): An n x d matrix of points.
        num_clusters (int): Number of centers, at most n.
        rng (np.random.Generator): Source of randomness.

    Returns:
        NDArray[np.float64]: A num_clusters x d matrix of centers.
    """
    n = data.shape[0]
    centers = np.empty((num_clusters, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    closest = _squared_distances(data, centers[:1]).ravel()
    for c in range(1, num_clusters):
        total = closest.sum()
        # every point coincides with a center
        index = rng.integers(n) if total <= 0 else rng.choice(n, p=closest / total)
        centers[c] = data[index]
        distances = _squared_distances(data, centers[c : c + 1]).ravel()
        closest = np.minimum(closest, distances)
    return centers


def kmeans(
    data: ArrayLike,
    num_clusters: int,
    *,
    max_iter: int = 100,
    seed: int = 0,
    tol: float = 1e-10,
) -> KMeansResult:
    """Cluster points with Lloyd's algorithm from a seeded k-means++ start.

    An emptied cluster keeps its previous center.

    Args:
        data (ArrayLike): An n x d matrix of points.
        num_clusters (int): Number of clusters, in ``[1, n]``.
        max_iter (int, optional): Iteration cap. Defaults to 100.
        seed (int, optional): Seed of the initialization. Defaults to 0.
        tol (float, optional): Stop when no center moves further than this.
            Defaults to 1e-10.

    Returns:
        KMeansResult: Labels, centers and the iteration count.

    Raises:
        InputError: If the cluster count is outside ``[1, n]``.

    Examples:
        >>> points = np.array([[0.0], [0.1], [5.0], [5.1]])
        >>> result = kmeans(points, 2, seed=0)
        >>> bool(result.labels[0] == result.labels[1] != result.labels[2])
        True
    """
    points = np.asarray(data, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, np.newaxis]
    n = points.shape[0]
    if not 1 <= num_clusters <= n:
        msg = f"num_clusters must lie in [1, {n}], got {num_clusters}"
        raise InputError(msg)
    rng = np.random.default_rng(seed)
    centers = kmeans_plus_plus(points, num_clusters, rng)
    labels = np.argmin(_squared_distances(points, centers), axis=1)
    iterations = 0
    for iterations in range(1, max_iter + 1):  # noqa: B007
        updated = centers.copy()
        for c in range(num_clusters):
            members = points[labels == c]
            if members.size:
                updated[c] = members.mean(axis=0)
        shift = float(np.max(np.linalg.norm(updated - centers, axis=1)))
        centers = updated
        labels = np.argmin(_squared_distances(points, centers), axis=1)
        if shift <= tol:
            break
    return KMeansResult(
        labels=labels.astype(np.int64), centers=centers, iterations=iterations
    )
