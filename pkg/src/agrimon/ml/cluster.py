"""k-means (k-means++ seeding, Lloyd iterations) and fuzzy c-means."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyData, InvalidFuzzifier, TooManyClusters


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # explicit differences (exact zeros for coincident points), one center at a time
    out = np.empty((X.shape[0], C.shape[0]))
    for j in range(C.shape[0]):
        out[:, j] = ((X - C[j]) ** 2).sum(axis=1)
    return out


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise EmptyData("no rows to cluster")
    return X


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    k: int
    seed: int
    inertia: float = float("nan")
    n_iter: int = 0

    def predict(self, X) -> np.ndarray:
        return np.argmin(_sq_dists(_as_matrix(X), self.centroids), axis=1)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[idx]).min(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, X[nxt : nxt + 1])[:, 0])
    return X[idx].copy()


def kmeans_fit(X, k: int, seed: int, max_iter: int = 300, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(model, assignments)``. A cluster that loses all its points
    keeps its previous centroid.
    """
    X = _as_matrix(X)
    if k < 1 or k > X.shape[0]:
        raise TooManyClusters(f"k={k} with n={X.shape[0]} points")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    labels = np.zeros(X.shape[0], dtype=np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        labels = np.argmin(_sq_dists(X, C), axis=1)
        new = C.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        shift = np.sqrt(((new - C) ** 2).sum(axis=1)).max()
        C = new
        if shift < tol:
            break
    labels = np.argmin(_sq_dists(X, C), axis=1)
    inertia = float(_sq_dists(X, C)[np.arange(X.shape[0]), labels].sum())
    return KMeansModel(C, k, seed, inertia, it), labels


@dataclass(frozen=True)
class FcmModel:
    centers: np.ndarray
    m: float
    c: int
    seed: int = 0
    objective: tuple = ()

    def __post_init__(self):
        if not self.m > 1:
            raise InvalidFuzzifier(f"fuzzifier m must be > 1, got {self.m}")

    def membership(self, X) -> np.ndarray:
        return _memberships(_as_matrix(X), self.centers, self.m)


def _memberships(X: np.ndarray, C: np.ndarray, m: float) -> np.ndarray:
    d2 = _sq_dists(X, C)
    U = np.empty_like(d2)
    zero = d2 == 0
    hit = zero.any(axis=1)
    if hit.any():
        # on a center: all weight there (split evenly if centers coincide)
        z = zero[hit].astype(np.float64)
        U[hit] = z / z.sum(axis=1, keepdims=True)
    rest = ~hit
    if rest.any():
        inv = d2[rest] ** (-1.0 / (m - 1.0))
        U[rest] = inv / inv.sum(axis=1, keepdims=True)
    return U


def fcm_membership(model: FcmModel, x) -> np.ndarray:
    """Membership weights of one element (or of each row of a matrix)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.membership(x[None, :])[0]
    return model.membership(x)


def fcm_objective(X, C, U, m) -> float:
    return float(((U**m) * _sq_dists(X, C)).sum())


def fcm_fit(X, c: int, m: float = 2.0, seed: int = 0, max_iter: int = 300, tol: float = 1e-9):
    """Fuzzy c-means by alternating center and membership updates.

    Memberships start from a seeded random partition. The objective after
    every membership update is recorded in ``model.objective``; it never
    increases. Stops when the largest membership change drops below ``tol``
    or when an update fails to lower the objective (rounding at convergence).
    Returns ``(model, memberships)``.
    """
    if not m > 1:
        raise InvalidFuzzifier(f"fuzzifier m must be > 1, got {m}")
    X = _as_matrix(X)
    if c < 1 or c > X.shape[0]:
        raise TooManyClusters(f"c={c} with n={X.shape[0]} points")
    rng = np.random.default_rng(seed)
    U = rng.random((X.shape[0], c))
    U /= U.sum(axis=1, keepdims=True)
    history = []
    C = None
    for _ in range(max_iter):
        W = U**m
        C_new = (W.T @ X) / W.sum(axis=0)[:, None]
        U_new = _memberships(X, C_new, m)
        obj = fcm_objective(X, C_new, U_new, m)
        if history and obj > history[-1]:
            # only rounding can raise the objective: already converged
            break
        history.append(obj)
        delta = np.abs(U_new - U).max()
        C, U = C_new, U_new
        if delta < tol:
            break
    return FcmModel(C, float(m), c, seed, tuple(history)), U
