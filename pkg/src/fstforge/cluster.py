"""Weighted k-means and small linear classifiers, in plain numpy."""

from __future__ import annotations

import numpy as np

from .errors import InvalidK


def standardize(X: np.ndarray, w: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted z-scores; dimensions with zero variance map to 0.

    Returns (Z, mean, sd).
    """
    w = np.ones(len(X)) if w is None else np.asarray(w, dtype=float)
    mu = (w[:, None] * X).sum(axis=0) / w.sum()
    var = (w[:, None] * (X - mu) ** 2).sum(axis=0) / w.sum()
    sd = np.sqrt(var)
    scale = np.where(sd > 1e-12, sd, 1.0)
    Z = (X - mu) / scale
    Z[:, sd <= 1e-12] = 0.0
    return Z, mu, sd


def _sq_dist(X: np.ndarray, C: np.ndarray, chunk: int = 8192) -> np.ndarray:
    out = np.empty((len(X), len(C)))
    cc = (C ** 2).sum(axis=1)
    for lo in range(0, len(X), chunk):
        x = X[lo: lo + chunk]
        d = (x ** 2).sum(axis=1)[:, None] - 2.0 * x @ C.T + cc[None, :]
        out[lo: lo + chunk] = np.maximum(d, 0.0)
    return out


def distinct_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique rows and the inverse index mapping each row to its unique row."""
    U, inv = np.unique(X, axis=0, return_inverse=True)
    return U, inv.reshape(-1)


def kmeans(X: np.ndarray, k: int, w: np.ndarray | None = None, seed: int = 0,
           max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Weighted k-means++ seeding followed by Lloyd iterations.

    Returns (assignment, centroids).  Stops at an assignment fixpoint or after
    ``max_iter`` rounds; ties go to the lowest centroid index and empty
    clusters keep their previous centroid.
    """
    n = len(X)
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    U, inv = distinct_rows(X)
    if k < 1 or k > len(U):
        raise InvalidK(f"k={k} but only {len(U)} distinct vectors")
    uw = np.bincount(inv, weights=w, minlength=len(U))
    rng = np.random.default_rng(seed)

    centers = [int(rng.choice(len(U), p=uw / uw.sum()))]
    d2 = _sq_dist(U, U[centers[0]][None])[:, 0]
    for _ in range(1, k):
        p = uw * d2
        # chosen points have zero distance, so p is positive somewhere while k <= distinct
        c = int(rng.choice(len(U), p=p / p.sum()))
        centers.append(c)
        d2 = np.minimum(d2, _sq_dist(U, U[c][None])[:, 0])
    C = U[centers].copy()

    assign = None
    for _ in range(max_iter):
        new = _sq_dist(U, C).argmin(axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        mass = np.bincount(assign, weights=uw, minlength=k)
        sums = np.zeros_like(C)
        np.add.at(sums, assign, uw[:, None] * U)
        live = mass > 0
        C[live] = sums[live] / mass[live, None]
    return assign[inv], C


class LinearClassifier:
    """One-vs-rest linear model trained by full-batch (sub)gradient descent.

    ``kind`` is "svm" (hinge loss) or "logistic_regression".  Inputs are
    standardized with the training set's weighted statistics.
    """

    def __init__(self, kind: str = "svm", epochs: int = 200, lr: float = 0.1, l2: float = 1e-4):
        if kind not in ("svm", "logistic_regression"):
            raise ValueError(f"unknown classifier {kind!r}")
        self.kind, self.epochs, self.lr, self.l2 = kind, epochs, lr, l2

    def fit(self, X: np.ndarray, y: np.ndarray, w: np.ndarray | None = None) -> "LinearClassifier":
        w = np.ones(len(X)) if w is None else np.asarray(w, dtype=float)
        Z, self.mu, sd = standardize(X, w)
        self.keep = sd > 1e-12
        self.scale = np.where(self.keep, sd, 1.0)
        self.classes = np.unique(y)
        m = len(self.classes)
        if m < 2:
            self.W, self.b = np.zeros((1, X.shape[1])), np.zeros(1)
            return self
        heads = 1 if m == 2 else m
        W = np.zeros((heads, X.shape[1]))
        b = np.zeros(heads)
        sw = w / w.sum()
        for j in range(heads):
            pos = self.classes[1] if m == 2 else self.classes[j]
            t = np.where(y == pos, 1.0, -1.0)
            for _ in range(self.epochs):
                s = Z @ W[j] + b[j]
                if self.kind == "svm":
                    g = np.where(t * s < 1.0, -t, 0.0)
                else:
                    g = -t / (1.0 + np.exp(np.clip(t * s, -50, 50)))
                g = g * sw
                W[j] -= self.lr * (Z.T @ g + self.l2 * W[j])
                b[j] -= self.lr * g.sum()
        self.W, self.b = W, b
        return self

    def decision(self, X: np.ndarray) -> np.ndarray:
        Z = (X - self.mu) / self.scale * self.keep
        return Z @ self.W.T + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        s = self.decision(X)
        if len(self.classes) == 1:
            return np.full(len(X), self.classes[0])
        if len(self.classes) == 2:
            return np.where(s[:, 0] > 0, self.classes[1], self.classes[0])
        return self.classes[s.argmax(axis=1)]
