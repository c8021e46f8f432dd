"""2D projection of document-topic proportions for plotting.

Plain mean-centered PCA onto the top-2 principal components via
eigendecomposition of the covariance, with a deterministic sign
convention (each component's largest-magnitude coordinate is positive)
so coordinates are reproducible across runs.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator


class DegenerateInput(Exception):
    pass


class PcaProjector2D(BaseEstimator):
    def __init__(self, n_components: int = 2):
        self.n_components = n_components

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2:
            raise DegenerateInput("need at least 2 rows")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        if not np.any(np.abs(centered) > 1e-12):
            raise DegenerateInput("all rows identical")
        cov = centered.T @ centered / (X.shape[0] - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1][: self.n_components]
        components = eigvecs[:, order].T
        for i in range(components.shape[0]):
            j = int(np.argmax(np.abs(components[i])))
            if components[i, j] < 0:
                components[i] = -components[i]
        self.components_ = components
        self.explained_variance_ = eigvals[order]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean_) @ self.components_.T

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


def project_2d(doc_topic_proportions) -> np.ndarray:
    """D x 2 coordinates for the rows of a D x K proportion matrix."""
    return PcaProjector2D(n_components=2).fit_transform(doc_topic_proportions)
