"""scikit-learn style wrappers around the oblivious algorithms.

The wrappers validate input with sklearn's helpers, run the algorithm on a
fresh simulated machine and keep that machine's trace as ``trace_`` so the
cost and obliviousness tools can inspect the fitted run.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .algorithms import kmeans, shuffle_sort, streaming_binary_search
from .runtime import Runtime, parse_mode


def check_mode(mode: str, allow_word_oblivious: bool = False) -> str:
    """Return ``mode`` if the runtime accepts it, otherwise raise ValueError."""
    if mode.partition(":")[0] == "word_oblivious" and not allow_word_oblivious:
        raise ValueError("word_oblivious applies to sorting only")
    parse_mode(mode)
    return mode


def check_vector(x, dtype=(np.int64, np.float64), min_samples: int = 0) -> np.ndarray:
    """1-d finite array of integers or floats."""
    arr = check_array(np.asarray(x).reshape(-1, 1), dtype=dtype, ensure_min_samples=min_samples)
    return arr.ravel()


class ObliviousKMeans(ClusterMixin, BaseEstimator):
    """Lloyd's k-means whose memory behaviour depends only on the input shape."""

    def __init__(self, n_clusters: int = 4, max_iter: int = 5, mode: str = "cmo_dynamic",
                 random_state: int = 0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.mode = mode
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        check_mode(self.mode)
        rt = Runtime(self.mode)
        self.cluster_centers_, self.labels_ = kmeans(
            X, self.n_clusters, self.max_iter, runtime=rt, seed=self.random_state)
        self.n_features_in_ = X.shape[1]
        self.trace_ = rt.trace
        self.cost_ = rt.machine.cost()
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        d = ((X[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d, axis=1)


class ObliviousSorter(TransformerMixin, BaseEstimator):
    """``transform`` returns each column sorted ascending."""

    def __init__(self, mode: str = "cmo_dynamic", random_state: int = 0):
        self.mode = mode
        self.random_state = random_state

    def fit(self, X, y=None):
        check_mode(self.mode, allow_word_oblivious=True)
        self.n_features_in_ = check_array(X, dtype=(np.int64, np.float64),
                                          ensure_min_samples=0).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=(np.int64, np.float64), ensure_min_samples=0)
        out = np.empty_like(X)
        self.traces_ = []
        for j in range(X.shape[1]):
            rt = Runtime(self.mode)
            out[:, j] = shuffle_sort(X[:, j], self.mode, self.random_state, runtime=rt)
            self.traces_.append(rt.trace)
        return out


class ObliviousSearcher(BaseEstimator):
    """Index a sorted array; ``predict`` returns the position of each query or -1."""

    def __init__(self, mode: str = "cmo_dynamic"):
        self.mode = mode

    def fit(self, X, y=None):
        check_mode(self.mode)
        a = check_vector(X, np.int64, min_samples=1)
        if np.any(a[1:] < a[:-1]):
            raise ValueError("data must be sorted ascending")
        self.data_ = a
        return self

    def predict(self, X):
        check_is_fitted(self, "data_")
        q = check_vector(X, np.int64)
        rt = Runtime(self.mode)
        out = streaming_binary_search(self.data_, q, runtime=rt)
        self.trace_ = rt.trace
        return out
