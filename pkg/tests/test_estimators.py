import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cmo.algorithms import NOT_FOUND, kmeans
from cmo.estimators import (
    ObliviousKMeans, ObliviousSearcher, ObliviousSorter, check_mode, check_vector,
)


def test_kmeans_estimator_matches_function():
    X = np.random.default_rng(0).normal(size=(80, 2))
    est = ObliviousKMeans(n_clusters=3, max_iter=4, random_state=2).fit(X)
    cent, assign = kmeans(X, 3, 4, "plain_unprotected", seed=2)
    assert est.cluster_centers_.tobytes() == cent.tobytes()
    assert np.array_equal(est.labels_, assign)
    # labels_ come from the last assignment step, predict uses the updated centroids
    nearest = np.argmin(((X[:, None] - cent[None]) ** 2).sum(axis=2), axis=1)
    assert np.array_equal(est.predict(X), nearest)
    assert est.cost_ > 0


def test_kmeans_params_and_clone():
    est = ObliviousKMeans(n_clusters=5, mode="cmo_static:4")
    assert clone(est).get_params() == est.get_params()
    assert est.set_params(max_iter=2).max_iter == 2


def test_kmeans_feature_check():
    est = ObliviousKMeans(2, 1).fit(np.zeros((6, 3)) + np.arange(6)[:, None])
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 2)))


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ObliviousSearcher().predict([1])


@pytest.mark.parametrize("mode", ["cmo_dynamic", "word_oblivious", "plain_unprotected"])
def test_sorter(mode):
    X = np.random.default_rng(1).integers(0, 100, (40, 2))
    out = ObliviousSorter(mode=mode).fit_transform(X)
    assert np.array_equal(out, np.sort(X, axis=0))


def test_searcher():
    s = ObliviousSearcher().fit([2, 4, 8, 16])
    assert s.predict([8, 3, 2]).tolist() == [2, NOT_FOUND, 0]
    with pytest.raises(ValueError):
        ObliviousSearcher().fit([3, 1])


def test_validation_helpers():
    assert check_mode("cmo_static:16") == "cmo_static:16"
    with pytest.raises(ValueError):
        check_mode("word_oblivious")
    with pytest.raises(ValueError):
        check_mode("turbo")
    with pytest.raises(ValueError):
        check_vector([1.0, np.nan])
    assert check_vector([[1], [2]]).tolist() == [1, 2]
