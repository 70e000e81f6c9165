"""Shared synthetic-data builders for the test suite."""

import numpy as np
import pytest

from tsnecwm import LabeledDataset, ScatterInput, standardize


def gaussian_mixture(seed: int, n: int = 300, d: int = 50, k: int = 3, sep: float = 10.0):
    """Well-separated Gaussian blobs, standardized, with 1-based labels."""
    gen = np.random.default_rng(seed)
    centers = gen.normal(0.0, sep, (k, d))
    sizes = [n // k] * k
    sizes[0] += n - sum(sizes)
    X = np.vstack([centers[j] + gen.normal(0, 1, (s, d)) for j, s in enumerate(sizes)])
    labels = np.concatenate([np.full(s, j + 1) for j, s in enumerate(sizes)])
    perm = gen.permutation(n)
    return standardize(X[perm]).values, labels[perm]


def make_cwm2(seed: int, n: int = 500, sep: float = 10.0, sigma: float = 0.5, d: int = 2):
    """Two linear-regression clusters: input means sep apart, slopes +2/-2."""
    gen = np.random.default_rng(seed)
    n1 = n // 2
    mu1 = np.zeros(d)
    mu2 = np.zeros(d)
    mu1[0] = -sep / 2
    mu2[0] = sep / 2
    X1 = mu1 + gen.normal(0, 1, (n1, d))
    X2 = mu2 + gen.normal(0, 1, (n - n1, d))
    y1 = 1.0 + 2.0 * X1[:, 0] + gen.normal(0, sigma, n1)
    y2 = -1.0 - 2.0 * X2[:, 0] + gen.normal(0, sigma, n - n1)
    X = np.vstack([X1, X2])
    y = np.concatenate([y1, y2])
    labels = np.concatenate([np.full(n1, 1), np.full(n - n1, 2)])
    perm = gen.permutation(n)
    return LabeledDataset(features=X[perm], response=y[perm], reference_labels=labels[perm])


def make_cwm3_diag(seed: int, n: int = 450):
    """Three clusters with axis-aligned (diagonal) input covariances."""
    gen = np.random.default_rng(seed)
    per = n // 3
    centers = np.array([[-8.0, 0.0], [0.0, 8.0], [8.0, 0.0]])
    scales = np.array([[1.0, 0.5], [0.6, 1.2], [1.5, 0.8]])
    slopes = [(1.0, 2.0), (-2.0, 1.0), (0.5, -1.5)]
    Xs, ys, labs = [], [], []
    for k in range(3):
        m = per if k < 2 else n - 2 * per
        X = centers[k] + gen.normal(0, 1, (m, 2)) * scales[k]
        b0, b1 = slopes[k]
        y = b0 + b1 * X[:, 0] + gen.normal(0, 0.6, m)
        Xs.append(X)
        ys.append(y)
        labs.append(np.full(m, k + 1))
    X = np.vstack(Xs)
    y = np.concatenate(ys)
    lab = np.concatenate(labs)
    perm = gen.permutation(n)
    return LabeledDataset(features=X[perm], response=y[perm], reference_labels=lab[perm])


def random_scatter(seed: int, G: int = 3, d: int = 4) -> ScatterInput:
    """Random full-rank weighted scatters with uneven masses."""
    gen = np.random.default_rng(seed)
    W = np.empty((G, d, d))
    for g in range(G):
        A = gen.standard_normal((d, d + 3))
        W[g] = A @ A.T
    return ScatterInput(W, gen.uniform(5.0, 25.0, G))


def random_spd(seed: int, d: int) -> np.ndarray:
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((d, d + 2))
    return A @ A.T + 0.1 * np.eye(d)


@pytest.fixture(scope="session")
def gm300():
    """The shared N=300, d=50, 3-blob standardized fixture."""
    return gaussian_mixture(0)
