"""Small seeded regression sets for the conformal tests."""

import numpy as np

from cpbid.data import Dataset


def make_ds(X, y, start="2016-01-01T00:00"):
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    names = tuple(f"x{j}" for j in range(X.shape[1]))
    ts = np.datetime64(start, "s") + np.arange(len(y)) * np.timedelta64(3600, "s")
    return Dataset(ts, y, X, names, np.ones(len(y), bool))


def hetero_regression(n, seed, noise=(0.02, 0.2)):
    """``y = 0.8 x0 + 0.2 x1`` plus noise whose scale grows with the signal.

    Samples are i.i.d., so any split into calibration and test parts is
    exchangeable.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, 3))
    f = 0.8 * X[:, 0] + 0.2 * X[:, 1]
    sd = noise[0] + (noise[1] - noise[0]) * X[:, 0]
    return X, f + sd * rng.normal(size=n)


def split_sets(n_train, n_cal, n_test, seed, **kw):
    X, y = hetero_regression(n_train + n_cal + n_test, seed, **kw)
    a, b = n_train, n_train + n_cal
    return (make_ds(X[:a], y[:a]), make_ds(X[a:b], y[a:b], "2017-01-01T00:00"),
            make_ds(X[b:], y[b:], "2019-01-01T00:00"))
