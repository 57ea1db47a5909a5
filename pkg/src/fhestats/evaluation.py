"""Train/test splitting, AUC, and seeded synthetic datasets."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .rng import RngHandle


def stratified_split(y, fraction: float = 0.8, seed: int = 0):
    """Indices ``(train, test)`` keeping each class's share of the training set.

    Each class contributes ``round(fraction * n_c)`` rows to training (kept
    within ``1..n_c-1``), chosen by a seeded shuffle.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("need at least two classes to stratify")
    rng = RngHandle(seed).substream("split")
    train, test = [], []
    for k, c in enumerate(classes):
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise ValueError(f"class {c!r} has fewer than two members")
        idx = rng.substream(k).generator.permutation(idx)
        n_train = min(max(int(round(fraction * len(idx))), 1), len(idx) - 1)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def auc(scores, labels) -> float:
    """Area under the ROC curve: P(score of a positive > score of a negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def confusion(scores, labels, threshold: float = 0.5) -> dict:
    pred = np.asarray(scores, dtype=float) >= threshold
    labels = np.asarray(labels).astype(bool)
    return {
        "tp": int((pred & labels).sum()),
        "fp": int((pred & ~labels).sum()),
        "tn": int((~pred & ~labels).sum()),
        "fn": int((~pred & labels).sum()),
    }


# -- synthetic data -------------------------------------------------------------------

def make_separable(n: int = 200, p: int = 3, seed: int = 0):
    """Every predictor has disjoint class supports: ``[1, 3]`` for y=1, ``[-3, -1]`` for y=0."""
    gen = RngHandle(seed).substream("separable").generator
    y = gen.integers(0, 2, size=n)
    y[: n // 2], y[n // 2:] = 0, 1
    y = gen.permutation(y)
    sign = np.where(y == 1, 1.0, -1.0)[:, None]
    X = sign * gen.uniform(1.0, 3.0, size=(n, p))
    return X, y


def make_noisy_linear(n: int = 200, p: int = 3, seed: int = 0, scale: float = 1.0):
    """Logistic response on a random linear predictor of standard normal features."""
    gen = RngHandle(seed).substream("linear").generator
    X = gen.normal(size=(n, p))
    w = gen.normal(size=p) * scale
    prob = 1.0 / (1.0 + np.exp(-(X @ w)))
    y = (gen.random(n) < prob).astype(int)
    return X, y


def make_xor(n: int = 200, seed: int = 0, noise: float = 0.0):
    """Two uniform features on ``[-1, 1]``; y = 1 when their signs differ (plus label noise)."""
    gen = RngHandle(seed).substream("xor").generator
    X = gen.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) != (X[:, 1] > 0)).astype(int)
    flip = gen.random(n) < noise
    return X, np.where(flip, 1 - y, y)


GENERATORS = {"separable": make_separable, "linear": make_noisy_linear, "xor": make_xor}
