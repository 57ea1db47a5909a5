import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhestats.evaluation import auc, confusion, make_noisy_linear, make_separable, make_xor, stratified_split


def pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_split_exact_stratification():
    y = [0] * 5 + [1] * 5
    train, test = stratified_split(y, 0.8, seed=1)
    assert sorted(np.asarray(y)[train].tolist()) == [0] * 4 + [1] * 4
    assert len(test) == 2 and set(train).isdisjoint(test)
    assert np.array_equal(stratified_split(y, 0.8, 1)[0], train)


def test_split_errors():
    with pytest.raises(ValueError):
        stratified_split([0, 0, 0], 0.8)
    with pytest.raises(ValueError):
        stratified_split([0, 0, 1], 0.8)
    with pytest.raises(ValueError):
        stratified_split([0, 1, 0, 1], 1.0)


def test_split_ratio_over_many_configs():
    gen = np.random.default_rng(0)
    for k in range(1000):
        n = int(gen.integers(6, 200))
        y = gen.integers(0, 2, n)
        if min(np.bincount(y, minlength=2)) < 2:
            continue
        frac = float(gen.uniform(0.2, 0.9))
        train, test = stratified_split(y, frac, seed=k)
        assert len(train) + len(test) == n
        ratio_train = y[train].mean()
        assert abs(ratio_train - y.mean()) <= 1 / len(train) + 1e-12


def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pairwise_oracle(rows):
    scores, labels = [r[0] for r in rows], [r[1] for r in rows]
    if all(labels) or not any(labels):
        return
    a = auc(scores, labels)
    assert 0 <= a <= 1
    assert a == pytest.approx(pairwise_auc(scores, labels))


def test_confusion_counts():
    assert confusion([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0]) == {"tp": 1, "fp": 1, "tn": 1, "fn": 1}
    assert confusion([0.5], [1]) == {"tp": 1, "fp": 0, "tn": 0, "fn": 0}


def test_generators_are_seeded():
    X, y = make_separable(100, 4, seed=3)
    assert X.shape == (100, 4) and y.sum() == 50
    assert ((X > 0) == (y[:, None] == 1)).all()
    assert np.array_equal(make_separable(100, 4, seed=3)[0], X)
    Xl, yl = make_noisy_linear(50, 2, seed=1)
    assert Xl.shape == (50, 2) and set(yl) <= {0, 1}
    Xx, yx = make_xor(50, seed=1)
    assert (yx == ((Xx[:, 0] > 0) != (Xx[:, 1] > 0))).all()
