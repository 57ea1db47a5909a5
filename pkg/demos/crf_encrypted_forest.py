"""Completely random forest fitted and evaluated on encrypted data.

Run: python3 demos/crf_encrypted_forest.py   (about two minutes)
"""

import time

import numpy as np

from fhestats.crf import crf_circuit_depth, crf_fit, crf_predict, crf_prob, grow_for
from fhestats.encode import build_partitions, encode_method1, encrypt_dataset
from fhestats.evaluation import auc, make_separable
from fhestats.fv import dec, keygen
from fhestats.params import make_params, min_q_bits
from fhestats.rng import RngHandle

T, L, M = 8, 2, 0
X, y = make_separable(120, 2, seed=4)
spec = build_partitions(np.asarray(X, dtype=object), bins_per_var=3)
data = encode_method1(np.asarray(X, dtype=object), spec, y.tolist())
train, test = data.subset(np.arange(90)), data.subset(np.arange(90, 120))

# The forest structure is drawn from public metadata only: bin counts and variable kinds.
forest = grow_for(train, T, L, seed=11)
depth = crf_circuit_depth(L, M, predict_without_refresh=True)
params = make_params(1024, 4096, min_q_bits(1024, 4096, depth))
print(f"circuit depth {depth}; parameters d={params.d}, q=2^{params.q_bits}, t={params.t}")
keys = keygen(params, RngHandle(2).substream("keys"))

start = time.perf_counter()
enc_train = encrypt_dataset(train, keys.pk, RngHandle(3).substream("train"))
enc_test = encrypt_dataset(test, keys.pk, RngHandle(3).substream("test"))
votes = crf_predict(forest, crf_fit(forest, enc_train, M), enc_test)
print(f"encrypted fit and predict: {time.perf_counter() - start:.1f}s")

clear_votes = np.vectorize(lambda v: dec(keys.sk, v), otypes=[object])(votes)
reference = crf_predict(forest, crf_fit(forest, train, M), test)
print("votes match plaintext:", bool((clear_votes == reference).all()))
scores = crf_prob(clear_votes)[:, 1]
print(f"test AUC: {auc(scores, y[90:]):.3f}")
