"""Split an encrypted dataset into shards, fit them with two workers, and combine.

Run: python3 demos/shard_queue.py
"""

import tempfile

import numpy as np

from fhestats.crf import crf_fit, grow_for
from fhestats.encode import build_partitions, encode_method1, encrypt_dataset
from fhestats.evaluation import make_separable
from fhestats.experiment import shard_queue_run, split_into_shards
from fhestats.fv import dec, keygen
from fhestats.params import make_params, min_q_bits
from fhestats.rng import RngHandle

X, y = make_separable(100, 2, seed=5)
X = np.asarray(X, dtype=object)
data = encode_method1(X, build_partitions(X, bins_per_var=2), y.tolist())
forest = grow_for(data, 2, 2, seed=6)
params = make_params(1024, 4096, min_q_bits(1024, 4096, 2))
keys = keygen(params, RngHandle(7))
secret = encrypt_dataset(data, keys.pk, RngHandle(8))

with tempfile.TemporaryDirectory() as tmp:
    shards = split_into_shards(secret, tmp, 32)
    print(f"{len(shards)} shards written to a temporary queue directory")
    # Stop after one shard to show that a restarted run resumes where it left off.
    assert shard_queue_run(tmp, forest, jobs=1, pk=keys.pk, stop_after=1) is None
    combined = shard_queue_run(tmp, forest, jobs=2, pk=keys.pk)

counts = np.vectorize(lambda v: dec(keys.sk, v), otypes=[object])(combined.counts)
print("combined shard fit equals single fit:", bool((counts == crf_fit(forest, data).counts).all()))
