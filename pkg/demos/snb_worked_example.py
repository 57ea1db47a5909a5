"""Semi-parametric naive Bayes on a ten-row toy dataset, in the clear and encrypted.

Run: python3 demos/snb_worked_example.py
"""

import numpy as np

from fhestats.encode import QuantizedDataset, encode_response, encrypt_dataset
from fhestats.fv import keygen
from fhestats.naive_bayes import decrypt_raw, snb_assemble, snb_fit, snb_predict_raw
from fhestats.params import params_help
from fhestats.rng import RngHandle

x1 = [1, 5, 3, 1, 2, 5, 2, 4, 1, 3]
x2 = [5, 5, 3, 2, 3, 4, 4, 4, 3, 2]
y = [0, 0, 1, 1, 1, 1, 1, 0, 0, 1]

cells = np.array([x1, x2], dtype=object).T
response, classes = encode_response(y, [0, 1])
data = QuantizedDataset(2, cells, ["x1", "x2"], {"x1": slice(0, 1), "x2": slice(1, 2)},
                        {"x1": "ordinal", "x2": "ordinal"}, response, classes)

fit = snb_fit(data)
print("integer fit: a =", fit.a, " b =", fit.b, " d =", fit.d, " class counts =", fit.class_counts)
plain = snb_assemble(snb_predict_raw(fit, data))
print("plaintext P(y=1):", np.round(plain, 4))

params = params_help(80, 1000, 3)
print(f"parameters: d={params.d}, q=2^{params.q_bits}, t={params.t}, depth bound {params.depth_bound}")
keys = keygen(params, RngHandle(1).substream("keys"))
secret = encrypt_dataset(data, keys.pk, RngHandle(1).substream("data"))
raw = snb_predict_raw(snb_fit(secret), secret)
decrypted = snb_assemble(decrypt_raw(keys.sk, raw))
print("encrypted  P(y=1):", np.round(decrypted, 4))
print("identical:", bool(np.array_equal(plain, decrypted)))
