"""On-disk forms of datasets and fitted models, built on the array container."""

from __future__ import annotations

import numpy as np

from .crf import FitTensor
from .encode import QuantizedDataset
from .naive_bayes import MnbFit, SnbFit
from .serialize import load_array, save_array


def _blocks_meta(blocks):
    return {k: [s.start, s.stop] for k, s in blocks.items()}


def save_dataset(qd: QuantizedDataset, dest):
    """Cells followed by response columns in one array; layout kept in the metadata."""
    n_resp = 0 if qd.response is None else qd.response.shape[1]
    body = qd.cells if not n_resp else np.concatenate([qd.cells, qd.response], axis=1)
    meta = {
        "type": "dataset",
        "method": qd.method,
        "columns": list(qd.columns),
        "blocks": _blocks_meta(qd.blocks),
        "var_kinds": qd.var_kinds,
        "classes": list(qd.classes),
        "n_response": n_resp,
        "centered": qd.centered,
    }
    return save_array(body, dest, meta)


def load_dataset(src, pk=None) -> QuantizedDataset:
    arr, meta = load_array(src, pk)
    if meta.get("type") != "dataset":
        raise ValueError("artifact is not a dataset")
    k = meta["n_response"]
    p = arr.shape[1] - k
    blocks = {name: slice(a, b) for name, (a, b) in meta["blocks"].items()}
    resp = arr[:, p:] if k else None
    return QuantizedDataset(meta["method"], arr[:, :p], meta["columns"], blocks, meta["var_kinds"],
                            resp, meta["classes"], meta.get("centered", False))


def save_fit(fit: FitTensor, dest):
    body = fit.counts if fit.adjusted is None else np.stack([fit.counts, fit.adjusted])
    return save_array(body, dest, {"type": "crf-fit", **fit.meta()})


def load_fit(src, pk=None) -> FitTensor:
    arr, meta = load_array(src, pk)
    if meta.get("type") != "crf-fit":
        raise ValueError("artifact is not a forest fit")
    counts, adjusted = (arr[0], arr[1]) if meta["adjusted"] else (arr, None)
    return FitTensor(counts, meta["forest"], meta["n_fit"], meta["M"], adjusted, meta["classes"])


def save_snb(fit: SnbFit, dest):
    sum_z = 0 if fit.sum_z is None else fit.sum_z
    a = fit.a if fit.paired else [0] * fit.P
    flat = [*fit.class_counts, sum_z, *a, *fit.b, *fit.d]
    meta = {"type": "snb-fit", "paired": fit.paired, "N": fit.N, "P": fit.P, "names": list(fit.names)}
    return save_array(np.array(flat, dtype=object), dest, meta)


def load_snb(src, pk=None) -> SnbFit:
    arr, meta = load_array(src, pk)
    if meta.get("type") != "snb-fit":
        raise ValueError("artifact is not a naive Bayes fit")
    P = meta["P"]
    v = list(arr)
    a, b, d = v[3:3 + P], v[3 + P:3 + 2 * P], v[3 + 2 * P:3 + 3 * P]
    paired = meta["paired"]
    return SnbFit(paired, meta["N"], (v[0], v[1]), a if paired else [], b, d,
                  None if paired else v[2], tuple(meta["names"]))


def save_mnb(fit: MnbFit, dest):
    flat = list(fit.class_counts)
    for name in fit.tables:
        flat += list(fit.tables[name][0]) + list(fit.tables[name][1])
    meta = {"type": "mnb-fit", "N": fit.N, "laplace": fit.laplace, "bins": fit.bins, "order": list(fit.tables)}
    return save_array(np.array(flat, dtype=object), dest, meta)


def load_mnb(src, pk=None) -> MnbFit:
    arr, meta = load_array(src, pk)
    if meta.get("type") != "mnb-fit":
        raise ValueError("artifact is not a multinomial naive Bayes fit")
    v = list(arr)
    tables, pos = {}, 2
    for name in meta["order"]:
        m = meta["bins"][name]
        tables[name] = (v[pos:pos + m], v[pos + m:pos + 2 * m])
        pos += 2 * m
    return MnbFit(tables, (v[0], v[1]), meta["N"], meta["laplace"], meta["bins"])
