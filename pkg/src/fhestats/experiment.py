"""Replicated train/test experiments and the shard-queue fitting runner."""

from __future__ import annotations

import hashlib
import json
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .artifacts import load_dataset, load_fit, save_dataset, save_fit
from .crf import ForestSpec, crf_combine, crf_fit, crf_predict, crf_prob, grow_for
from .encode import build_partitions, encode_method1, encode_method2, encrypt_dataset, read_csv
from .evaluation import GENERATORS, auc, confusion, stratified_split
from .fv import dec, keygen
from .naive_bayes import (
    mnb_assemble,
    mnb_fit,
    mnb_predict_raw,
    snb_assemble,
    snb_fit,
    snb_predict_raw,
)
from .params import make_params
from .rng import RngHandle
from .serialize import dump_array, dump_key, load_key

MODELS = ("crf", "snb", "mnb")


@dataclass
class Experiment:
    """One experiment: a dataset source, a model and the replication protocol.

    ``dataset`` is a CSV path (with ``response`` naming the label column)
    or ``synthetic:<generator>`` with ``n`` rows and ``p`` predictors.
    """

    dataset: str = "synthetic:separable"
    model: str = "crf"
    response: str = "y"
    n: int = 200
    p: int = 3
    trees: int = 100
    depth: int = 3
    resample: int = 8
    paired: bool = True
    laplace: int = 1
    bins: int = 5
    split: float = 0.8
    replications: int = 1
    seed: int = 0
    encrypted: bool = False
    d: int = 4096
    q_bits: int = 256
    t: int = 16384
    threshold: float = 0.5

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if not 0 < self.split < 1:
            raise ValueError("split must lie strictly between 0 and 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    @classmethod
    def from_config(cls, text: str) -> "Experiment":
        """Parse flat ``key = value`` lines (``#`` starts a comment)."""
        fields = cls.__dataclass_fields__
        kwargs = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in fields:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            kind = type(fields[key].default)
            if kind is bool:
                kwargs[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                kwargs[key] = kind(value)
        return cls(**kwargs)


@dataclass
class ReplicationMetrics:
    replication: int
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int
    fit_seconds: float
    predict_seconds: float
    peak_bytes: int
    n_train: int
    n_test: int


@dataclass
class MetricsReport:
    experiment: Experiment
    rows: list = field(default_factory=list)
    scores: list = field(default_factory=list)

    @property
    def aucs(self):
        return [r.auc for r in self.rows]

    def table(self) -> str:
        head = f"{'rep':>4} {'auc':>8} {'tp':>5} {'fp':>5} {'tn':>5} {'fn':>5} {'fit_s':>9} {'pred_s':>9} {'bytes':>10}"
        lines = [head]
        for r in self.rows:
            lines.append(f"{r.replication:>4} {r.auc:>8.4f} {r.tp:>5} {r.fp:>5} {r.tn:>5} {r.fn:>5} "
                         f"{r.fit_seconds:>9.3f} {r.predict_seconds:>9.3f} {r.peak_bytes:>10}")
        a = np.array(self.aucs)
        lines.append(f"mean auc {a.mean():.4f}  min {a.min():.4f}  max {a.max():.4f}")
        n_fit = sum(r.n_train for r in self.rows)
        per100 = 100 * sum(r.fit_seconds for r in self.rows) / max(n_fit, 1)
        lines.append(f"fit seconds per 100 training rows {per100:.4f}")
        return "\n".join(lines)

    def to_text(self) -> str:
        """Machine-readable ``key=value`` form, one replication per line."""
        out = [" ".join(f"{k}={v}" for k, v in asdict(self.experiment).items())]
        for r in self.rows:
            out.append(" ".join(f"{k}={v}" for k, v in asdict(r).items()))
        return "\n".join(out) + "\n"


def load_experiment_data(exp: Experiment):
    if exp.dataset.startswith("synthetic:"):
        name = exp.dataset.split(":", 1)[1]
        if name not in GENERATORS:
            raise ValueError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
        gen = GENERATORS[name]
        X, y = gen(exp.n, seed=exp.seed) if name == "xor" else gen(exp.n, exp.p, seed=exp.seed)
        return np.asarray(X, dtype=object), [int(v) for v in y]
    _, rows, y = read_csv(exp.dataset, exp.response)
    if y is None:
        raise ValueError("CSV experiments need a response column")
    return rows, y


def _encode(exp, X_train, y_train, X_test, y_test):
    spec = build_partitions(X_train, bins_per_var=exp.bins)
    if exp.model == "snb":
        kw = {"centered": not exp.paired}
        train = encode_method2(X_train, spec, y_train, **kw)
        test = encode_method2(X_test, spec, y_test, classes=train.classes, **kw)
    else:
        train = encode_method1(X_train, spec, y_train)
        test = encode_method1(X_test, spec, y_test, classes=train.classes)
    return train, test


def _fit_predict(exp, train, test, rng, sk=None):
    decrypt = np.vectorize(lambda v: dec(sk, v), otypes=[object]) if sk is not None else (lambda a: a)
    t0 = time.perf_counter()
    if exp.model == "crf":
        forest = grow_for(train, exp.trees, exp.depth, exp.seed)
        fit = crf_fit(forest, train, exp.resample, rng.substream("fraction"))
        t1 = time.perf_counter()
        votes = decrypt(crf_predict(forest, fit, test))
        scores = crf_prob(votes)[:, 1]
        artifact = fit.votes
    elif exp.model == "snb":
        fit = snb_fit(train, paired=exp.paired)
        t1 = time.perf_counter()
        raw = snb_predict_raw(fit, test)
        if sk is not None:
            from .naive_bayes import decrypt_raw

            raw = decrypt_raw(sk, raw)
        scores = snb_assemble(raw)
        artifact = fit.coeffs()
    else:
        fit = mnb_fit(train, exp.laplace)
        t1 = time.perf_counter()
        selected, counts = mnb_predict_raw(fit, test)
        selected = decrypt(selected)
        counts = tuple(dec(sk, c) for c in counts) if sk is not None else counts
        bins = [fit.bins[n] for n in fit.tables]
        scores = mnb_assemble(selected, counts, fit.N, fit.laplace, bins)
        artifact = np.array([v for row in fit.tables.values() for side in row for v in side], dtype=object)
    t2 = time.perf_counter()
    return np.asarray(scores, dtype=float), t1 - t0, t2 - t1, len(dump_array(artifact))


def run_experiment(exp: Experiment, progress=None) -> MetricsReport:
    """Split, encode, optionally encrypt, fit, predict and score ``exp.replications`` times."""
    X, y = load_experiment_data(exp)
    report = MetricsReport(exp)
    keys = None
    if exp.encrypted:
        params = make_params(exp.d, exp.t, exp.q_bits)
        keys = keygen(params, RngHandle(exp.seed).substream("keys"))
    for r in range(exp.replications):
        try:
            train_idx, test_idx = stratified_split(y, exp.split, exp.seed + r)
            yl = np.asarray(y, dtype=object)
            train, test = _encode(exp, X[train_idx], list(yl[train_idx]), X[test_idx], list(yl[test_idx]))
            rng = RngHandle(exp.seed).substream("replication", r)
            if keys is not None:
                train = encrypt_dataset(train, keys.pk, rng.substream("enc-train"))
                test = encrypt_dataset(test, keys.pk, rng.substream("enc-test"))
            scores, fit_s, pred_s, nbytes = _fit_predict(exp, train, test, rng, keys.sk if keys else None)
            positive = [str(v) == train.classes[1] for v in yl[test_idx]]
            m = ReplicationMetrics(r, auc(scores, positive), **confusion(scores, positive, exp.threshold),
                                   fit_seconds=fit_s, predict_seconds=pred_s, peak_bytes=nbytes,
                                   n_train=len(train_idx), n_test=len(test_idx))
        except Exception as exc:
            raise type(exc)(f"replication {r}: {exc}") from exc
        report.rows.append(m)
        report.scores.append(scores)
        if progress:
            progress(m)
    return report


# -- shard queue ------------------------------------------------------------------------

SHARD_SUFFIX = ".efhe"


def split_into_shards(qd, directory, size: int = 32):
    """Write consecutive row blocks of ``qd`` as ``shard_000.efhe``, ``shard_001.efhe``, ..."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for k, start in enumerate(range(0, qd.n_rows, size)):
        path = os.path.join(directory, f"shard_{k:03d}{SHARD_SUFFIX}")
        save_dataset(qd.subset(np.arange(start, min(start + size, qd.n_rows))), path)
        paths.append(path)
    return paths


def _shard_files(directory):
    return sorted(f for f in os.listdir(directory) if f.startswith("shard_") and f.endswith(SHARD_SUFFIX))


def _out_paths(out_dir, shard):
    stem = shard[: -len(SHARD_SUFFIX)]
    return os.path.join(out_dir, f"{stem}.fit.efhe"), os.path.join(out_dir, f"{stem}.done")


def _claim(out_dir, shard) -> bool:
    try:
        fd = os.open(os.path.join(out_dir, shard + ".claim"), os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        return False
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    return True


def _worker(directory, out_dir, forest_text, pk_bytes, M, seed, limit):
    """Claim and fit shards until none remain (or ``limit`` are done); returns names processed."""
    forest = ForestSpec.from_text(forest_text)
    pk = load_key(pk_bytes) if pk_bytes else None
    done = []
    for shard in _shard_files(directory):
        if limit is not None and len(done) >= limit:
            break
        fit_path, marker = _out_paths(out_dir, shard)
        if os.path.exists(marker) or not _claim(out_dir, shard):
            continue
        data = load_dataset(os.path.join(directory, shard), pk)
        rng = RngHandle(seed).substream("shard", zlib.crc32(shard.encode()))
        fit = crf_fit(forest, data, M, rng)
        tmp = fit_path + ".tmp"
        save_fit(fit, tmp)
        os.replace(tmp, fit_path)
        with open(marker, "w") as fh:
            fh.write(hashlib.sha256(open(fit_path, "rb").read()).hexdigest())
        done.append(shard)
    return done


def shard_queue_run(directory, forest: ForestSpec, jobs: int = 1, pk=None, M: int = 0, seed: int = 0,
                    stop_after: int | None = None):
    """Fit every shard in ``directory`` exactly once with a pool of ``jobs`` workers.

    Results go to ``directory/out``: one ``.fit.efhe`` per shard, a ``.done``
    marker once it is complete, and ``combined.fit.efhe``.  A rerun skips
    shards that already have a marker and reclaims any that were claimed but
    never finished.  ``stop_after`` caps the shards each worker handles,
    which simulates an interrupted run.  Returns the combined fit, or None
    when shards remain.
    """
    shards = _shard_files(directory)
    if not shards:
        raise ValueError(f"no shard files in {directory}")
    digests = {}
    for s in shards:
        h = hashlib.sha256(open(os.path.join(directory, s), "rb").read()).hexdigest()
        if h in digests:
            raise ValueError(f"duplicate shards {digests[h]} and {s}")
        digests[h] = s
    out_dir = os.path.join(directory, "out")
    os.makedirs(out_dir, exist_ok=True)
    for s in shards:
        fit_path, marker = _out_paths(out_dir, s)
        claim = os.path.join(out_dir, s + ".claim")
        if os.path.exists(claim) and not os.path.exists(marker):
            os.remove(claim)  # left behind by an interrupted worker
    args = (directory, out_dir, forest.to_text(), dump_key(pk) if pk is not None else b"", M, seed, stop_after)
    if jobs <= 1:
        _worker(*args)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for fut in [pool.submit(_worker, *args) for _ in range(jobs)]:
                fut.result()
    pending = [s for s in shards if not os.path.exists(_out_paths(out_dir, s)[1])]
    if pending:
        return None
    fits = [load_fit(_out_paths(out_dir, s)[0], pk) for s in shards]
    combined = crf_combine(fits)
    save_fit(combined, os.path.join(out_dir, "combined.fit.efhe"))
    return combined


def report_json(report: MetricsReport) -> str:
    return json.dumps({"experiment": asdict(report.experiment), "rows": [asdict(r) for r in report.rows]})
