"""Command-line interface: ``fhestats <command> ...``.

Exit codes: 0 ok, 2 validation error, 3 depth or coefficient budget
violation, 4 corrupt artifact.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .artifacts import load_dataset, load_fit, load_mnb, load_snb, save_dataset, save_fit, save_mnb, save_snb
from .crf import CoefficientBudgetExceeded, ForestSpec, crf_combine, crf_fit, crf_predict, crf_prob, grow_for
from .encode import PartitionSpec, build_partitions, encode_method1, encode_method2, encrypt_dataset, read_csv
from .experiment import Experiment, run_experiment, report_json, shard_queue_run, split_into_shards
from .fv import DepthBudgetExceeded, dec, keygen
from .naive_bayes import mnb_assemble, mnb_fit, mnb_predict_raw, snb_assemble, snb_fit, snb_predict_raw
from .params import make_params, params_help
from .rng import RngHandle
from .serialize import CorruptArtifact, inspect_artifact, load_array, load_key, save_array, save_keys

EXIT_OK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_CORRUPT = 0, 2, 3, 4


class UsageError(ValueError):
    pass


# -- helpers --------------------------------------------------------------------------

def _pk(args):
    return load_key(args.pk) if getattr(args, "pk", None) else None


def _sk(args, pk=None):
    if not getattr(args, "sk", None):
        return None
    return load_key(args.sk, pk.params if pk is not None else None)


def _decrypt_all(sk, arr):
    return np.vectorize(lambda v: dec(sk, v), otypes=[object])(arr)


def _is_encrypted(arr) -> bool:
    from .fv import Ciphertext

    return any(isinstance(v, Ciphertext) for v in np.asarray(arr, dtype=object).flat)


def _write_predictions(probs, classes, dest):
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    if probs.shape[0] == 1 and probs.shape[1] != len(classes):
        probs = probs.T
    fh = open(dest, "w", newline="") if dest and dest != "-" else sys.stdout
    try:
        w = csv.writer(fh)
        if probs.shape[1] == 1:
            w.writerow(["row", f"probability_{classes[-1]}"])
            for i, p in enumerate(probs[:, 0]):
                w.writerow([i, repr(float(p))])
        else:
            w.writerow(["row"] + [f"probability_{c}" for c in classes])
            for i, row in enumerate(probs):
                w.writerow([i] + [repr(float(p)) for p in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _finish_prediction(kind, raw, meta, args, sk):
    """Either assemble probabilities (plaintext or with ``--sk``) or store the raw result."""
    encrypted = _is_encrypted(raw)
    if encrypted and sk is None:
        if not args.raw_out:
            raise UsageError("encrypted predictions need --sk to decrypt or --raw-out to store them")
        save_array(raw, args.raw_out, {"type": f"{kind}-raw", **meta})
        print(f"wrote encrypted raw predictions to {args.raw_out}")
        return
    if encrypted:
        raw = _decrypt_all(sk, raw)
    if args.raw_out:
        save_array(raw, args.raw_out, {"type": f"{kind}-raw", **meta})
    _write_predictions(_assemble(kind, raw, meta), meta["classes"], args.out)


def _assemble(kind, raw, meta):
    if kind == "crf":
        return crf_prob(raw)
    if kind == "snb":
        P = meta["P"]
        e, tail = raw[:-1, :P], raw[-1]
        d, n0, n1, sum_z = tail[:P], tail[P], tail[P + 1], tail[P + 2]
        return snb_assemble({"e": e, "d": list(d), "class_counts": (n0, n1),
                             "sum_z": None if meta["paired"] else sum_z, "N": meta["N"]})[:, None]
    if kind == "mnb":
        P = raw.shape[1]
        selected, counts = raw[:-1], (raw[-1, 0, 0], raw[-1, 0, 1])
        bins = meta["bins"]
        return mnb_assemble(selected, counts, meta["N"], meta["laplace"], bins if len(bins) == P else None)[:, None]
    raise UsageError(f"unknown prediction kind {kind!r}")


# -- commands -------------------------------------------------------------------------

def cmd_params_suggest(args):
    p = params_help(args.lam, args.max, args.depth, args.sigma)
    print(p.describe())
    print(json.dumps(p.to_dict()))


def cmd_keygen(args):
    if args.d and args.q_bits and args.t:
        params = make_params(args.d, args.t, args.q_bits, args.sigma)
    elif args.lam and args.max is not None and args.depth is not None:
        params = params_help(args.lam, args.max, args.depth, args.sigma)
    else:
        raise UsageError("give either --d/--q-bits/--t or --lambda/--max/--depth")
    keys = keygen(params, RngHandle(args.seed).substream("keygen"))
    pk_path, sk_path = save_keys(keys, args.out)
    print(params.describe())
    print(f"wrote {pk_path} and {sk_path}")


def cmd_inspect(args):
    print(json.dumps(inspect_artifact(args.file), indent=2))


def cmd_encode(args):
    names, rows, y = read_csv(args.csv, args.response)
    if args.use_spec:
        spec = PartitionSpec.load(args.use_spec)
        if spec.names != names:
            raise UsageError(f"CSV columns {names} differ from the partition spec {spec.names}")
    else:
        spec = build_partitions(rows, names, bins_per_var=args.bins)
        if args.spec:
            spec.save(args.spec)
    classes = args.classes.split(",") if args.classes else None
    if args.method == 1:
        qd = encode_method1(rows, spec, y, classes, compact_binary=args.compact_binary)
    else:
        qd = encode_method2(rows, spec, y, classes, centered=args.centered, compact_binary=args.compact_binary)
    save_dataset(qd, args.out)
    print(f"encoded {qd.n_rows} rows x {qd.cells.shape[1]} columns (method {args.method}) to {args.out}")


def cmd_encrypt_data(args):
    pk = load_key(args.pk)
    qd = load_dataset(args.data)
    enc = encrypt_dataset(qd, pk, RngHandle(args.seed).substream("encrypt-data"))
    save_dataset(enc, args.out)
    print(f"encrypted {enc.n_rows} rows to {args.out}")


def cmd_crf_grow(args):
    qd = load_dataset(args.data, _pk(args))
    forest = grow_for(qd, args.trees, args.depth, args.seed, args.subset_fraction)
    forest.save(args.out)
    print(f"grew {forest.n_trees} trees of depth {forest.depth} to {args.out}")


def cmd_crf_fit(args):
    pk = _pk(args)
    forest = ForestSpec.load(args.forest)
    qd = load_dataset(args.data, pk)
    fit = crf_fit(forest, qd, args.resample, RngHandle(args.seed).substream("crf-fit"))
    save_fit(fit, args.out)
    print(f"fitted {qd.n_rows} rows to {args.out}")


def cmd_crf_combine(args):
    pk = _pk(args)
    combined = crf_combine([load_fit(f, pk) for f in args.fits])
    save_fit(combined, args.out)
    print(f"combined {len(args.fits)} fits ({combined.n_fit} rows) to {args.out}")


def cmd_crf_predict(args):
    pk = _pk(args)
    forest = ForestSpec.load(args.forest)
    fit = load_fit(args.fit, pk)
    votes = crf_predict(forest, fit, load_dataset(args.data, pk))
    _finish_prediction("crf", votes, {"classes": list(fit.classes)}, args, _sk(args, pk))


def cmd_shard_split(args):
    paths = split_into_shards(load_dataset(args.data, _pk(args)), args.dir, args.size)
    print(f"wrote {len(paths)} shards to {args.dir}")


def cmd_shard_run(args):
    pk = _pk(args)
    forest = ForestSpec.load(args.forest)
    combined = shard_queue_run(args.dir, forest, args.jobs, pk, args.resample, args.seed, args.stop_after)
    if combined is None:
        print("shards remain; rerun to finish")
    else:
        print(f"combined {combined.n_fit} rows into {args.dir}/out/combined.fit.efhe")


def cmd_snb_fit(args):
    qd = load_dataset(args.data, _pk(args))
    fit = snb_fit(qd, paired=args.paired)
    save_snb(fit, args.out)
    print(f"fitted {'paired' if args.paired else 'unpaired'} naive Bayes on {qd.n_rows} rows to {args.out}")


def cmd_snb_predict(args):
    pk = _pk(args)
    fit = load_snb(args.fit, pk)
    qd = load_dataset(args.data, pk)
    raw = snb_predict_raw(fit, qd)
    # rows of e, then one row holding d, the class counts and sum_z
    extra = [*raw["d"], *raw["class_counts"], raw["sum_z"] if raw["sum_z"] is not None else 0]
    body = np.empty((qd.n_rows + 1, max(fit.P, len(extra))), dtype=object)
    body[:] = 0
    body[:qd.n_rows, :fit.P] = raw["e"]
    body[qd.n_rows, :len(extra)] = extra
    meta = {"classes": list(qd.classes), "P": fit.P, "paired": fit.paired, "N": fit.N}
    _finish_prediction("snb", body, meta, args, _sk(args, pk))


def cmd_mnb_fit(args):
    qd = load_dataset(args.data, _pk(args))
    fit = mnb_fit(qd, args.laplace)
    save_mnb(fit, args.out)
    print(f"fitted multinomial naive Bayes on {qd.n_rows} rows to {args.out}")


def cmd_mnb_predict(args):
    pk = _pk(args)
    fit = load_mnb(args.fit, pk)
    qd = load_dataset(args.data, pk)
    selected, counts = mnb_predict_raw(fit, qd)
    body = np.empty((qd.n_rows + 1, *selected.shape[1:]), dtype=object)
    body[:] = 0
    body[:-1] = selected
    body[-1, 0, 0], body[-1, 0, 1] = counts
    meta = {"classes": list(qd.classes), "N": fit.N, "laplace": fit.laplace,
            "bins": [fit.bins[n] for n in fit.tables]}
    _finish_prediction("mnb", body, meta, args, _sk(args, pk))


def cmd_assemble(args):
    raw, meta = load_array(args.raw, load_key(args.pk) if args.pk else None)
    kind = str(meta.get("type", "")).removesuffix("-raw")
    if kind not in ("crf", "snb", "mnb"):
        raise UsageError("artifact does not hold raw predictions")
    if _is_encrypted(raw):
        if not args.sk:
            raise UsageError("raw predictions are encrypted; pass --sk")
        raw = _decrypt_all(load_key(args.sk), raw)
    _write_predictions(_assemble(kind, raw, meta), meta["classes"], args.out)


def cmd_bench_run(args):
    with open(args.config) as fh:
        exp = Experiment.from_config(fh.read())
    if args.replications:
        exp.replications = args.replications
    report = run_experiment(exp, progress=(lambda m: print(f"replication {m.replication}: auc={m.auc:.4f}",
                                                           file=sys.stderr)) if args.verbose else None)
    print(report.table())
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report.to_text())
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(report_json(report))


# -- parser ---------------------------------------------------------------------------

def _add_keys(p, sk=False, raw=False):
    p.add_argument("--pk", help="public key file (needed for encrypted artifacts)")
    if sk:
        p.add_argument("--sk", help="secret key file, to decrypt and assemble probabilities")
        p.add_argument("--out", default="-", help="prediction CSV (default stdout)")
    if raw:
        p.add_argument("--raw-out", help="also store the raw (possibly encrypted) prediction array")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fhestats", description="Statistical learning on homomorphically encrypted data.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    params = sub.add_parser("params", help="encryption parameter selection").add_subparsers(dest="sub", required=True)
    p = params.add_parser("suggest", help="smallest tier meeting security, message size and depth")
    p.add_argument("--lambda", dest="lam", type=int, required=True, help="target security bits")
    p.add_argument("--max", type=int, required=True, help="largest absolute message value")
    p.add_argument("--depth", type=int, required=True, help="multiplicative depth needed")
    p.add_argument("--sigma", type=float, default=16.0)
    p.set_defaults(func=cmd_params_suggest)

    p = sub.add_parser("keygen", help="generate a key pair")
    p.add_argument("--out", required=True, help="directory for pk.efhe and sk.efhe")
    p.add_argument("--d", type=int)
    p.add_argument("--q-bits", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--lambda", dest="lam", type=int)
    p.add_argument("--max", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--sigma", type=float, default=16.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("inspect", help="print an artifact header")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("encode", help="quantise a CSV into an integer dataset")
    p.add_argument("--csv", required=True)
    p.add_argument("--response", help="name of the label column")
    p.add_argument("--method", type=int, choices=(1, 2), default=1)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--spec", help="write the partition spec here")
    p.add_argument("--use-spec", help="reuse an existing partition spec (test data)")
    p.add_argument("--classes", help="comma-separated class order (to match the training data)")
    p.add_argument("--centered", action="store_true", help="centre Method 2 levels")
    p.add_argument("--compact-binary", action="store_true", help="one 0/1 column for two-level variables")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("encrypt-data", help="encrypt every cell of an encoded dataset")
    p.add_argument("--pk", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_encrypt_data)

    crf = sub.add_parser("crf", help="completely random forests").add_subparsers(dest="sub", required=True)
    p = crf.add_parser("grow")
    p.add_argument("--data", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subset-fraction", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_keys(p)
    p.set_defaults(func=cmd_crf_grow)
    p = crf.add_parser("fit")
    p.add_argument("--forest", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--resample", type=int, default=0, help="stochastic fraction length M")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_keys(p)
    p.set_defaults(func=cmd_crf_fit)
    p = crf.add_parser("combine")
    p.add_argument("fits", nargs="+")
    p.add_argument("--out", required=True)
    _add_keys(p)
    p.set_defaults(func=cmd_crf_combine)
    p = crf.add_parser("predict")
    p.add_argument("--forest", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    _add_keys(p, sk=True, raw=True)
    p.set_defaults(func=cmd_crf_predict)
    p = crf.add_parser("fit-sharded", help="fit a directory of shards with a worker pool")
    p.add_argument("--shards-dir", dest="dir", required=True)
    _shard_run_args(p)

    shard = sub.add_parser("shard", help="shard files for queued fitting").add_subparsers(dest="sub", required=True)
    p = shard.add_parser("split")
    p.add_argument("--data", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--size", type=int, default=32)
    _add_keys(p)
    p.set_defaults(func=cmd_shard_split)
    p = shard.add_parser("run")
    p.add_argument("--dir", required=True)
    _shard_run_args(p)

    for model in ("snb", "mnb"):
        grp = sub.add_parser(model, help=("semi-parametric" if model == "snb" else "multinomial") + " naive Bayes")
        cmds = grp.add_subparsers(dest="sub", required=True)
        p = cmds.add_parser("fit")
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        if model == "snb":
            g = p.add_mutually_exclusive_group()
            g.add_argument("--paired", dest="paired", action="store_true", default=True)
            g.add_argument("--unpaired", dest="paired", action="store_false")
            p.set_defaults(func=cmd_snb_fit)
        else:
            p.add_argument("--laplace", type=int, default=1)
            p.set_defaults(func=cmd_mnb_fit)
        _add_keys(p)
        p = cmds.add_parser("predict")
        p.add_argument("--fit", required=True)
        p.add_argument("--data", required=True)
        _add_keys(p, sk=True, raw=True)
        p.set_defaults(func=cmd_snb_predict if model == "snb" else cmd_mnb_predict)

    p = sub.add_parser("assemble", help="decrypt stored raw predictions into probabilities")
    p.add_argument("--raw", required=True)
    p.add_argument("--pk")
    p.add_argument("--sk")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_assemble)

    bench = sub.add_parser("bench", help="replicated experiments").add_subparsers(dest="sub", required=True)
    p = bench.add_parser("run")
    p.add_argument("--config", required=True, help="flat key = value experiment file")
    p.add_argument("--replications", type=int, help="override the configured count")
    p.add_argument("--report", help="write key=value lines here")
    p.add_argument("--json", help="write a JSON report here")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_bench_run)
    return ap


def _shard_run_args(p):
    p.add_argument("--forest", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resample", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stop-after", type=int, help="stop each worker after this many shards")
    p.add_argument("--pk")
    p.set_defaults(func=cmd_shard_run)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (DepthBudgetExceeded, CoefficientBudgetExceeded) as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except CorruptArtifact as exc:
        print(f"corrupt artifact: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
