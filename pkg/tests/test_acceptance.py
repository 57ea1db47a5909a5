"""End-to-end acceptance checks, one test per criterion, each printing a PASS/FAIL line."""

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from fhestats.crf import (
    CoefficientBudgetExceeded,
    crf_circuit_depth,
    crf_fit,
    crf_predict,
    grow_for,
    leaf_path_index,
    or_prefix,
    stochastic_fraction,
)
from fhestats.encode import build_partitions, encode_method1, encode_method2, encrypt_dataset
from fhestats.evaluation import make_separable
from fhestats.experiment import Experiment, run_experiment, shard_queue_run, split_into_shards
from fhestats.fv import DepthBudgetExceeded, dec, enc, he_add, he_mul, keygen, signed_mod
from fhestats.naive_bayes import mnb_assemble, mnb_fit, mnb_predict_raw, snb_fit
from fhestats.params import TIER_DEGREES, depth_requirement_crf, make_params, min_q_bits, params_help
from fhestats.rng import RngHandle
from fhestats.serialize import dump_ct
from oracles import coded_dataset, newton_step, textbook_mnb, truncated_geometric_mean, truncated_geometric_var
from test_crf import first_one_fill, traversal_paths

decrypt_all = lambda sk, a: np.vectorize(lambda v: dec(sk, v), otypes=[object])(a)


def method1_separable(n, p, seed, bins=3):
    X, y = make_separable(n, p, seed=seed)
    X = np.asarray(X, dtype=object)
    spec = build_partitions(X, bins_per_var=bins)
    return encode_method1(X, spec, y.tolist())


def test_01_encrypted_forest_agrees_exactly(acceptance):
    T, L, M = 10, 2, 8
    params = make_params(4096, 16384, 256)
    assert params.depth_bound >= crf_circuit_depth(L, M, predict_without_refresh=True)
    keys = keygen(params, RngHandle(1).substream("keys"))
    data = method1_separable(80, 2, seed=1)
    train, test = data.subset(np.arange(64)), data.subset(np.arange(64, 80))
    forest = grow_for(train, T, L, seed=7)
    start = time.perf_counter()
    plain_fit = crf_fit(forest, train, M, RngHandle(3))
    plain_votes = crf_predict(forest, plain_fit, test)
    enc_train = encrypt_dataset(train, keys.pk, RngHandle(4).substream("train"))
    enc_test = encrypt_dataset(test, keys.pk, RngHandle(4).substream("test"))
    enc_fit = crf_fit(forest, enc_train, M, RngHandle(3))
    enc_votes = crf_predict(forest, enc_fit, enc_test)
    back = enc_fit.decrypt(keys.sk)
    same_fit = (back.counts == plain_fit.counts).all() and (back.adjusted == plain_fit.adjusted).all()
    same_votes = (decrypt_all(keys.sk, enc_votes) == plain_votes).all()
    elapsed = time.perf_counter() - start
    ok = bool(same_fit and same_votes) and elapsed <= 15 * 60
    acceptance(1, "exact agreement", ok,
               f"fit identical={same_fit}, votes identical={same_votes}, {elapsed:.0f}s (limit 900s)")
    assert ok


def test_02_homomorphic_correctness(acceptance):
    t = 65536
    details, ok = [], True
    for d in TIER_DEGREES:
        params = make_params(d, t, min_q_bits(d, t, 1))
        keys = keygen(params, RngHandle(d).substream("keys"))
        r = RngHandle(d).substream("pairs")
        lo, hi = params.message_range
        values = r.substream("values").integers(lo, hi + 1, size=(1000, 2))
        bad = 0
        for i, (a, b) in enumerate(values):
            a, b = int(a), int(b)
            ca, cb = enc(keys.pk, a, r.substream("a", i)), enc(keys.pk, b, r.substream("b", i))
            bad += dec(keys.sk, he_add(ca, cb)) != signed_mod(a + b, t)
            bad += dec(keys.sk, he_mul(ca, cb)) != signed_mod(a * b, t)
        ok &= bad == 0
        details.append(f"d={d}: {bad} wrong")
    L, bound = 3, 100
    params = params_help(80, bound, L)
    keys = keygen(params, RngHandle(5).substream("chain"))
    r = RngHandle(6)
    signs = r.substream("signs").integers(0, 2, size=(1000, L + 1))
    correct = 0
    for trial, row in enumerate(signs):
        ms = [bound if s else -bound for s in row]
        ct = enc(keys.pk, ms[0], r.substream(trial, 0))
        for j, m in enumerate(ms[1:], 1):
            ct = ct * enc(keys.pk, m, r.substream(trial, j))
        correct += dec(keys.sk, ct) == signed_mod(math.prod(ms), params.t)
    ok &= correct >= 999
    details.append(f"depth-{L} chains at d={params.d}, q=2^{params.q_bits}, t={params.t}: {correct}/1000")
    acceptance(2, "homomorphic correctness", ok, "; ".join(details))
    assert ok


def test_03_shard_additivity(acceptance, tmp_path):
    data = method1_separable(17 * 32 + 3, 2, seed=3, bins=2)
    forest = grow_for(data, 2, 2, seed=5)
    params = make_params(1024, 4096, min_q_bits(1024, 4096, 2))
    keys = keygen(params, RngHandle(7))
    enc_data = encrypt_dataset(data, keys.pk, RngHandle(8))
    paths = split_into_shards(enc_data, tmp_path, 32)
    combined = shard_queue_run(tmp_path, forest, jobs=2, pk=keys.pk)
    monolithic = crf_fit(forest, data)
    sizes = [32] * 17 + [3]
    got = decrypt_all(keys.sk, combined.counts)
    ok = len(paths) == 18 and combined.n_fit == 547 and (got == monolithic.counts).all()
    acceptance(3, "shard additivity", ok,
               f"{len(paths)} shards of sizes {sizes[0]}x17+{sizes[-1]}, combined equals monolithic: "
               f"{bool((got == monolithic.counts).all())}")
    assert ok


def test_04_ciphertext_size(acceptance):
    params = make_params(8192, 200000, 224)
    keys = keygen(params, RngHandle(0))
    size = len(dump_ct(enc(keys.pk, 1, RngHandle(1))))
    target = 448 * 1024
    ok = abs(size - target) <= 0.10 * target
    acceptance(4, "ciphertext size", ok, f"{size} bytes = {size / 1024:.1f} KB vs 448 KB ({(size / target - 1) * 100:+.2f}%)")
    assert ok


def test_05_stochastic_fraction(acceptance):
    M, n_draws, N = 32, 10**5, 64
    details, ok = [], True
    for p in (1 / 2, 1 / 4, 1 / 8):
        eta = [1] * int(p * N) + [0] * (N - int(p * N))
        idx = RngHandle(int(1 / p)).generator.integers(0, N, size=(n_draws, M))
        draws = np.fromiter((stochastic_fraction(eta, M, None, indices=row) for row in idx), float, n_draws)
        mean, sd = truncated_geometric_mean(p, M), math.sqrt(truncated_geometric_var(p, M) / n_draws)
        z = (draws.mean() - mean) / sd
        ok &= abs(z) <= 3
        details.append(f"p=1/{int(1 / p)}: mean {draws.mean():.4f} vs {mean:.4f} (z={z:+.2f})")
    exhaustive = all(or_prefix(bits) == first_one_fill(bits) for bits in itertools.product((0, 1), repeat=8))
    ok &= exhaustive
    details.append(f"OR-prefix on all 256 length-8 vectors exact: {exhaustive}")
    acceptance(5, "stochastic fraction", ok, "; ".join(details))
    assert ok


def test_06_one_step_irls(acceptance):
    gen = RngHandle(6).generator
    exact = 0
    for k in range(100):
        n = int(gen.integers(4, 30))
        while True:
            x = gen.integers(-3, 6, n).tolist()
            y = gen.integers(0, 2, n).tolist()
            if len(set(x)) > 1 and 0 < sum(y) < n:
                break
        fit = snb_fit(coded_dataset([x], y))
        alpha, beta = newton_step(x, y)
        exact += Fraction(fit.a[0], fit.d[0]) == alpha and Fraction(fit.b[0], fit.d[0]) == beta
    in_range = True
    for k in range(500):
        n = int(gen.integers(2, 40))
        y = gen.integers(0, 2, n).tolist()
        x = gen.integers(0, 2, n).tolist()
        if sum(x) == 0 or sum(y) in (0, n):
            continue
        fit = snb_fit(coded_dataset([x], y), paired=False)
        in_range &= -2 <= Fraction(fit.b[0], fit.d[0]) <= 2
    shrink, details = True, []
    reps, n = 10**4, 200
    for beta in (0.0, 1.0, 3.0):
        p = 1 / (1 + math.exp(-beta))
        ys = gen.random((reps, n)) < p
        est = np.empty(reps)
        for r in range(reps):
            fit = snb_fit(coded_dataset([[1] * n], ys[r].astype(int).tolist()), paired=False)
            est[r] = fit.b[0] / fit.d[0]
        bias = est - beta
        expected = -2 + 4 * p - beta
        z = (bias.mean() - expected) / (bias.std(ddof=1) / math.sqrt(reps))
        shrink &= abs(z) <= 3
        details.append(f"beta={beta:g}: {bias.mean():+.4f} vs {expected:+.4f} (z={z:+.2f})")
    ok = exact == 100 and in_range and shrink
    acceptance(6, "one-step IRLS", ok,
               f"{exact}/100 exact Newton steps; slope in [-2,2]: {in_range}; " + "; ".join(details))
    assert ok


def test_07_centered_equivalence(acceptance):
    gen = RngHandle(7).generator
    equal = 0
    for k in range(100):
        N, P = 50, 3
        X = gen.normal(size=(N, P))
        y = (gen.random(N) < 1 / (1 + np.exp(-X[:, 0]))).astype(int)
        if y.sum() in (0, N):
            y[0] = 1 - y[0]
        spec = build_partitions(X, bins_per_var=5)
        qd = encode_method2(X, spec, y.tolist(), centered=True)
        assert all(sum(qd.cells[:, j]) == 0 for j in range(P))
        paired, unpaired = snb_fit(qd), snb_fit(qd, paired=False)
        same = all(
            paired.a[j] * N == unpaired.sum_z * paired.d[j] and paired.b[j] * unpaired.d[j] == unpaired.b[j] * paired.d[j]
            for j in range(P)
        )
        equal += same
    ok = equal == 100
    acceptance(7, "centered equivalence", ok, f"{equal}/100 datasets equal as cross-multiplied integers")
    assert ok


def test_08_multinomial_naive_bayes(acceptance):
    gen = RngHandle(8).generator
    raw = gen.integers(0, 3, size=(40, 2)).astype(object)
    y = ((raw[:, 0] == 2) ^ (gen.random(40) < 0.2)).astype(int).tolist()
    spec = build_partitions(raw, kinds={"v1": "categorical", "v2": "categorical"})
    train, test = encode_method1(raw[:30], spec, y[:30]), encode_method1(raw[30:], spec, y[30:])
    params = make_params(1024, 65536, min_q_bits(1024, 65536, 2))
    keys = keygen(params, RngHandle(9))
    laplace = 1
    plain = mnb_fit(train, laplace)
    fit = mnb_fit(encrypt_dataset(train, keys.pk, RngHandle(10)), laplace)
    tables = all(
        [dec(keys.sk, v) for v in fit.tables[n][c]] == plain.tables[n][c] for n in plain.tables for c in (0, 1)
    ) and tuple(dec(keys.sk, v) for v in fit.class_counts) == plain.class_counts
    selected, counts = mnb_predict_raw(fit, encrypt_dataset(test, keys.pk, RngHandle(11)))
    probs = mnb_assemble(decrypt_all(keys.sk, selected), [dec(keys.sk, c) for c in counts], plain.N, laplace,
                         [plain.bins[n] for n in plain.tables])
    bins_of = lambda rows: [[spec.variables[j].bin_of(v) for j, v in enumerate(r)] for r in rows]
    oracle = textbook_mnb(bins_of(raw[:30]), y[:30], bins_of(raw[30:]), [3, 3], laplace)
    rel = float(np.max(np.abs(probs - oracle) / np.abs(oracle)))
    ok = tables and rel <= 1e-12
    acceptance(8, "multinomial naive Bayes", ok, f"tables exact: {tables}; max relative error {rel:.2e}")
    assert ok


def test_09_depth_budgets(acceptance):
    params = make_params(256, 65536, 200)
    keys = keygen(params, RngHandle(9))
    data = method1_separable(8, 2, seed=9)
    enc_data = encrypt_dataset(data, keys.pk, RngHandle(10))
    L = 2
    forest = grow_for(data, 1, L, seed=1)
    details, ok = [], True
    for M in (0, 1, 8):
        fit = crf_fit(forest, enc_data, M, RngHandle(2))
        depth = max(v.depth for v in fit.votes.flat)
        appendix = depth_requirement_crf(L, M, False)
        ok &= depth == appendix
        details.append(f"L={L},M={M}: counter {depth} vs L+M={appendix}")
    snb = snb_fit(encrypt_dataset(coded_dataset([[1, 2, 3, 1, 2]], [0, 1, 1, 0, 1]), keys.pk, RngHandle(11)))
    snb_depth = max(v.depth for v in snb.a + snb.b + snb.d)
    ok &= snb_depth <= 4
    details.append(f"paired SNB fit depth {snb_depth} (<= 4)")
    raised = []
    tight = make_params(256, 65536, 128)
    tight_keys = keygen(tight, RngHandle(12))
    tight_data = encrypt_dataset(data, tight_keys.pk, RngHandle(13))
    try:
        crf_fit(grow_for(data, 1, 3, 0), tight_data, 8, RngHandle(0))
    except DepthBudgetExceeded:
        raised.append("crf depth")
    try:
        crf_fit(grow_for(data, 5000, 1, 0), tight_data)
    except CoefficientBudgetExceeded:
        raised.append("crf votes")
    ct = enc(tight_keys.pk, 3, RngHandle(14))
    try:
        for _ in range(tight.depth_bound + 1):
            ct = ct * ct
    except DepthBudgetExceeded:
        raised.append("product chain")
    ok &= len(raised) == 3
    details.append(f"over-budget errors raised: {', '.join(raised)}")
    acceptance(9, "depth budgets", ok, "; ".join(details))
    assert ok


def test_10_easy_task_auc(acceptance):
    details, ok = [], True
    for model, extra in (("crf", dict(trees=100, depth=3, resample=8)), ("snb", dict(paired=True))):
        report = run_experiment(Experiment(model=model, n=200, p=3, replications=20, seed=10, **extra))
        aucs = np.array(report.aucs)
        ok &= aucs.mean() >= 0.99
        details.append(f"{model}: mean AUC {aucs.mean():.4f}, min {aucs.min():.4f} over {len(aucs)} splits")
    acceptance(10, "easy-task AUC", ok, "; ".join(details))
    assert ok


def test_11_leaf_indexing(acceptance):
    checked, ok = 0, True
    for L in range(1, 7):
        for b, path in traversal_paths(L).items():
            ok &= [leaf_path_index(b, l, L) for l in range(1, L + 1)] == path
            checked += 1
    acceptance(11, "leaf indexing", ok, f"{checked} leaves across L=1..6 match explicit traversal")
    assert ok
