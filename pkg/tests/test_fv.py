import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhestats.fv import (
    Ciphertext,
    DepthBudgetExceeded,
    MessageOutOfRange,
    SchemeParams,
    dec,
    enc,
    he_add,
    he_dot,
    he_mul,
    keygen,
    noise_budget,
    signed_mod,
)
from fhestats.params import make_params, params_help
from fhestats.ring import ParameterMismatch
from fhestats.rng import RngHandle


def test_signed_mod_lifts_upper_half_to_negatives():
    assert signed_mod(7, 10) == -3
    assert signed_mod(5, 10) == 5
    assert signed_mod(-5, 10) == 5
    assert signed_mod(65535, 65536) == -1


def test_reference_parameter_set():
    p = make_params(4096, 65536, 128)
    assert p.delta == 5192296858534827628530496329220096
    assert p.depth_bound >= 3
    assert make_params(2, 2, 2).delta == 2


def test_large_instance_parameters():
    p = make_params(8192, 200000, 224)
    assert p.q == 2**224
    assert p.delta == 2**224 // 200000


def test_roundtrip_examples(keys, rng):
    for i, m in enumerate((0, 2, -5, 1, -1)):
        assert dec(keys.sk, enc(keys.pk, m, rng.substream("rt", i))) == m


def test_thousand_random_roundtrips(keys, small_params):
    lo, hi = small_params.message_range
    r = RngHandle(77)
    ms = r.substream("m").integers(lo, hi + 1, size=1000)
    assert all(dec(keys.sk, enc(keys.pk, int(m), r.substream("e", i))) == m for i, m in enumerate(ms))


def test_fresh_randomness_gives_distinct_ciphertexts(keys, rng):
    a, b = enc(keys.pk, 9, rng.substream("x1")), enc(keys.pk, 9, rng.substream("x2"))
    assert not a.same_as(b)
    assert dec(keys.sk, a) == dec(keys.sk, b) == 9


def test_message_out_of_range(keys, small_params, rng):
    with pytest.raises(MessageOutOfRange):
        enc(keys.pk, small_params.t, rng)


def test_add_and_mul_small(keys, rng):
    two, three = enc(keys.pk, 2, rng.substream(2)), enc(keys.pk, 3, rng.substream(3))
    assert dec(keys.sk, he_add(two, three)) == 5
    assert dec(keys.sk, he_mul(two, three)) == 6
    assert dec(keys.sk, two - three) == -1
    assert dec(keys.sk, 10 - three) == 7


def test_mixed_operands_match_signed_oracle(keys, small_params):
    t = small_params.t
    lo, hi = small_params.message_range
    r = RngHandle(5)
    gen = r.substream("vals").generator
    for i in range(500):
        a, b = (int(v) for v in gen.integers(lo, hi + 1, size=2))
        enc_a, enc_b = gen.random(2) < 0.7
        x = enc(keys.pk, a, r.substream("a", i)) if enc_a else a
        y = enc(keys.pk, b, r.substream("b", i)) if enc_b else b
        # plain-plain stays an unreduced integer; anything encrypted is reduced mod t
        reduce = (lambda v: signed_mod(v, t)) if enc_a or enc_b else (lambda v: v)
        assert dec(keys.sk, he_add(x, y)) == reduce(a + b)
        assert dec(keys.sk, he_mul(x, y)) == reduce(a * b)


def test_depth_bookkeeping(keys, rng, small_params):
    a = enc(keys.pk, 3, rng.substream("d1"))
    assert a.depth == 0
    assert (a * 5).depth == 0
    assert (a + a).depth == 0
    b = a * a
    assert b.depth == 1
    assert (b * a).depth == 2
    assert (b + a).depth == 1
    chain = a
    for _ in range(small_params.depth_bound):
        chain = chain * a
    assert dec(keys.sk, chain) == signed_mod(3 ** (small_params.depth_bound + 1), small_params.t)
    with pytest.raises(DepthBudgetExceeded):
        chain * a


def test_noise_budget_positive_and_shrinking(keys, rng):
    a = enc(keys.pk, 100, rng.substream("nb"))
    fresh = noise_budget(keys.sk, a)
    assert fresh > 0
    assert 0 < noise_budget(keys.sk, a * a) < fresh


def test_dot_matches_individual_products(keys, small_params):
    r = RngHandle(31)
    vals = r.substream("v").integers(-50, 50, size=(2, 12))
    xs = [enc(keys.pk, int(v), r.substream("x", i)) for i, v in enumerate(vals[0])]
    ys = [enc(keys.pk, int(v), r.substream("y", i)) if i % 3 else int(v) for i, v in enumerate(vals[1])]
    out = he_dot(xs, ys)
    assert out.depth == 1
    assert dec(keys.sk, out) == signed_mod(int(np.dot(vals[0], vals[1])), small_params.t)
    assert he_dot([1, 2], [3, 4]) == 11
    with pytest.raises(ValueError):
        he_dot([1], [1, 2])


def test_parameter_mismatch_between_key_sets(keys, rng):
    other = keygen(make_params(256, 1024, 128), RngHandle(3))
    with pytest.raises(ParameterMismatch):
        he_add(enc(keys.pk, 1, rng), enc(other.pk, 1, rng))


def test_params_validation():
    with pytest.raises(ValueError):
        SchemeParams(d=100, q_bits=64, t=16)
    with pytest.raises(ValueError):
        SchemeParams(d=256, q_bits=8, t=512)


def test_params_help_chain_decrypts_maximal_messages():
    """Empirical depth oracle: L sequential products of maximal messages, 100 trials."""
    L, bound = 3, 127
    p = params_help(1, bound, L)
    assert p.depth_bound >= L
    k = keygen(p, RngHandle(8))
    r = RngHandle(9)
    gen = r.substream("m").generator
    for trial in range(100):
        ms = [int(v) for v in gen.choice([-bound, bound], size=L + 1)]
        ct = enc(k.pk, ms[0], r.substream(trial, 0))
        exact = ms[0]
        for j, m in enumerate(ms[1:], 1):
            ct = ct * enc(k.pk, m, r.substream(trial, j))
            exact *= m
        assert ct.depth == L
        assert dec(k.sk, ct) == signed_mod(exact, p.t)


def _eval(expr, leaves):
    op, *args = expr
    if op == "leaf":
        return leaves[args[0]]
    a, b = (_eval(x, leaves) for x in args)
    return {"add": he_add, "mul": he_mul, "sub": lambda x, y: x - y}[op](a, b)


def _exprs(n_leaves):
    leaf = st.integers(0, n_leaves - 1).map(lambda i: ("leaf", i))
    return st.recursive(
        leaf,
        lambda child: st.tuples(st.sampled_from(["add", "sub"]), child, child)
        | st.tuples(st.just("mul"), leaf, child),
        max_leaves=4,
    )


def _depth(expr):
    op, *args = expr
    if op == "leaf":
        return 0
    return max(_depth(a) for a in args) + (op == "mul")


@settings(max_examples=40)
@given(_exprs(4), st.lists(st.integers(-20, 20), min_size=4, max_size=4), st.lists(st.booleans(), min_size=4, max_size=4))
def test_plain_and_cipher_evaluation_agree(keys, small_params, expr, values, encrypt):
    """The same expression over plain ints and over ciphertexts decrypts identically."""
    if _depth(expr) > small_params.depth_bound:
        return
    r = RngHandle(sum(values) & 0xFFFF)
    leaves = [enc(keys.pk, v, r.substream(i)) if e else v for i, (v, e) in enumerate(zip(values, encrypt))]
    plain = _eval(expr, values)
    assert dec(keys.sk, _eval(expr, leaves)) == signed_mod(plain, small_params.t)


def test_ciphertext_repr_mentions_depth(keys, rng):
    assert "depth=0" in repr(enc(keys.pk, 1, rng))
    assert isinstance(enc(keys.pk, 1, rng) * 2, Ciphertext)
