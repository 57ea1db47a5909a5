"""Fan-Vercauteren style leveled homomorphic encryption over integers mod t.

Messages are integers in the signed range of Z_t, encoded in the constant
coefficient of the plaintext polynomial.  Ciphertexts overload ``+``, ``-``
and ``*`` against each other and against plain Python integers, so the
same algorithm code runs on plaintext integers and on ciphertexts.

Relinearization uses an auxiliary modulus ``p = 2**q_bits``: the key holds
an encryption of ``p * s^2`` modulo ``p*q``, and the third ciphertext
component is folded back with one ring product per output polynomial
followed by division by ``p``.

Every ciphertext carries ``depth``, the number of ciphertext-ciphertext
multiplications on its longest path.  Multiplying past
``params.depth_bound`` raises :class:`DepthBudgetExceeded` instead of
producing a ciphertext that might decrypt to garbage.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

from .ring import (
    ParameterMismatch,
    RingParams,
    RingPoly,
    fold_unpack,
    pack,
    sample_gaussian,
    sample_ternary,
    sample_uniform,
    slot_bytes,
)
from .rng import RngHandle


class DepthBudgetExceeded(RuntimeError):
    """A ciphertext multiplication would exceed the parameter depth bound."""


class MessageOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class SchemeParams:
    d: int
    q_bits: int
    t: int
    sigma: float = 16.0
    depth_bound: int = field(default=-1, compare=False)
    security_estimate_bits: int = field(default=-1, compare=False)

    def __post_init__(self):
        RingParams(self.d, 2)  # validates d
        if self.t < 2:
            raise ValueError("message modulus t must be >= 2")
        if self.t >= self.q:
            raise ValueError(f"t={self.t} must be smaller than q=2^{self.q_bits}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        from .params import estimate_depth_bound, estimate_security_bits

        if self.depth_bound < 0:
            object.__setattr__(self, "depth_bound", estimate_depth_bound(self.d, self.q_bits, self.t, self.sigma))
        if self.security_estimate_bits < 0:
            object.__setattr__(
                self, "security_estimate_bits", estimate_security_bits(self.d, self.q_bits, self.sigma)
            )

    @property
    def q(self) -> int:
        return 1 << self.q_bits

    @property
    def delta(self) -> int:
        return self.q // self.t

    @property
    def ring(self) -> RingParams:
        return RingParams(self.d, self.q)

    @property
    def aux_ring(self) -> RingParams:
        return RingParams(self.d, self.q * self.q)

    @property
    def message_range(self):
        """Inclusive signed range of encodable integers."""
        return -((self.t - 1) // 2), self.t // 2

    def to_dict(self):
        return {"scheme": "FV", "d": self.d, "q_bits": self.q_bits, "t": self.t, "sigma": self.sigma}

    def digest(self) -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()

    def describe(self) -> str:
        return "\n".join([
            "Fan and Vercauteren parameters",
            f"phi = x^{self.d}+1",
            f"q = {self.q} ({self.q_bits}-bit integer)",
            f"t = {self.t}",
            f"delta = {self.delta}",
            f"sigma = {self.sigma:g}",
            f"Security level approx {self.security_estimate_bits}-bits (heuristic, advisory only)",
            f"Supports multiplicative depth of {self.depth_bound}",
        ])


def signed_mod(x: int, t: int) -> int:
    """Representative of x mod t in the signed window; (t/2, t) maps negative."""
    r = x % t
    return r - t if r > t // 2 else r


# -- keys ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SecretKey:
    params: SchemeParams
    s: RingPoly


@dataclass(frozen=True, eq=False)
class RelinKey:
    params: SchemeParams
    r0: RingPoly  # over Z_{p q}
    r1: RingPoly
    _packed: dict = field(default_factory=dict, repr=False, compare=False)

    def packed(self, nbytes):
        key = nbytes
        if key not in self._packed:
            self._packed[key] = (pack(self.r0.coeffs, nbytes), pack(self.r1.coeffs, nbytes))
        return self._packed[key]


@dataclass(frozen=True, eq=False)
class PublicKey:
    params: SchemeParams
    p0: RingPoly
    p1: RingPoly
    rlk: RelinKey | None = None


class KeySet(NamedTuple):
    pk: PublicKey
    sk: SecretKey
    rlk: RelinKey


def keygen(params: SchemeParams, rng: RngHandle) -> KeySet:
    ring, aux = params.ring, params.aux_ring
    s = sample_ternary(ring, rng.substream("sk"))
    a = sample_uniform(ring, rng.substream("pk", "a"))
    e = sample_gaussian(ring, params.sigma, rng.substream("pk", "e"))
    p0 = -(a * s + e)

    s_aux = RingPoly(aux, s.centered())
    a2 = sample_uniform(aux, rng.substream("rlk", "a"))
    e2 = sample_gaussian(aux, params.sigma, rng.substream("rlk", "e"))
    r0 = -(a2 * s_aux + e2) + (s_aux * s_aux) * params.q
    rlk = RelinKey(params, r0, a2)
    sk = SecretKey(params, s)
    pk = PublicKey(params, p0, a, rlk)
    return KeySet(pk, sk, rlk)


# -- ciphertexts ------------------------------------------------------------------

class Ciphertext:
    """Two-component FV ciphertext bound to a public key (for relinearization)."""

    __slots__ = ("c0", "c1", "pk", "depth", "_cache")

    def __init__(self, c0: RingPoly, c1: RingPoly, pk: PublicKey, depth: int = 0):
        self._cache = None
        self.c0 = c0
        self.c1 = c1
        self.pk = pk
        self.depth = depth

    @property
    def params(self) -> SchemeParams:
        return self.pk.params

    @property
    def polys(self):
        return (self.c0, self.c1)

    def __repr__(self):
        return f"Ciphertext(d={self.params.d}, q=2^{self.params.q_bits}, t={self.params.t}, depth={self.depth})"

    def same_as(self, other) -> bool:
        """Structural equality (identical polynomials and depth)."""
        return (
            isinstance(other, Ciphertext)
            and self.params == other.params
            and self.c0 == other.c0
            and self.c1 == other.c1
            and self.depth == other.depth
        )

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return he_add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return he_add(self, -other)

    def __rsub__(self, other):
        return he_add(-self, other)

    def __neg__(self):
        return Ciphertext(-self.c0, -self.c1, self.pk, self.depth)

    def __mul__(self, other):
        return he_mul(self, other)

    __rmul__ = __mul__


EncryptedValue = Union[int, Ciphertext]


def enc(pk: PublicKey, m: int, rng: RngHandle) -> Ciphertext:
    params = pk.params
    lo, hi = params.message_range
    m = int(m)
    if not lo <= m <= hi:
        raise MessageOutOfRange(f"message {m} outside [{lo}, {hi}] for t={params.t}")
    ring = params.ring
    u = sample_ternary(ring, rng.substream("u"))
    e1 = sample_gaussian(ring, params.sigma, rng.substream("e1"))
    e2 = sample_gaussian(ring, params.sigma, rng.substream("e2"))
    c0 = pk.p0 * u + e1 + RingPoly.constant(ring, params.delta * (m % params.t))
    c1 = pk.p1 * u + e2
    return Ciphertext(c0, c1, pk, 0)


def _phase(sk: SecretKey, ct: Ciphertext) -> RingPoly:
    if ct.params != sk.params:
        raise ParameterMismatch("ciphertext and secret key use different parameters")
    return ct.c0 + ct.c1 * sk.s


def dec(sk: SecretKey, ct) -> int:
    """Decrypt to the signed integer representative mod t (plain ints pass through)."""
    if not isinstance(ct, Ciphertext):
        return int(ct)
    if ct.depth > ct.params.depth_bound:
        raise DepthBudgetExceeded(f"ciphertext depth {ct.depth} exceeds bound {ct.params.depth_bound}")
    params = sk.params
    x = _phase(sk, ct).coeffs[0]
    q, t = params.q, params.t
    return signed_mod((t * x + q // 2) // q, t)


def noise_budget(sk: SecretKey, ct: Ciphertext) -> float:
    """Remaining invariant-noise budget in bits; decryption is exact while > 0."""
    params = sk.params
    q, t = params.q, params.t
    worst = 0
    for x in _phase(sk, ct).coeffs:
        r = t * x - q * ((t * x + q // 2) // q)
        worst = max(worst, abs(r))
    if worst == 0:
        return float(params.q_bits)
    return math.log2(q) - 1 - math.log2(worst)


# -- homomorphic operations ----------------------------------------------------------

def _check_pair(a: Ciphertext, b: Ciphertext):
    if a.params != b.params:
        raise ParameterMismatch("ciphertexts use different scheme parameters")


def he_add(a, b):
    """Sum of two EncryptedValues; plain + plain stays plain."""
    a_ct, b_ct = isinstance(a, Ciphertext), isinstance(b, Ciphertext)
    if not a_ct and not b_ct:
        return int(a) + int(b)
    if a_ct and b_ct:
        _check_pair(a, b)
        return Ciphertext(a.c0 + b.c0, a.c1 + b.c1, a.pk, max(a.depth, b.depth))
    ct, k = (a, b) if a_ct else (b, a)
    params = ct.params
    k = int(k) % params.t
    if k == 0:
        return ct
    shift = RingPoly.constant(params.ring, params.delta * k)
    return Ciphertext(ct.c0 + shift, ct.c1, ct.pk, ct.depth)


def _scalar(ct: Ciphertext, k: int) -> Ciphertext:
    k = signed_mod(int(k), ct.params.t)
    return Ciphertext(ct.c0 * k, ct.c1 * k, ct.pk, ct.depth)


def _tensor_slot(params: SchemeParams, terms: int = 1) -> int:
    # Karatsuba middle term multiplies coefficient sums below 2q
    return slot_bytes(params.q_bits + 1, params.q_bits + 1, params.d * terms)


def _packed(ct: Ciphertext, nbytes: int):
    cache = ct._cache
    if cache is None:
        cache = ct._cache = {}
    if nbytes not in cache:
        a0 = pack(ct.c0.coeffs, nbytes)
        a1 = pack(ct.c1.coeffs, nbytes)
        cache[nbytes] = (a0, a1, a0 + a1)
    return cache[nbytes]


def _tensor_packed(a: Ciphertext, b: Ciphertext, nbytes: int):
    """Unscaled tensor product (c0c0', c0c1'+c1c0', c1c1') still Kronecker-packed."""
    a0, a1, asum = _packed(a, nbytes)
    b0, b1, bsum = _packed(b, nbytes)
    p0 = a0 * b0
    p2 = a1 * b1
    return [p0, asum * bsum - p0 - p2, p2]


def _scale_down(packed_parts, params: SchemeParams, nbytes: int):
    """Fold, multiply by t/q and round each tensor component; lists mod q."""
    d, qb, q, t = params.d, params.q_bits, params.q, params.t
    half = q >> 1
    return [[((t * v + half) >> qb) % q for v in fold_unpack(part, nbytes, d)] for part in packed_parts]


def _relinearize(d0, d1, d2, pk: PublicKey, depth: int) -> Ciphertext:
    params = pk.params
    if pk.rlk is None:
        raise ValueError("public key carries no relinearization key")
    q, qb, d = params.q, params.q_bits, params.d
    nbytes = slot_bytes(qb, 2 * qb, d)
    pr0, pr1 = pk.rlk.packed(nbytes)
    pc = pack(d2, nbytes)
    half = q >> 1
    ring = params.ring
    polys = []
    for base, pr in ((d0, pr0), (d1, pr1)):
        folded = fold_unpack(pc * pr, nbytes, d)
        polys.append(RingPoly(ring, [(b + ((v + half) >> qb)) % q for b, v in zip(base, folded)], reduced=True))
    return Ciphertext(polys[0], polys[1], pk, depth)


def _next_depth(a: Ciphertext, b: Ciphertext) -> int:
    depth = max(a.depth, b.depth) + 1
    if depth > a.params.depth_bound:
        raise DepthBudgetExceeded(
            f"multiplication would reach depth {depth}, parameters support {a.params.depth_bound}"
        )
    return depth


def he_mul(a, b):
    """Product of two EncryptedValues, relinearized back to two components."""
    a_ct, b_ct = isinstance(a, Ciphertext), isinstance(b, Ciphertext)
    if not a_ct and not b_ct:
        return int(a) * int(b)
    if not (a_ct and b_ct):
        ct, k = (a, b) if a_ct else (b, a)
        return _scalar(ct, k)
    _check_pair(a, b)
    depth = _next_depth(a, b)
    nbytes = _tensor_slot(a.params)
    d0, d1, d2 = _scale_down(_tensor_packed(a, b, nbytes), a.params, nbytes)
    return _relinearize(d0, d1, d2, a.pk, depth)


def he_dot(xs, ys):
    """``sum(x * y)`` over paired EncryptedValues.

    Cipher-cipher terms are accumulated as unscaled packed tensor products
    and scaled, rounded and relinearized once, which decrypts to the same
    integer as summing individual :func:`he_mul` results while costing a
    fraction of the time.
    """
    xs, ys = list(xs), list(ys)
    if len(xs) != len(ys):
        raise ValueError("he_dot operands differ in length")
    pairs, plain = [], 0
    result = 0
    for x, y in zip(xs, ys):
        x_ct, y_ct = isinstance(x, Ciphertext), isinstance(y, Ciphertext)
        if x_ct and y_ct:
            pairs.append((x, y))
        elif x_ct or y_ct:
            result = he_add(result, he_mul(x, y))
        else:
            plain += int(x) * int(y)
    result = he_add(result, plain)
    if not pairs:
        return result
    x0 = pairs[0][0]
    params, pk = x0.params, x0.pk
    nbytes = _tensor_slot(params, len(pairs))
    depth = 0
    acc = None
    for x, y in pairs:
        _check_pair(x0, x)
        _check_pair(x, y)
        depth = max(depth, _next_depth(x, y))
        parts = _tensor_packed(x, y, nbytes)
        acc = parts if acc is None else [u + v for u, v in zip(acc, parts)]
    d0, d1, d2 = _scale_down(acc, params, nbytes)
    return he_add(_relinearize(d0, d1, d2, pk, depth), result)


def is_encrypted(value) -> bool:
    return isinstance(value, Ciphertext)
