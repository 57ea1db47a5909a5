"""Arithmetic in the negacyclic ring Z_q[x]/(x^d + 1).

Coefficients are Python integers stored canonically in ``[0, q)``; the
signed view in ``[-q/2, q/2)`` is produced on demand by
:meth:`RingPoly.centered`.  Multiplication has two routes:

* :func:`negacyclic_schoolbook` -- the O(d^2) reference,
* :func:`negacyclic_convolve` -- Kronecker substitution: both operands are
  packed into one big integer each, multiplied once with GMP, and the
  product is unpacked and folded with ``x^d = -1``.

The two must agree bit for bit; the test-suite checks this.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import numpy as np

from .rng import RngHandle

GAUSSIAN_TAIL_CUT = 6.0


@dataclass(frozen=True)
class RingParams:
    d: int
    q: int

    def __post_init__(self):
        if self.d < 2 or self.d & (self.d - 1):
            raise ValueError(f"ring degree must be a power of two >= 2, got {self.d}")
        if self.q < 2:
            raise ValueError("coefficient modulus must be >= 2")

    @property
    def q_bits(self) -> int:
        return (self.q - 1).bit_length()


class ParameterMismatch(ValueError):
    pass


# -- raw integer-list kernels -------------------------------------------------

def negacyclic_schoolbook(a, b):
    """Reference negacyclic product over Z (no modular reduction)."""
    d = len(a)
    out = [0] * d
    for i, ai in enumerate(a):
        if not ai:
            continue
        for j, bj in enumerate(b):
            k = i + j
            if k < d:
                out[k] += ai * bj
            else:
                out[k - d] -= ai * bj
    return out


def slot_bytes(a_bits, b_bits, terms):
    """Bytes per Kronecker slot for sums of ``terms`` products of the given sizes.

    One spare bit is reserved so :func:`fold_unpack` can bias slots positive.
    """
    return (a_bits + b_bits + terms.bit_length() + 2 + 7) // 8


def pack(coeffs, nbytes):
    """Kronecker-pack non-negative coefficients into a single mpz."""
    return gmpy2.mpz.from_bytes(b"".join(c.to_bytes(nbytes, "little") for c in coeffs), "little")


def unpack(value, nbytes, count):
    buf = value.to_bytes(nbytes * count, "little")
    fb = int.from_bytes
    return [fb(buf[i * nbytes:(i + 1) * nbytes], "little") for i in range(count)]


_BIAS_CACHE = {}


def _bias(nbytes, d):
    key = (nbytes, d)
    if key not in _BIAS_CACHE:
        top = 1 << (8 * nbytes - 1)
        _BIAS_CACHE[key] = (pack([top] * d, nbytes), top)
    return _BIAS_CACHE[key]


def fold_unpack(product, nbytes, d):
    """Unpack a 2d-slot Kronecker product and fold it with x^d = -1.

    The high half is subtracted from the low half while still packed; a
    per-slot bias keeps every slot non-negative so a single unpack of d
    slots suffices.  Returns signed integers.
    """
    shift = 8 * nbytes * d
    bias, top = _bias(nbytes, d)
    folded = gmpy2.f_mod_2exp(product, shift) + bias - (product >> shift)
    return [v - top for v in unpack(folded, nbytes, d)]


def negacyclic_convolve(a, b, a_bits=None, b_bits=None):
    """Negacyclic product over Z of two non-negative coefficient lists.

    ``a_bits``/``b_bits`` bound the coefficient sizes (computed when not
    given).
    """
    d = len(a)
    if a_bits is None:
        a_bits = max(a).bit_length()
    if b_bits is None:
        b_bits = max(b).bit_length()
    nbytes = slot_bytes(a_bits, b_bits, d)
    return fold_unpack(pack(a, nbytes) * pack(b, nbytes), nbytes, d)


# -- polynomial type --------------------------------------------------------------

class RingPoly:
    """Immutable element of Z_q[x]/(x^d + 1)."""

    __slots__ = ("params", "coeffs")

    def __init__(self, params: RingParams, coeffs, reduced: bool = False):
        coeffs = list(coeffs)
        if len(coeffs) != params.d:
            raise ValueError(f"expected {params.d} coefficients, got {len(coeffs)}")
        if not reduced:
            q = params.q
            coeffs = [int(c) % q for c in coeffs]
        self.params = params
        self.coeffs = tuple(coeffs)

    @classmethod
    def zero(cls, params):
        return cls(params, [0] * params.d, reduced=True)

    @classmethod
    def constant(cls, params, value):
        return cls(params, [value] + [0] * (params.d - 1))

    @classmethod
    def monomial(cls, params, k, value=1):
        """``value * x^k`` with the negacyclic sign applied for ``k >= d``."""
        d = params.d
        k %= 2 * d
        sign = -1 if k >= d else 1
        c = [0] * d
        c[k % d] = sign * value
        return cls(params, c)

    def centered(self):
        """Signed representatives in ``[-q/2, q/2)``."""
        q = self.params.q
        half = q // 2
        return [c - q if c >= half + (q & 1) else c for c in self.coeffs]

    def infinity_norm(self) -> int:
        return max((abs(c) for c in self.centered()), default=0)

    def __eq__(self, other):
        return isinstance(other, RingPoly) and self.params == other.params and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.params, self.coeffs))

    def __repr__(self):
        head = ", ".join(str(c) for c in self.coeffs[:4])
        more = ", ..." if self.params.d > 4 else ""
        return f"RingPoly(d={self.params.d}, q={self.params.q}, [{head}{more}])"

    def __add__(self, other):
        return ring_add(self, other)

    def __sub__(self, other):
        return ring_sub(self, other)

    def __neg__(self):
        q = self.params.q
        return RingPoly(self.params, [(q - c) % q for c in self.coeffs], reduced=True)

    def __mul__(self, other):
        if isinstance(other, RingPoly):
            return ring_mul(self, other)
        return ring_scalar_mul(self, other)

    __rmul__ = __mul__


def _check(a: RingPoly, b: RingPoly):
    if a.params != b.params:
        raise ParameterMismatch(f"ring parameters differ: {a.params} vs {b.params}")


def ring_add(a: RingPoly, b: RingPoly) -> RingPoly:
    _check(a, b)
    q = a.params.q
    return RingPoly(a.params, [(x + y) % q for x, y in zip(a.coeffs, b.coeffs)], reduced=True)


def ring_sub(a: RingPoly, b: RingPoly) -> RingPoly:
    _check(a, b)
    q = a.params.q
    return RingPoly(a.params, [(x - y) % q for x, y in zip(a.coeffs, b.coeffs)], reduced=True)


def ring_scalar_mul(a: RingPoly, s: int) -> RingPoly:
    q = a.params.q
    s = int(s) % q
    return RingPoly(a.params, [(s * x) % q for x in a.coeffs], reduced=True)


def ring_mul(a: RingPoly, b: RingPoly, schoolbook: bool = False) -> RingPoly:
    """(a * b) mod (x^d + 1, q)."""
    _check(a, b)
    if schoolbook:
        raw = negacyclic_schoolbook(a.coeffs, b.coeffs)
    else:
        qb = a.params.q_bits
        raw = negacyclic_convolve(a.coeffs, b.coeffs, qb, qb)
    return RingPoly(a.params, raw)


# -- samplers ---------------------------------------------------------------------

def sample_uniform(params: RingParams, rng: RngHandle) -> RingPoly:
    return RingPoly(params, rng.randbelow(params.q, params.d), reduced=True)


def sample_ternary(params: RingParams, rng: RngHandle) -> RingPoly:
    return RingPoly(params, [int(v) for v in rng.integers(-1, 2, size=params.d)])


def discrete_gaussian(n: int, sigma: float, rng: RngHandle) -> np.ndarray:
    """Rounded normal draws with rejection beyond ``GAUSSIAN_TAIL_CUT * sigma``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    bound = GAUSSIAN_TAIL_CUT * sigma
    out = np.rint(rng.normal(0.0, sigma, size=n))
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = np.rint(rng.normal(0.0, sigma, size=int(bad.sum())))
        bad = np.abs(out) > bound
    return out.astype(np.int64)


def sample_gaussian(params: RingParams, sigma: float, rng: RngHandle) -> RingPoly:
    return RingPoly(params, [int(v) for v in discrete_gaussian(params.d, sigma, rng)])
