"""Parameter heuristics: depth capacity, advisory security, requirement helpers.

Depth capacity comes from a noise-budget model fitted to measurements of
this implementation (see ``tests/test_params.py`` for the empirical
oracle).  Fresh ciphertexts keep roughly ``q_bits - log2(t) - 14`` bits of
budget and every relinearized multiplication spends about
``log2(t) + log2(d) + 4`` bits; two bits are held back as a safety margin.

The security figure is an advisory closed form ``a*d/(q_bits - log2 sigma) + b``
calibrated on two reference points, ``(8192, 2^224) -> 158`` and
``(4096, 2^128) -> 128``.  It is not a lattice-estimator substitute.
"""

from __future__ import annotations

import math

FRESH_OVERHEAD_BITS = 14.0
LEVEL_OVERHEAD_BITS = 4.0
SAFETY_MARGIN_BITS = 2.0

TIER_DEGREES = (1024, 2048, 4096, 8192, 16384)

# fitted through the two calibration points documented above
_SEC_X1 = 8192 / (224 - 4)
_SEC_X2 = 4096 / (128 - 4)
SECURITY_SLOPE = (158 - 128) / (_SEC_X1 - _SEC_X2)
SECURITY_INTERCEPT = 128 - SECURITY_SLOPE * _SEC_X2


def _budget(d, q_bits, t, sigma):
    log_t = math.log2(t)
    fresh = q_bits - log_t - FRESH_OVERHEAD_BITS - max(0.0, math.log2(sigma / 16.0))
    per_level = log_t + math.log2(d) + LEVEL_OVERHEAD_BITS
    return fresh - SAFETY_MARGIN_BITS, per_level


def estimate_depth_bound(d: int, q_bits: int, t: int, sigma: float = 16.0) -> int:
    """Number of sequential ciphertext multiplications guaranteed to decrypt."""
    usable, per_level = _budget(d, q_bits, t, sigma)
    if usable <= 0:
        return 0
    return int(usable // per_level)


def estimate_security_bits(d: int, q_bits: int, sigma: float = 16.0) -> int:
    """Advisory security level in bits (clamped at zero)."""
    denom = q_bits - math.log2(sigma)
    if denom <= 0:
        return 0
    return max(0, round(SECURITY_SLOPE * d / denom + SECURITY_INTERCEPT))


def make_params(d: int, t: int, q_bits: int, sigma: float = 16.0):
    """Build :class:`~fhestats.fv.SchemeParams` with derived depth and security."""
    from .fv import SchemeParams

    return SchemeParams(d=d, q_bits=q_bits, t=t, sigma=sigma)


def message_modulus_for(max_abs_message: int) -> int:
    """Smallest power of two strictly above ``2 * max_abs_message``."""
    if max_abs_message < 1:
        raise ValueError("max_abs_message must be positive")
    return 1 << (2 * max_abs_message).bit_length()


def min_q_bits(d: int, t: int, depth: int, sigma: float = 16.0) -> int:
    """Smallest modulus size (bits) whose estimated depth capacity reaches ``depth``."""
    q_bits = t.bit_length() + 1
    while True:
        usable, per_level = _budget(d, q_bits, t, sigma)
        if usable > 0 and usable >= depth * per_level:
            return q_bits
        q_bits += 1


def params_help(lambda_bits: int, max_abs_message: int, depth_L: int, sigma: float = 16.0):
    """Smallest ring-degree tier meeting the message, depth and security request.

    Within a tier the modulus is the smallest one giving ``depth_L``;
    ``lambda_bits`` is treated as a minimum, so the result may exceed it.
    """
    if lambda_bits < 1 or max_abs_message < 1 or depth_L < 0:
        raise ValueError("lambda_bits and max_abs_message must be positive, depth_L non-negative")
    t = message_modulus_for(max_abs_message)
    for d in TIER_DEGREES:
        q_bits = min_q_bits(d, t, depth_L, sigma)
        if estimate_security_bits(d, q_bits, sigma) >= lambda_bits:
            return make_params(d, t, q_bits, sigma)
    raise ValueError(
        f"no parameter tier gives {lambda_bits}-bit security with depth {depth_L} and t={t}"
    )


# -- algorithm budgets ----------------------------------------------------------------

def depth_requirement_crf(L: int, M: int, predict_without_refresh: bool) -> int:
    """Conservative multiplicative-depth budget for a completely random forest.

    ``L`` for the fit, ``M`` more when the stochastic fraction is used and
    another ``L`` when prediction runs on an encrypted, unrefreshed fit.
    The circuit built by :mod:`fhestats.crf` needs no more than this; see
    :func:`fhestats.crf.crf_circuit_depth` for its exact depth.
    """
    if L < 1 or M < 0:
        raise ValueError("L must be >= 1 and M >= 0")
    return L + M + (L if predict_without_refresh else 0)


def coeff_requirement_crf(T: int, class_counts) -> int:
    """Largest vote total a forest of ``T`` trees can produce without the fraction step."""
    counts = list(class_counts)
    if T < 1 or not counts:
        raise ValueError("need T >= 1 and at least one class count")
    return T * max(counts)


def depth_requirement_snb(paired: bool) -> int:
    """Depth for semi-parametric naive Bayes: 4 paired, 2 unpaired (numerator)."""
    return 4 if paired else 2


def coeff_requirement_snb(N: int, paired: bool = True) -> int:
    """Coefficient bound: ``2 N^2`` paired, ``2 N`` unpaired."""
    if N < 1:
        raise ValueError("N must be positive")
    return 2 * N * N if paired else 2 * N
