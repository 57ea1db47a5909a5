"""Naive Bayes models that only need sums and products of encrypted integers.

Semi-parametric naive Bayes (SNB) models each predictor's log-odds
``log P(y=1|x_j) / P(y=0|x_j)`` as ``alpha_j + beta_j * x_j`` and fits it
with one Newton step of logistic regression from a zero start.  From that
start the working response is ``z = 4y - 2`` with unit weights, so the
step reduces to a 2x2 least-squares solve whose numerators and common
denominator are integer polynomials in the data.  Divisions are left to
the client after decryption.

Multinomial naive Bayes (MNB) works on indicator-encoded data and returns
count tables; selecting the table entry of a test value is an inner
product of its indicators with the table.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .encode import QuantizedDataset
from .fv import he_dot


class DegenerateFit(ValueError):
    pass


def _sum(values):
    values = list(values)
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total


def _binary_response(data: QuantizedDataset):
    if data.response is None:
        raise ValueError("training data needs a response")
    if data.response.shape[1] != 2:
        raise ValueError(f"binary response required, found {data.response.shape[1]} classes")
    return data.response[:, 1]


def working_response(y):
    """``z = 4y - 2``: the first IRLS working response from ``beta = 0``."""
    return [v * 4 - 2 for v in y]


# -- semi-parametric naive Bayes -------------------------------------------------------

@dataclass
class SnbFit:
    """Numerator/denominator factors of the one-step fit.

    Paired mode holds ``a, b, d`` per predictor with
    ``alpha_j = a_j/d_j`` and ``beta_j = b_j/d_j``.  Unpaired mode holds the
    common ``sum_z`` (``alpha = sum_z / N``) and per predictor
    ``b = sum x z`` and ``d = sum x^2`` (``beta_j = b_j/d_j``); ``a`` is unused.
    ``class_counts`` is ``(#y=0, #y=1)``.
    """

    paired: bool
    N: int
    class_counts: tuple
    a: list
    b: list
    d: list
    sum_z: object = None
    names: tuple = ()

    @property
    def P(self) -> int:
        return len(self.b)

    def coeffs(self) -> np.ndarray:
        """``3 x P`` object array of rows ``a, b, d``."""
        out = np.empty((3, self.P), dtype=object)
        out[0] = self.a if self.paired else [self.sum_z] * self.P
        out[1], out[2] = self.b, self.d
        return out


def snb_theta(y):
    """``(sum y, N - sum y)``: numerator and denominator of the class-ratio estimate.

    The log-odds assembly uses ``log((N - sum y) / sum y)``, i.e. the ratio
    ``P(y=0)/P(y=1)``.
    """
    y = list(y)
    ones = _sum(y)
    zeros = len(y) - ones
    if not any(hasattr(v, "c0") for v in y) and (ones == 0 or zeros == 0):
        raise DegenerateFit("only one class present; the class ratio is undefined")
    return ones, zeros


def snb_fit(data: QuantizedDataset, paired: bool = True) -> SnbFit:
    """One-step logistic factors for every predictor column.

    Paired::

        a_j = (sum x^2)(sum z) - (sum x)(sum x z)
        b_j = N (sum x z) - (sum x)(sum z)
        d_j = N (sum x^2) - (sum x)^2

    Unpaired: ``sum z``, ``sum x z`` and ``sum x^2``.  Depth: 2 for ``a`` and
    1 for ``b`` and ``d`` (paired), 1 for the unpaired sums.
    """
    if data.method != 2:
        raise ValueError("semi-parametric naive Bayes expects ordinal (Method 2) codes")
    y = _binary_response(data)
    N = data.n_rows
    z = working_response(y)
    sum_z = _sum(z)
    ones = _sum(y)
    counts = (N - ones, ones)
    a, b, d = [], [], []
    for j in range(data.cells.shape[1]):
        x = list(data.cells[:, j])
        sx = _sum(x)
        sxx = he_dot(x, x)
        sxz = he_dot(x, z)
        if paired:
            a.append(sxx * sum_z - sx * sxz)
            b.append(sxz * N - sx * sum_z)
            d.append(sxx * N - sx * sx)
        else:
            b.append(sxz)
            d.append(sxx)
        if not data.encrypted and d[-1] == 0:
            warnings.warn(f"predictor {data.columns[j]!r} carries no information; its d_j is zero", stacklevel=2)
    return SnbFit(paired, N, counts, a, b, d, None if paired else sum_z, tuple(data.columns))


def snb_fit_indicators(data: QuantizedDataset, centered: bool = False) -> SnbFit:
    """Unpaired fit from indicator (Method 1) data using per-bin counts.

    With bin values ``v_k`` (``k`` or ``k - (m+1)//2`` when centred),
    ``beta_j = 2 sum_k v_k (n1_k - n0_k) / sum_k v_k^2 n_k`` where ``n_k``
    counts rows in bin ``k`` and ``n1_k`` those with ``y = 1``.  Returned in
    the unpaired layout with ``b = 2 sum_k v_k (2 n1_k - n_k)`` and
    ``d = sum_k v_k^2 n_k``; identical to :func:`snb_fit` on the codes.
    """
    if data.method != 1:
        raise ValueError("expects indicator (Method 1) encoding")
    y = _binary_response(data)
    N = data.n_rows
    sum_z = _sum(working_response(y))
    ones = _sum(y)
    b, d = [], []
    for name, blk in data.blocks.items():
        m = blk.stop - blk.start
        offset = (m + 1) // 2 if centered else 0
        num, den = 0, 0
        for k in range(1, m + 1):
            col = list(data.cells[:, blk.start + k - 1])
            v = k - offset
            n_k = _sum(col)
            n1_k = he_dot(col, y)
            num = num + (n1_k * 2 - n_k) * (2 * v)
            den = den + n_k * (v * v)
        b.append(num)
        d.append(den)
    return SnbFit(False, N, (N - ones, ones), [], b, d, sum_z, tuple(data.blocks))


def snb_predict_raw(fit: SnbFit, newX: QuantizedDataset):
    """Per-row numerators ``e`` (rows x P) and denominators ``d`` (length P).

    Paired: ``e_j = a_j + b_j x*_j`` so that ``e_j/d_j = alpha_j + beta_j x*_j``.
    Unpaired: ``e_j = b_j x*_j``; the shared intercept ``sum_z / N`` is added
    at assembly.
    """
    cells = newX.cells
    if cells.shape[1] != fit.P:
        raise ValueError(f"expected {fit.P} predictors, got {cells.shape[1]}")
    e = np.empty(cells.shape, dtype=object)
    for i in range(cells.shape[0]):
        for j in range(fit.P):
            slope = fit.b[j] * cells[i, j]
            e[i, j] = fit.a[j] + slope if fit.paired else slope
    return {"e": e, "d": list(fit.d), "class_counts": fit.class_counts, "sum_z": fit.sum_z, "N": fit.N}


def snb_log_odds(e, d, class_counts, sum_z=None, N=None) -> np.ndarray:
    """Log-odds ``(P-1) log(n0/n1) + sum_j e_j/d_j`` (+ ``P sum_z/N`` unpaired)."""
    e = np.atleast_2d(np.asarray(e, dtype=float))
    d = np.asarray(d, dtype=float)
    n0, n1 = (float(c) for c in class_counts)
    if n0 <= 0 or n1 <= 0:
        raise DegenerateFit("both classes must be present to form the class ratio")
    P = e.shape[1]
    keep = d != 0
    if not keep.any():
        raise DegenerateFit("every predictor has d_j = 0")
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} predictor(s) with d_j = 0", stacklevel=2)
    psi = (P - 1) * math.log(n0 / n1) + (e[:, keep] / d[keep]).sum(axis=1)
    if sum_z is not None:
        psi = psi + P * float(sum_z) / float(N)
    return psi


def snb_assemble(raw: dict) -> np.ndarray:
    """``P(y=1 | x*)`` from decrypted raw predictions (see :func:`snb_predict_raw`)."""
    psi = snb_log_odds(raw["e"], raw["d"], raw["class_counts"], raw.get("sum_z"), raw.get("N"))
    return 1.0 / (1.0 + np.exp(-psi))


def decrypt_raw(sk, raw: dict) -> dict:
    from .fv import dec

    f = np.vectorize(lambda v: dec(sk, v), otypes=[object])
    out = dict(raw)
    out["e"] = f(raw["e"])
    out["d"] = [dec(sk, v) for v in raw["d"]]
    out["class_counts"] = tuple(dec(sk, v) for v in raw["class_counts"])
    if raw.get("sum_z") is not None:
        out["sum_z"] = dec(sk, raw["sum_z"])
    return out


def shrinkage_curve(beta):
    """Expected bias ``E[beta~ - beta] = -2 + 4 e^beta / (1 + e^beta) - beta`` of the one-step slope."""
    beta = np.asarray(beta, dtype=float)
    return -2.0 + 4.0 / (1.0 + np.exp(-beta)) - beta


def generalisation_error(n, p):
    """Cubic approximation to ``E[p~ - p]`` at ``x = 1`` for ``n`` observations."""
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    poly = (8 * n**2 * p**3 - 12 * n**2 * p**2 + 6 * n**2 * p - n**2 - 24 * n * p**3
            + 36 * n * p**2 - 12 * n * p + 16 * p**3 - 24 * p**2 + 8 * p)
    return -poly / (6 * n**2)


def generalisation_error_limit(p):
    """Large-``n`` limit ``-(2p - 1)^3 / 6``."""
    p = np.asarray(p, dtype=float)
    return -((2 * p - 1) ** 3) / 6


# -- multinomial naive Bayes -----------------------------------------------------------

@dataclass
class MnbFit:
    """Count tables ``tables[name][c][k-1]`` and class counts ``(#y=0, #y=1)``."""

    tables: dict
    class_counts: tuple
    N: int
    laplace: int
    bins: dict


def mnb_fit(data: QuantizedDataset, laplace: int = 1) -> MnbFit:
    """Conditional counts ``sum_i x_ijk y_i`` and ``sum_i x_ijk (1 - y_i)`` (+ ``laplace``)."""
    if data.method != 1:
        raise ValueError("multinomial naive Bayes expects indicator (Method 1) encoding")
    if laplace < 0:
        raise ValueError("laplace pseudocount must be non-negative")
    y = list(_binary_response(data))
    N = data.n_rows
    ones = _sum(y)
    tables = {}
    for name, blk in data.blocks.items():
        row1, row0 = [], []
        for col in range(blk.start, blk.stop):
            x = list(data.cells[:, col])
            with1 = he_dot(x, y)
            row1.append(with1 + laplace)
            row0.append(_sum(x) - with1 + laplace)
        tables[name] = (row0, row1)
    return MnbFit(tables, (N - ones, ones), N, laplace, data.bin_counts())


def mnb_predict_raw(fit: MnbFit, newX: QuantizedDataset):
    """Per row, predictor and class the selected count ``sum_k x*_k table[c][k]``.

    Returns ``(selected, class_counts)`` with ``selected`` of shape
    ``rows x P x 2``.  Depth is one more than the tables (2 when both are
    encrypted).
    """
    if newX.method != 1:
        raise ValueError("expects indicator (Method 1) encoding")
    names = list(fit.tables)
    if list(newX.blocks) != names:
        raise ValueError("test data variables differ from the fitted ones")
    out = np.empty((newX.n_rows, len(names), 2), dtype=object)
    for i in range(newX.n_rows):
        for j, name in enumerate(names):
            x = list(newX.cells[i, newX.block(name)])
            for c in range(2):
                out[i, j, c] = he_dot(x, fit.tables[name][c])
    return out, fit.class_counts


def mnb_assemble(selected, class_counts, N: int, laplace: int = 0, bins=None) -> np.ndarray:
    """``P(y=1 | x*) = F1 / (F0 + F1)``.

    ``F_c = (n_c / N) prod_j s_jc / (n_c + laplace * M_j)`` where ``s_jc`` is
    the selected smoothed count.  Without smoothing this is
    ``N^-1 n_c^-(P-1) prod_j s_jc``.  Computed in log space.
    """
    s = np.asarray(selected, dtype=float)
    s = s[None] if s.ndim == 2 else s
    P = s.shape[1]
    n = np.asarray(class_counts, dtype=float)
    if (s < 0).any() or (n < 0).any():
        raise ValueError("counts must be non-negative")
    m = np.zeros(P) if bins is None else np.asarray(list(bins), dtype=float)
    if laplace and bins is None:
        raise ValueError("bin counts are needed to normalise smoothed tables")
    with np.errstate(divide="ignore"):
        logF = np.log(n / N)[None, :] + (np.log(s) - np.log(n[None, None, :] + laplace * m[None, :, None])).sum(axis=1)
    finite = np.isfinite(logF)
    if (~finite.any(axis=1)).any():
        raise DegenerateFit("both class factors are zero for some row")
    top = np.where(finite, logF, -np.inf).max(axis=1, keepdims=True)
    w = np.exp(logF - top)
    return w[:, 1] / w.sum(axis=1)
