"""Completely random forests over indicator-encoded data.

Trees are grown blind: split variables and bin partitions are drawn at
random without looking at the data, so growth never needs a comparison.
Fitting counts training observations of each class per leaf with sums and
products of indicator cells, which works unchanged on plain integers and
on ciphertexts.

Leaf numbering follows a complete binary tree: at level ``l`` (1-based)
there are ``2**(l-1)`` branches; an observation at branch ``g`` that takes
side ``h`` (1 or 2) continues at branch ``2*(g-1) + h`` of the next level,
and leaves are numbered ``1..2**L`` in the same way.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .encode import ORDINAL, QuantizedDataset, range_indicator
from .fv import Ciphertext, DepthBudgetExceeded, he_dot
from .rng import RngHandle

MAX_SPLIT_RETRIES = 100


class CoefficientBudgetExceeded(ValueError):
    """Values could outgrow the message modulus."""


# -- tree structure ---------------------------------------------------------------

def leaf_path_index(b: int, l: int, L: int) -> tuple[int, int]:
    """Branch ``g`` visited at level ``l`` on the way to leaf ``b``, and the side ``h`` taken."""
    if not 1 <= l <= L:
        raise ValueError(f"level {l} outside 1..{L}")
    if not 1 <= b <= 2 ** L:
        raise ValueError(f"leaf {b} outside 1..{2 ** L}")
    g = -(-b // 2 ** (L + 1 - l))
    h = ((b - 1) % 2 ** (L + 1 - l)) // 2 ** (L - l) + 1
    return g, h


@dataclass(frozen=True)
class Split:
    var: str
    left: tuple   # 1-based bins sent to side 1
    right: tuple  # bins sent to side 2


@dataclass(frozen=True)
class TreeSpec:
    depth: int
    splits: tuple  # splits[l-1][g-1] for level l, branch g

    def split(self, l: int, g: int) -> Split:
        return self.splits[l - 1][g - 1]

    def leaf_of(self, bins: dict) -> int:
        """Leaf reached by an observation whose bin per variable is ``bins``."""
        g = 1
        for l in range(1, self.depth + 1):
            s = self.split(l, g)
            h = 1 if bins[s.var] in s.left else 2
            g = 2 * (g - 1) + h
        return g


@dataclass(frozen=True)
class ForestSpec:
    trees: tuple
    depth: int
    seed: int
    variables: tuple  # (name, kind, n_bins)
    subset_fraction: float = 1.0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_leaves(self) -> int:
        return 2 ** self.depth

    def to_text(self) -> str:
        lines = [
            "# completely random forest v1",
            f"seed\t{self.seed}",
            f"trees\t{self.n_trees}",
            f"depth\t{self.depth}",
            f"subset\t{self.subset_fraction!r}",
        ]
        for name, kind, m in self.variables:
            lines.append(f"var\t{name}\t{kind}\t{m}")
        for t, tree in enumerate(self.trees, 1):
            for l, level in enumerate(tree.splits, 1):
                for g, s in enumerate(level, 1):
                    left = ",".join(map(str, s.left))
                    right = ",".join(map(str, s.right))
                    lines.append(f"split\t{t}\t{l}\t{g}\t{s.var}\t{left}\t{right}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ForestSpec":
        header, variables, splits = {}, [], {}
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "var":
                variables.append((parts[1], parts[2], int(parts[3])))
            elif parts[0] == "split":
                t, l, g = int(parts[1]), int(parts[2]), int(parts[3])
                left = tuple(int(k) for k in parts[5].split(","))
                right = tuple(int(k) for k in parts[6].split(","))
                splits[(t, l, g)] = Split(parts[4], left, right)
            else:
                header[parts[0]] = parts[1]
        try:
            T, L = int(header["trees"]), int(header["depth"])
            trees = tuple(
                TreeSpec(L, tuple(tuple(splits[(t, l, g)] for g in range(1, 2 ** (l - 1) + 1))
                                  for l in range(1, L + 1)))
                for t in range(1, T + 1)
            )
        except KeyError as exc:
            raise ValueError(f"incomplete forest description: missing {exc}") from None
        return cls(trees, L, int(header["seed"]), tuple(variables), float(header.get("subset", 1.0)))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "ForestSpec":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _random_split(name, kind, m, rng: RngHandle) -> Split:
    bins = list(range(1, m + 1))
    if kind == ORDINAL:
        cut = int(rng.integers(1, m))
        return Split(name, tuple(bins[:cut]), tuple(bins[cut:]))
    for _ in range(MAX_SPLIT_RETRIES):
        side = rng.integers(0, 2, size=m)
        if 0 < side.sum() < m:
            return Split(name, tuple(b for b, s in zip(bins, side) if s == 0),
                         tuple(b for b, s in zip(bins, side) if s == 1))
    raise RuntimeError(f"could not draw a two-sided split for {name!r}")


def crf_grow(bin_counts: dict, var_kinds: dict, T: int, L: int, seed: int,
             subset_fraction: float = 1.0) -> ForestSpec:
    """Grow ``T`` random trees of depth ``L`` from the variable layout alone.

    Tree ``t`` draws from its own substream, so any single tree can be
    regrown independently from ``seed``.
    """
    if T < 1 or L < 1:
        raise ValueError("T and L must be >= 1")
    if not 0 < subset_fraction <= 1:
        raise ValueError("subset_fraction must be in (0, 1]")
    names = list(bin_counts)
    if not names:
        raise ValueError("need at least one variable")
    if not any(bin_counts[n] >= 2 for n in names):
        raise ValueError("no variable has two or more bins to split on")
    root = RngHandle(seed)
    trees = []
    for t in range(T):
        rng = root.substream("tree", t)
        k = max(1, round(subset_fraction * len(names)))
        subset = [names[i] for i in sorted(rng.generator.choice(len(names), size=k, replace=False))]
        levels = []
        for l in range(1, L + 1):
            level = []
            for _ in range(2 ** (l - 1)):
                for _ in range(MAX_SPLIT_RETRIES):
                    name = subset[int(rng.integers(0, len(subset)))]
                    if bin_counts[name] >= 2:
                        break
                else:
                    raise RuntimeError(f"tree {t}: predictor subset has no splittable variable")
                level.append(_random_split(name, var_kinds.get(name, ORDINAL), bin_counts[name], rng))
            levels.append(tuple(level))
        trees.append(TreeSpec(L, tuple(levels)))
    variables = tuple((n, var_kinds.get(n, ORDINAL), bin_counts[n]) for n in names)
    return ForestSpec(tuple(trees), L, seed, variables, subset_fraction)


def grow_for(data: QuantizedDataset, T: int, L: int, seed: int, subset_fraction: float = 1.0) -> ForestSpec:
    return crf_grow(data.bin_counts(), data.var_kinds, T, L, seed, subset_fraction)


# -- encrypted evaluation -----------------------------------------------------------

def leaf_indicators(tree: TreeSpec, data: QuantizedDataset) -> np.ndarray:
    """``N x 2**L`` array whose ``(i, b)`` cell is 1 iff row ``i`` lands in leaf ``b``.

    Side 1 of each branch is ``parent * range_indicator``; side 2 is
    ``parent - side1``, which equals the product with the complementary
    range because the bins of a variable are one-hot.  Leaves carry depth
    ``L - 1``.
    """
    if data.method != 1:
        raise ValueError("forests need indicator (Method 1) encoding")
    cells = data.cells
    nodes = [np.ones(data.n_rows, dtype=object)]
    for l in range(1, tree.depth + 1):
        nxt = []
        for g, parent in enumerate(nodes, 1):
            s = tree.split(l, g)
            blk = data.block(s.var)
            ind = np.empty(data.n_rows, dtype=object)
            ind[:] = [range_indicator(cells[i], s.left, blk) for i in range(data.n_rows)]
            side1 = ind if l == 1 else parent * ind
            nxt += [side1, parent - side1]
        nodes = nxt
    return np.stack(nodes, axis=1)


def or_prefix(eta):
    """Prefix OR by doubling shifts: ``eta_i <- eta_i + eta_j - eta_i*eta_j`` for ``j = i - 2**l``."""
    eta = list(eta)
    M = len(eta)
    shift = 1
    while shift < M:
        eta = eta[:shift] + [eta[i] + eta[i - shift] - eta[i] * eta[i - shift] for i in range(shift, M)]
        shift *= 2
    return eta


def stochastic_fraction(eta, M: int, rng: RngHandle, indices=None):
    """Truncated-geometric estimate of ``N / sum(eta)`` from ``M`` resampled indicators.

    Resamples ``M`` entries of ``eta`` with replacement (indices are public
    randomness), fills ones forward with :func:`or_prefix`, and returns
    ``M - sum + 1``: the position of the first one, or ``M + 1`` if none.
    """
    if M < 1 or M & (M - 1):
        raise ValueError(f"M must be a power of two, got {M}")
    eta = list(eta)
    if indices is None:
        indices = rng.integers(0, len(eta), size=M)
    filled = or_prefix([eta[i] for i in indices])
    total = filled[0]
    for v in filled[1:]:
        total = total + v
    return (M + 1) - total


def crf_circuit_depth(L: int, M: int, predict_without_refresh: bool = False) -> int:
    """Exact multiplicative depth of the circuits built here.

    Counts have depth ``L``; the fraction estimate sits at ``L - 1 + log2 M``
    and scaling by it adds one.  Prediction on an encrypted fit adds one more.
    """
    fit = L if M == 0 else max(L, L - 1 + int(math.log2(M))) + 1
    return fit + (1 if predict_without_refresh else 0)


@dataclass
class FitTensor:
    """Per-tree leaf counts ``counts[t, b-1, c]`` plus the fraction-scaled votes."""

    counts: np.ndarray
    forest_digest: str
    n_fit: int
    M: int = 0
    adjusted: np.ndarray | None = None
    classes: list = field(default_factory=list)

    @property
    def votes(self) -> np.ndarray:
        return self.counts if self.adjusted is None else self.adjusted

    def meta(self) -> dict:
        return {"forest": self.forest_digest, "n_fit": self.n_fit, "M": self.M, "classes": self.classes,
                "adjusted": self.adjusted is not None}

    def decrypt(self, sk) -> "FitTensor":
        from .fv import dec

        f = np.vectorize(lambda v: dec(sk, v), otypes=[object])
        adj = None if self.adjusted is None else f(self.adjusted)
        return FitTensor(f(self.counts), self.forest_digest, self.n_fit, self.M, adj, self.classes)


def _params_of(values):
    for v in values:
        if isinstance(v, Ciphertext):
            return v.params
    return None


def crf_fit(forest: ForestSpec, data: QuantizedDataset, M: int = 0, rng: RngHandle | None = None) -> FitTensor:
    """Leaf counts ``rho[t, b, c] = sum_i y_ic * [row i in leaf b]`` for every tree.

    With ``M > 0`` every leaf also gets votes ``rho * fraction`` where the
    fraction estimate is drawn from ``rng.substream("fraction", t, b)``.
    Encrypted and plaintext inputs go through the same code.
    """
    if data.response is None:
        raise ValueError("training data needs a response")
    if M and (M & (M - 1)):
        raise ValueError(f"M must be 0 or a power of two, got {M}")
    if M and rng is None:
        raise ValueError("the stochastic fraction needs an RngHandle")
    params = _params_of(data.cells.flat)
    if params is not None:
        need = crf_circuit_depth(forest.depth, M)
        if need > params.depth_bound:
            raise DepthBudgetExceeded(
                f"fit needs depth {need} (L={forest.depth}, M={M}); parameters support {params.depth_bound}"
            )
        check_vote_range(params, forest.n_trees, data.n_rows, M)
    n_classes = data.response.shape[1]
    T, B = forest.n_trees, forest.n_leaves
    counts = np.empty((T, B, n_classes), dtype=object)
    adjusted = np.empty_like(counts) if M else None
    y = data.response
    for t, tree in enumerate(forest.trees):
        leaves = leaf_indicators(tree, data)
        for b in range(B):
            col = leaves[:, b]
            occupied = col.sum()
            last = occupied
            for c in range(n_classes - 1):
                counts[t, b, c] = he_dot(y[:, c], col)
                last = last - counts[t, b, c]
            # one-hot response: the final class is whatever the others leave over
            counts[t, b, n_classes - 1] = last if n_classes > 1 else he_dot(y[:, 0], col)
            if M:
                est = stochastic_fraction(col, M, rng.substream("fraction", t, b))
                for c in range(n_classes):
                    adjusted[t, b, c] = counts[t, b, c] * est
    return FitTensor(counts, forest.digest(), data.n_rows, M, adjusted, list(data.classes))


def check_vote_range(params, T: int, N: int, M: int):
    """Reject forests whose vote totals could wrap around the message modulus."""
    worst = T * N * (M + 1 if M else 1)
    if worst > params.t // 2:
        raise CoefficientBudgetExceeded(
            f"votes may reach {worst} but t={params.t} only represents up to {params.t // 2}"
        )


def crf_combine(fits) -> FitTensor:
    """Add fits of disjoint shards grown from the same forest.

    Raw counts combine exactly.  Fraction-scaled votes are summed too,
    each shard having estimated its fractions on its own rows.
    """
    fits = list(fits)
    if not fits:
        raise ValueError("nothing to combine")
    first = fits[0]
    for f in fits[1:]:
        if f.forest_digest != first.forest_digest:
            raise ValueError("fits come from different forests")
        if f.counts.shape != first.counts.shape or f.M != first.M:
            raise ValueError("fit tensors differ in shape or resample size")
    counts = first.counts.copy()
    adjusted = None if first.adjusted is None else first.adjusted.copy()
    for f in fits[1:]:
        counts = counts + f.counts
        if adjusted is not None:
            adjusted = adjusted + f.adjusted
    return FitTensor(counts, first.forest_digest, sum(f.n_fit for f in fits), first.M, adjusted, first.classes)


def crf_predict(forest: ForestSpec, fit: FitTensor, newdata: QuantizedDataset) -> np.ndarray:
    """Votes ``yhat[i, c] = sum_t sum_b votes[t, b, c] * [row i in leaf b]``."""
    if fit.forest_digest != forest.digest():
        raise ValueError("fit tensor was not produced by this forest")
    votes = fit.votes
    T, B, n_classes = votes.shape
    params = _params_of(votes.flat)
    if params is not None and _params_of(newdata.cells.flat) is not None:
        need = crf_circuit_depth(forest.depth, fit.M, predict_without_refresh=True)
        if need > params.depth_bound:
            raise DepthBudgetExceeded(f"prediction needs depth {need}; parameters support {params.depth_bound}")
    leaves = [leaf_indicators(tree, newdata) for tree in forest.trees]
    out = np.empty((newdata.n_rows, n_classes), dtype=object)
    for i in range(newdata.n_rows):
        path = [leaves[t][i, b] for t in range(T) for b in range(B)]
        for c in range(n_classes):
            out[i, c] = he_dot([votes[t, b, c] for t in range(T) for b in range(B)], path)
    return out


def crf_prob(votes) -> np.ndarray:
    """Normalise decrypted vote totals to probabilities; all-zero rows become uniform."""
    v = np.asarray(votes, dtype=float)
    squeeze = v.ndim == 1
    v = np.atleast_2d(v)
    if (v < 0).any():
        raise ValueError("vote totals must be non-negative")
    totals = v.sum(axis=1, keepdims=True)
    empty = totals[:, 0] == 0
    if empty.any():
        warnings.warn(f"{int(empty.sum())} row(s) received no votes; using the uniform distribution", stacklevel=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(totals > 0, v / np.where(totals > 0, totals, 1), 1.0 / v.shape[1])
    return p[0] if squeeze else p
