"""Quantisation of tabular data into integer messages.

Two encodings are offered for a binned variable with ``m`` bins:

* Method 1: one indicator column per bin (exactly one 1 per variable),
* Method 2: a single ordinal code in ``1..m`` (or centred around zero).

Method 1 turns equality and range tests into sums and inner products of
indicators, which is what the forest and multinomial models need.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .fv import Ciphertext, PublicKey, dec, enc, he_dot
from .rng import RngHandle

ORDINAL = "ordinal"
CATEGORICAL = "categorical"


class EncodingError(ValueError):
    pass


def quantize_real(z: float, phi: int, bound: int | None = None) -> int:
    """``round(10**phi * z)`` with halves rounded away from zero.

    The decimal expansion of ``z`` as printed by Python is used, so 2.345
    is treated as exactly 2.345 rather than its binary approximation.
    """
    if phi < 0:
        raise ValueError("phi must be non-negative")
    if not math.isfinite(z):
        raise ValueError(f"cannot quantise non-finite value {z!r}")
    value = int((Decimal(repr(float(z))).scaleb(phi)).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    if bound is not None and abs(value) > bound:
        raise OverflowError(f"quantised value {value} exceeds message bound {bound}")
    return value


# -- partitions ---------------------------------------------------------------------

def level_key(value) -> str:
    """Canonical text form of a categorical level (1.0 and '1' coincide)."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return str(int(value)) if float(value).is_integer() else repr(float(value))
    text = str(value).strip()
    try:
        return level_key(float(text))
    except ValueError:
        return text


@dataclass(frozen=True)
class VariableBins:
    """Bins of one variable.

    Ordinal bins are right-closed intervals cut at ``edges``: bin 1 is
    ``(-inf, edges[0]]`` and bin ``m`` is ``(edges[-1], inf)``, so test
    values beyond the training range fall into the nearest end bin.
    Categorical bins are the listed ``levels``.
    """

    name: str
    kind: str
    edges: tuple = ()
    levels: tuple = ()

    def __post_init__(self):
        if self.kind == ORDINAL:
            if list(self.edges) != sorted(set(self.edges)):
                raise ValueError(f"ordinal edges for {self.name!r} must be strictly increasing")
        elif self.kind == CATEGORICAL:
            if not self.levels or len(set(self.levels)) != len(self.levels):
                raise ValueError(f"categorical levels for {self.name!r} must be non-empty and distinct")
        else:
            raise ValueError(f"unknown variable kind {self.kind!r}")

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1 if self.kind == ORDINAL else len(self.levels)

    def bin_of(self, value) -> int:
        """1-based bin index of ``value``."""
        if self.kind == ORDINAL:
            return int(np.searchsorted(self.edges, float(value), side="left")) + 1
        key = level_key(value)
        try:
            return self.levels.index(key) + 1
        except ValueError:
            raise EncodingError(f"value {value!r} of {self.name!r} is not a known level") from None


@dataclass(frozen=True)
class PartitionSpec:
    variables: tuple

    @property
    def names(self):
        return [v.name for v in self.variables]

    def __getitem__(self, name) -> VariableBins:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_text(self) -> str:
        lines = ["# partition spec v1: name<TAB>kind<TAB>values..."]
        for v in self.variables:
            vals = [repr(float(e)) for e in v.edges] if v.kind == ORDINAL else list(v.levels)
            lines.append("\t".join([v.name, v.kind, *vals]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PartitionSpec":
        variables = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise EncodingError(f"line {lineno}: expected name and kind")
            name, kind, vals = parts[0], parts[1], parts[2:]
            if kind == ORDINAL:
                variables.append(VariableBins(name, kind, edges=tuple(float(x) for x in vals)))
            else:
                variables.append(VariableBins(name, kind, levels=tuple(vals)))
        return cls(tuple(variables))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "PartitionSpec":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _is_numeric(col) -> bool:
    try:
        np.asarray(col, dtype=float)
        return True
    except (TypeError, ValueError):
        return False


def build_partitions(columns, names=None, bins_per_var: int = 5, kinds=None) -> PartitionSpec:
    """Quantile bins for numeric variables, one bin per level for categorical ones.

    ``columns`` is a mapping of name to values or a 2-D array (columns are
    variables).  Numeric columns with two distinct values, and non-numeric
    columns, are categorical unless ``kinds`` says otherwise.  Numeric
    columns with at most ``bins_per_var`` distinct values get one bin per
    value.  Tied quantiles collapse bins with a warning.
    """
    if isinstance(columns, dict):
        names = list(columns) if names is None else list(names)
        cols = [columns[n] for n in names]
    else:
        arr = np.asarray(columns, dtype=object)
        if arr.ndim != 2:
            raise ValueError("columns must be a mapping or a 2-D array")
        cols = [arr[:, j] for j in range(arr.shape[1])]
        names = [f"v{j + 1}" for j in range(len(cols))] if names is None else list(names)
    kinds = dict(kinds or {})
    if bins_per_var < 1:
        raise ValueError("bins_per_var must be >= 1")
    variables = []
    for name, col in zip(names, cols):
        col = list(col)
        if not col:
            raise EncodingError(f"variable {name!r} has no observations")
        numeric = _is_numeric(col)
        kind = kinds.get(name)
        if kind is None:
            kind = ORDINAL if numeric and len({level_key(v) for v in col}) > 2 else CATEGORICAL
        if kind == CATEGORICAL:
            levels = sorted({level_key(v) for v in col}, key=_level_sort)
            if len(levels) == 1:
                warnings.warn(f"variable {name!r} is constant; encoded with a single bin", stacklevel=2)
            variables.append(VariableBins(name, CATEGORICAL, levels=tuple(levels)))
            continue
        x = np.asarray(col, dtype=float)
        distinct = np.unique(x)
        if len(distinct) == 1:
            warnings.warn(f"variable {name!r} is constant; encoded with a single bin", stacklevel=2)
            edges = ()
        elif len(distinct) <= bins_per_var:
            edges = tuple(float(v) for v in distinct[:-1])
        else:
            qs = np.quantile(x, np.arange(1, bins_per_var) / bins_per_var)
            kept = np.unique(qs)
            kept = kept[kept < distinct[-1]]
            if len(kept) < bins_per_var - 1:
                warnings.warn(
                    f"variable {name!r}: tied quantiles collapse {bins_per_var} bins to {len(kept) + 1}",
                    stacklevel=2,
                )
            edges = tuple(float(v) for v in kept)
        variables.append(VariableBins(name, ORDINAL, edges=edges))
    return PartitionSpec(tuple(variables))


def _level_sort(key: str):
    try:
        return (0, float(key), key)
    except ValueError:
        return (1, 0.0, key)


# -- encoded datasets ---------------------------------------------------------------

@dataclass
class QuantizedDataset:
    """Integer-encoded design matrix and one-hot response.

    ``cells`` and ``response`` are object arrays holding plain ``int`` or
    :class:`~fhestats.fv.Ciphertext` values.  ``blocks`` maps each variable
    to its column slice (width 1 for Method 2).
    """

    method: int
    cells: np.ndarray
    columns: list
    blocks: dict
    var_kinds: dict
    response: np.ndarray | None = None
    classes: list = field(default_factory=list)
    centered: bool = False

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def encrypted(self) -> bool:
        return any(isinstance(v, Ciphertext) for v in self.cells.flat)

    def block(self, name) -> slice:
        return self.blocks[name]

    def bin_counts(self) -> dict:
        return {n: s.stop - s.start for n, s in self.blocks.items()}

    def subset(self, rows) -> "QuantizedDataset":
        rows = np.asarray(rows)
        resp = None if self.response is None else self.response[rows]
        return QuantizedDataset(
            self.method, self.cells[rows], self.columns, self.blocks, self.var_kinds, resp, self.classes, self.centered
        )

    def decrypt(self, sk) -> "QuantizedDataset":
        dec_all = np.vectorize(lambda v: dec(sk, v), otypes=[object])
        resp = None if self.response is None else dec_all(self.response)
        return QuantizedDataset(
            self.method, dec_all(self.cells), self.columns, self.blocks, self.var_kinds, resp, self.classes, self.centered
        )

    def plain_cells(self) -> np.ndarray:
        if self.encrypted:
            raise ValueError("dataset is encrypted")
        return self.cells.astype(np.int64)

    def labels(self) -> np.ndarray:
        """Class index per row (plaintext response only)."""
        if self.response is None:
            raise ValueError("dataset has no response")
        return np.argmax(self.response.astype(np.int64), axis=1)


def _rows_of(raw, spec: PartitionSpec):
    arr = raw if isinstance(raw, np.ndarray) else np.asarray(raw, dtype=object)
    if arr.ndim != 2 or arr.shape[1] != len(spec.variables):
        raise EncodingError(f"expected {len(spec.variables)} columns, got shape {arr.shape}")
    return arr


def _compact(v: VariableBins, compact_binary: bool) -> bool:
    return compact_binary and v.kind == CATEGORICAL and v.n_bins == 2


def encode_response(y, classes=None):
    """One-hot integer matrix for labels ``y`` and the class list used."""
    keys = [level_key(v) for v in y]
    if classes is None:
        classes = sorted(set(keys), key=_level_sort)
    classes = [level_key(c) for c in classes]
    index = {c: k for k, c in enumerate(classes)}
    out = np.zeros((len(keys), len(classes)), dtype=object)
    out[:] = 0
    for i, key in enumerate(keys):
        if key not in index:
            raise EncodingError(f"response value {key!r} not among classes {classes}")
        out[i, index[key]] = 1
    return out, classes


def encode_method1(raw, spec: PartitionSpec, y=None, classes=None, compact_binary: bool = False) -> QuantizedDataset:
    """One indicator column per bin.

    ``compact_binary`` stores a two-level categorical variable as the single
    indicator of its second level, which is how a 0/1 variable is usually
    written; forest fitting needs the full two-column form.
    """
    arr = _rows_of(raw, spec)
    columns, blocks, start = [], {}, 0
    for v in spec.variables:
        width = 1 if _compact(v, compact_binary) else v.n_bins
        blocks[v.name] = slice(start, start + width)
        columns += [v.name] if width == 1 and v.n_bins == 2 else [f"{v.name}={k}" for k in range(1, width + 1)]
        start += width
    cells = np.zeros((arr.shape[0], start), dtype=object)
    cells[:] = 0
    for j, v in enumerate(spec.variables):
        blk = blocks[v.name]
        for i in range(arr.shape[0]):
            k = v.bin_of(arr[i, j])
            if _compact(v, compact_binary):
                cells[i, blk.start] = k - 1
            else:
                cells[i, blk.start + k - 1] = 1
    resp, classes = (None, []) if y is None else encode_response(y, classes)
    kinds = {v.name: v.kind for v in spec.variables}
    return QuantizedDataset(1, cells, columns, blocks, kinds, resp, classes)


def encode_method2(raw, spec: PartitionSpec, y=None, classes=None, centered: bool = False,
                   compact_binary: bool = False) -> QuantizedDataset:
    """Ordinal code per variable: ``1..m``, or ``k - (m+1)//2`` when ``centered``.

    Centring is exact (zero-mean codes) for odd ``m``, e.g. quintiles map to
    ``-2..2``.  ``compact_binary`` codes two-level variables as 0/1.
    """
    arr = _rows_of(raw, spec)
    cells = np.zeros(arr.shape, dtype=object)
    for j, v in enumerate(spec.variables):
        offset = (v.n_bins + 1) // 2 if centered else 0
        if _compact(v, compact_binary):
            offset = 1
        for i in range(arr.shape[0]):
            cells[i, j] = v.bin_of(arr[i, j]) - offset
    blocks = {v.name: slice(j, j + 1) for j, v in enumerate(spec.variables)}
    resp, classes = (None, []) if y is None else encode_response(y, classes)
    kinds = {v.name: v.kind for v in spec.variables}
    return QuantizedDataset(2, cells, list(spec.names), blocks, kinds, resp, classes, centered)


# -- encrypted comparison identities ----------------------------------------------------

def eq_indicator(row_a, row_b, block: slice | None = None):
    """Inner product of two one-hot blocks: 1 when both rows share a bin, else 0."""
    a = list(row_a[block] if block is not None else row_a)
    b = list(row_b[block] if block is not None else row_b)
    if len(a) != len(b):
        raise ValueError(f"indicator blocks differ in length ({len(a)} vs {len(b)})")
    return he_dot(a, b)


def range_indicator(row, bins, block: slice | None = None):
    """Sum of the indicators of the 1-based ``bins``: 1 when the value is in that set."""
    cells = list(row[block] if block is not None else row)
    bins = sorted(set(int(k) for k in bins))
    if not bins:
        raise ValueError("bin set must be non-empty")
    if bins[0] < 1 or bins[-1] > len(cells):
        raise ValueError(f"bins {bins} outside 1..{len(cells)}")
    total = cells[bins[0] - 1]
    for k in bins[1:]:
        total = total + cells[k - 1]
    return total


def encrypt_dataset(qd: QuantizedDataset, pk: PublicKey, rng: RngHandle) -> QuantizedDataset:
    """Encrypt every cell (and the response) under ``pk``; structure is unchanged."""
    n, p = qd.cells.shape
    cells = np.empty((n, p), dtype=object)
    for i in range(n):
        for j in range(p):
            cells[i, j] = enc(pk, qd.cells[i, j], rng.substream("x", i, j))
    resp = None
    if qd.response is not None:
        resp = np.empty(qd.response.shape, dtype=object)
        for i in range(resp.shape[0]):
            for c in range(resp.shape[1]):
                resp[i, c] = enc(pk, qd.response[i, c], rng.substream("y", i, c))
    return QuantizedDataset(qd.method, cells, qd.columns, qd.blocks, qd.var_kinds, resp, qd.classes, qd.centered)


# -- CSV ----------------------------------------------------------------------------

def read_csv(path, response: str | None = None):
    """Read a headed CSV.  Returns ``(names, rows, y)``.

    ``rows`` is an object array with floats where a column parses as
    numeric and strings otherwise; ``y`` is the response column (or None).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        records = [r for r in reader if any(c.strip() for c in r)]
    for lineno, r in enumerate(records, 2):
        if len(r) != len(header):
            raise EncodingError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
    table = np.array(records, dtype=object).reshape(len(records), len(header))
    y = None
    if response is not None:
        if response not in header:
            raise EncodingError(f"response column {response!r} not in header")
        k = header.index(response)
        y = [v.strip() for v in table[:, k]]
        table = np.delete(table, k, axis=1)
        header = header[:k] + header[k + 1:]
    rows = np.empty(table.shape, dtype=object)
    for j in range(table.shape[1]):
        col = [v.strip() for v in table[:, j]]
        rows[:, j] = [float(v) for v in col] if _is_numeric(col) else col
    return header, rows, y
