import numpy as np
import pytest
from hypothesis import given, strategies as st

from fhestats.encode import (
    CATEGORICAL,
    ORDINAL,
    EncodingError,
    PartitionSpec,
    VariableBins,
    build_partitions,
    encode_method1,
    encode_method2,
    encrypt_dataset,
    eq_indicator,
    quantize_real,
    range_indicator,
    read_csv,
)
from fhestats.fv import dec
from fhestats.rng import RngHandle


def display_spec():
    return PartitionSpec((
        VariableBins("v1", CATEGORICAL, levels=("0", "1")),
        VariableBins("v2", ORDINAL, edges=(1.0, 2.0)),
        VariableBins("v3", ORDINAL, edges=(1.6, 1.65, 1.7, 1.8)),
    ))


DISPLAY_ROWS = [[0, 1, 1.7], [1, 3, 1.62], [0, 2, 1.9]]


def sorted_quantile(values, q):
    """Linear-interpolation quantile from the sorted sample."""
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = int(pos)
    frac = pos - lo
    return s[lo] + (s[min(lo + 1, len(s) - 1)] - s[lo]) * frac


def test_quantize_examples():
    assert quantize_real(1.7, 1) == 17
    assert quantize_real(0.0, 5) == 0
    assert quantize_real(-2.345, 2) == -235
    assert quantize_real(2.5, 0) == 3
    assert quantize_real(-2.5, 0) == -3
    with pytest.raises(OverflowError):
        quantize_real(1000, 0, bound=999)
    with pytest.raises(ValueError):
        quantize_real(float("nan"), 1)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.integers(0, 6))
def test_quantize_monotone(a, b, phi):
    lo, hi = min(a, b), max(a, b)
    assert quantize_real(lo, phi) <= quantize_real(hi, phi)


def test_quantiles_of_one_to_hundred():
    spec = build_partitions({"x": list(range(1, 101))}, bins_per_var=5)
    edges = spec["x"].edges
    assert edges == pytest.approx([sorted_quantile(range(1, 101), k / 5) for k in range(1, 5)])
    counts = np.bincount([spec["x"].bin_of(v) for v in range(1, 101)])
    assert list(counts[1:]) == [20] * 5


def test_binary_and_constant_columns():
    spec = build_partitions({"b": [0, 1, 1, 0]})
    assert spec["b"].kind == CATEGORICAL and spec["b"].n_bins == 2
    with pytest.warns(UserWarning, match="constant"):
        spec = build_partitions({"c": [3.0] * 10})
    assert spec["c"].n_bins == 1


def test_tied_quantiles_collapse_with_warning():
    with pytest.warns(UserWarning, match="collapse"):
        spec = build_partitions({"x": [0] * 50 + list(range(1, 11))}, bins_per_var=5)
    assert spec["x"].n_bins < 5


def test_display_rows_method1_and_method2():
    spec = display_spec()
    m1 = encode_method1(DISPLAY_ROWS, spec, compact_binary=True)
    assert list(m1.cells[0]) == [0, 1, 0, 0, 0, 0, 1, 0, 0]
    m2 = encode_method2(DISPLAY_ROWS, spec, compact_binary=True)
    assert list(m2.cells[0]) == [0, 1, 3]
    assert list(m2.cells[1]) == [1, 3, 2]
    full = encode_method1(DISPLAY_ROWS, spec)
    for name, blk in full.blocks.items():
        assert all(sum(row[blk]) == 1 for row in full.cells)


def test_out_of_range_values_clamp_to_end_bins():
    v = VariableBins("x", ORDINAL, edges=(1.0, 2.0))
    assert v.bin_of(-100) == 1
    assert v.bin_of(1.0) == 1
    assert v.bin_of(1.5) == 2
    assert v.bin_of(100) == 3


def test_unknown_level_rejected():
    with pytest.raises(EncodingError):
        encode_method1([["z", 1, 1.7]], display_spec())


def test_centered_method2_codes():
    spec = build_partitions({"x": list(range(1, 101))}, bins_per_var=5)
    codes = encode_method2(np.array([[v] for v in range(1, 101)], dtype=object), spec, centered=True).cells[:, 0]
    assert sorted(set(codes)) == [-2, -1, 0, 1, 2]
    assert sum(codes) == 0


@pytest.mark.filterwarnings("ignore:variable 'x' is constant")
@given(st.lists(st.integers(0, 4), min_size=1, max_size=30))
def test_discrete_encoding_is_lossless(values):
    spec = build_partitions({"x": values}, bins_per_var=5, kinds={"x": ORDINAL})
    v = spec["x"]
    qd = encode_method1(np.array([[x] for x in values], dtype=object), spec)
    bins = [int(np.argmax(row)) + 1 for row in qd.plain_cells()]
    distinct = sorted(set(values))
    assert [distinct[b - 1] for b in bins] == values
    assert v.n_bins == len(distinct)


def test_spec_text_roundtrip(tmp_path):
    spec = display_spec()
    assert PartitionSpec.from_text(spec.to_text()) == spec
    path = tmp_path / "p.spec"
    spec.save(path)
    assert PartitionSpec.load(path) == spec


def test_indicator_identities_plain():
    a = [0, 1, 0, 0, 0]
    assert eq_indicator(a, a) == 1
    assert eq_indicator(a, [1, 0, 0, 0, 0]) == 0
    assert range_indicator(a, [1, 2, 3, 4, 5]) == 1
    assert range_indicator(a, [3, 4]) == 0
    with pytest.raises(ValueError):
        range_indicator(a, [])
    with pytest.raises(ValueError):
        range_indicator(a, [6])


def test_indicator_identities_encrypted_match_plaintext(keys):
    spec = build_partitions({"x": list(range(20))}, bins_per_var=4)
    raw = np.array([[v] for v in range(0, 20, 2)], dtype=object)
    qd = encode_method1(raw, spec)
    enc_qd = encrypt_dataset(qd, keys.pk, RngHandle(4))
    gen = np.random.default_rng(0)
    for i in range(qd.n_rows):
        j = (i + 3) % qd.n_rows
        e = eq_indicator(enc_qd.cells[i], enc_qd.cells[j])
        assert e.depth == 1
        assert dec(keys.sk, e) == eq_indicator(qd.cells[i], qd.cells[j])
        K = sorted(set(gen.integers(1, 5, size=2).tolist()))
        r = range_indicator(enc_qd.cells[i], K)
        assert r.depth == 0
        assert dec(keys.sk, r) == int(spec["x"].bin_of(raw[i, 0]) in K)


def test_encrypt_dataset_decrypts_back(keys):
    qd = encode_method2(DISPLAY_ROWS, display_spec(), y=[1, 0, 1])
    enc_qd = encrypt_dataset(qd, keys.pk, RngHandle(1))
    assert enc_qd.encrypted
    back = enc_qd.decrypt(keys.sk)
    assert (back.cells == qd.cells).all() and (back.response == qd.response).all()


def test_read_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,colour,y\n1.5,red,yes\n2,blue,no\n\n")
    names, rows, y = read_csv(path, "y")
    assert names == ["a", "colour"]
    assert rows[0, 0] == 1.5 and rows[1, 1] == "blue"
    assert y == ["yes", "no"]
    with pytest.raises(EncodingError):
        read_csv(path, "missing")
    path.write_text("a,b\n1\n")
    with pytest.raises(EncodingError):
        read_csv(path)
