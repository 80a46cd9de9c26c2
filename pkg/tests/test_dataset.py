import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_poison.dataset import (
    FEATURES,
    Record,
    RecordSet,
    SplitSpec,
    correlation_matrix,
    histogram,
    histogram_values,
    load_csv,
    pearson_matrix,
    save_csv,
    split,
    split_sizes,
)
from mimo_poison.errors import CsvParseError, DataError, EmptyDatasetError

HEADER = ",".join(FEATURES)


def make_set(rng, n=20):
    data = rng.normal(size=(n, 12))
    data[:, FEATURES.index("los")] = rng.integers(0, 2, n)
    return RecordSet(data)


def test_record_round_trip():
    r = Record(1, 2, 3, 70.5, 10, 80, -170, 95, 123.0, 1e-10, 1e-8, 1)
    assert Record.from_array(r.to_array()) == r
    assert r.inputs().shape == (11,)


def test_csv_round_trip_bit_exact(tmp_path, rng):
    rs = make_set(rng, 3)
    save_csv(rs, tmp_path / "a.csv")
    back = load_csv(tmp_path / "a.csv")
    assert back.data.tobytes() == rs.data.tobytes()
    text = (tmp_path / "a.csv").read_bytes()
    assert b"\r" not in text and text.startswith(HEADER.encode())


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=11, max_size=11),
       st.integers(0, 1))
@settings(max_examples=60, deadline=None)
def test_csv_round_trip_property(tmp_path_factory, values, los):
    data = np.array([values[:11] + [los]], dtype=float)
    rs = RecordSet(data)
    p = tmp_path_factory.mktemp("csv") / "r.csv"
    save_csv(rs, p)
    assert load_csv(p).data.tobytes() == rs.data.tobytes()


def test_hand_built_export_accepted(tmp_path):
    rows = [
        "12.5,-3.0,14.2,78.1,-12.0,95.0,168.0,85.0,210.5,1.5e-11,4.7e-08,1",
        "20.0,4.0,25.3,90.2,30.0,97.1,-150.0,83.0,15.0,9.5e-13,9.1e-08,0",
        "0.5,0.5,13.0,75.2,45.0,91.0,-135.0,89.0,0.0,3.0e-11,4.3e-08,1",
        "-7.0,11.0,20.1,88.0,-57.5,94.2,122.5,86.0,359.9,1.6e-12,7.0e-08,0",
        "3.3,-9.9,18.3,80.0,-71.6,94.0,108.4,86.0,100.0,1.0e-11,6.1e-08,1",
    ]
    p = tmp_path / "export.csv"
    p.write_text(HEADER + "\n" + "\n".join(rows) + "\n")
    rs = load_csv(p)
    assert len(rs) == 5 and rs.provenance == "ingested"
    assert rs[1].los == 0 and rs[0].pathloss == 78.1


def test_csv_any_column_order(tmp_path, rng):
    rs = make_set(rng, 4)
    order = list(reversed(FEATURES))
    lines = [",".join(order)]
    for row in rs.data:
        lines.append(",".join(repr(float(row[FEATURES.index(c)])) if c != "los" else str(int(row[-1])) for c in order))
    p = tmp_path / "r.csv"
    p.write_text("\n".join(lines) + "\n")
    assert load_csv(p) == rs


def _write(tmp_path, header, row):
    p = tmp_path / "bad.csv"
    p.write_text(header + "\n" + row + "\n")
    return p


GOOD = "1,2,3,70,10,80,-170,95,123,1e-10,1e-8,1"


def test_missing_column_error(tmp_path):
    header = HEADER.replace("pathloss,", "")
    row = "1,2,3,10,80,-170,95,123,1e-10,1e-8,1"
    with pytest.raises(CsvParseError, match="missing column: pathloss"):
        load_csv(_write(tmp_path, header, row))


@pytest.mark.parametrize("header, row, match, column", [
    (HEADER + ",extra", GOOD + ",5", "unexpected column: extra", "extra"),
    (HEADER, GOOD.replace("70", "abc"), "row 1, column pathloss: non-numeric", "pathloss"),
    (HEADER, GOOD.replace("70", "nan"), "row 1, column pathloss: non-finite", "pathloss"),
    (HEADER, GOOD[:-1] + "2", "row 1, column los", "los"),
    (HEADER, GOOD[:-1] + "-1", "row 1, column los", "los"),
])
def test_parse_errors_name_row_and_column(tmp_path, header, row, match, column):
    with pytest.raises(CsvParseError, match=match) as info:
        load_csv(_write(tmp_path, header, row))
    assert info.value.column == column


def test_empty_and_missing_files(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text(HEADER + "\n")
    with pytest.raises(EmptyDatasetError):
        load_csv(p)
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv")


def test_recordset_is_immutable(rng):
    rs = make_set(rng)
    with pytest.raises(ValueError):
        rs.data[0, 0] = 1.0


def test_recordset_rejects_bad_values():
    row = np.zeros((1, 12))
    row[0, 0] = np.inf
    with pytest.raises(DataError):
        RecordSet(row)
    row = np.zeros((1, 12))
    row[0, -1] = 0.5
    with pytest.raises(DataError):
        RecordSet(row)


def test_feature_stats_consistent(rng):
    rs = make_set(rng, 50)
    st_ = rs.feature_stats
    assert np.array_equal(st_.mean, rs.data.mean(axis=0))
    sub = rs.subset(np.arange(10))
    assert np.array_equal(sub.feature_stats.maximum, rs.data[:10].max(axis=0))


# splitting

def test_split_sizes_examples():
    assert split_sizes(10, (0.4, 0.4, 0.2)) == (4, 4, 2)
    assert split_sizes(105_842, (0.4, 0.4, 0.2)) == (42_336, 42_337, 21_169)


@given(st.integers(3, 10_000), st.integers(0, 2**63 - 1))
@settings(max_examples=100, deadline=None)
def test_split_is_partition(n, seed):
    from mimo_poison.dataset import split_indices
    sizes = split_sizes(n, (0.4, 0.4, 0.2))
    if min(sizes) == 0:
        with pytest.raises(DataError):
            split_indices(n, SplitSpec(seed=seed))
        return
    parts = split_indices(n, SplitSpec(seed=seed))
    assert tuple(len(p) for p in parts) == sizes
    assert np.array_equal(np.sort(np.concatenate(parts)), np.arange(n))


def test_split_deterministic_and_seeded(rng):
    rs = make_set(rng, 100)
    a = split(rs, SplitSpec(seed=1))
    b = split(rs, SplitSpec(seed=1))
    c = split(rs, SplitSpec(seed=2))
    assert all(x == y for x, y in zip(a, b))
    assert not all(x == y for x, y in zip(a, c))
    union = np.vstack([p.data for p in a])
    assert np.array_equal(np.unique(union, axis=0), np.unique(rs.data, axis=0))


def test_split_spec_validation():
    with pytest.raises(DataError):
        SplitSpec(ratios=(0.5, 0.5, 0.1))
    with pytest.raises(DataError):
        SplitSpec(ratios=(1.2, -0.2, 0.0))


def test_split_empty_part(rng):
    with pytest.raises(DataError):
        split(make_set(rng, 2))


# statistics

def test_pearson_examples():
    X = np.array([[1, 2, 3], [2, 4, 2], [3, 6, 1]], float)
    c = pearson_matrix(X)
    assert c[0, 1] == pytest.approx(1.0)
    assert c[0, 2] == pytest.approx(-1.0)


def test_pearson_hand_value():
    # deviations (-4, -1, 5)/3 and (-4, 2, 2)/3 give r = 24 / sqrt(42 * 24)
    x = np.array([1.0, 2.0, 4.0])
    y = np.array([1.0, 3.0, 3.0])
    dx, dy = x - x.mean(), y - y.mean()
    hand = (dx @ dy) / math.sqrt((dx @ dx) * (dy @ dy))
    assert hand == pytest.approx(24 / math.sqrt(1008), abs=1e-15)
    assert hand == pytest.approx(0.7559289, abs=1e-7)
    assert pearson_matrix(np.column_stack([x, y]))[0, 1] == pytest.approx(hand, abs=1e-12)


def test_correlation_zero_variance_convention(rng):
    X = rng.normal(size=(30, 3))
    X[:, 1] = 5.0
    c = pearson_matrix(X)
    assert c[1].tolist() == [0.0, 0.0, 0.0]
    assert c[0, 0] == 1.0 and c[2, 2] == 1.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_correlation_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    rs = make_set(rng, 40)
    c = correlation_matrix(rs)
    assert c.shape == (12, 12)
    assert np.array_equal(c, c.T)
    assert np.all(np.abs(c) <= 1)
    assert np.linalg.eigvalsh(c).min() > -1e-8


def test_correlation_needs_two_records():
    with pytest.raises(DataError):
        pearson_matrix(np.zeros((1, 3)))


def test_histogram_examples():
    h = histogram_values([0, 1, 2, 3], 2)
    assert h.bins == [(0.0, 1.5, 2), (1.5, 3.0, 2)]
    d = histogram_values([1, 1, 1], 4)
    assert d.bins == [(1.0, 1.0, 3)] and d.degenerate
    assert not histogram_values([1, 1, 1], 1).degenerate


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.integers(1, 50))
def test_histogram_conserves_count(values, bins):
    h = histogram_values(values, bins)
    assert sum(c for _, _, c in h.bins) == len(values)


def test_histogram_validation(rng):
    rs = make_set(rng)
    with pytest.raises(DataError):
        histogram(rs, "nope", 3)
    with pytest.raises(DataError):
        histogram(rs, "pathloss", 0)
