import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcause.series import (
    CSVParseError,
    EmptyCSVError,
    GroupPartition,
    MultivariateSeries,
    SeriesError,
    load_csv,
    make_windows,
    standardize,
    validate_partition,
    write_csv,
)


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_plain(tmp_path):
    s = load_csv(_write(tmp_path, "1,2\n3,4\n5,6\n"))
    assert (s.T, s.N) == (3, 2)
    np.testing.assert_array_equal(s.values, [[1, 2], [3, 4], [5, 6]])
    assert s.names == ("Z1", "Z2")


def test_load_csv_header(tmp_path):
    s = load_csv(_write(tmp_path, "a,b\n1.5,-2e3\n"), header=True)
    assert s.names == ("a", "b")
    assert s.T == 1
    np.testing.assert_array_equal(s.values, [[1.5, -2000.0]])


def test_load_csv_bad_cell(tmp_path):
    with pytest.raises(CSVParseError) as info:
        load_csv(_write(tmp_path, "1,x\n"))
    assert (info.value.row, info.value.col) == (1, 2)


def test_load_csv_ragged(tmp_path):
    with pytest.raises(CSVParseError) as info:
        load_csv(_write(tmp_path, "1,2\n3\n"))
    assert info.value.row == 2


def test_load_csv_empty(tmp_path):
    with pytest.raises(EmptyCSVError):
        load_csv(_write(tmp_path, ""))


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = MultivariateSeries(rng.normal(size=(7, 3)), ("x", "y", "z"))
    path = tmp_path / "out.csv"
    write_csv(s, path)
    back = load_csv(path, header=True)
    assert back.names == s.names
    np.testing.assert_array_equal(back.values, s.values)


def test_series_rejects_nan_and_single_column():
    with pytest.raises(SeriesError):
        MultivariateSeries(np.array([[1.0, np.nan]]))
    with pytest.raises(SeriesError):
        MultivariateSeries(np.ones((3, 1)))
    with pytest.raises(SeriesError):
        MultivariateSeries(np.ones((3, 2)), ("a", "a"))


def test_standardize_two_point():
    s = MultivariateSeries(np.array([[0.0, 10.0], [2.0, 30.0]]))
    out, scaler = standardize(s)
    np.testing.assert_allclose(scaler.mean, [1.0, 20.0])
    np.testing.assert_allclose(scaler.std, [1.0, 10.0])
    np.testing.assert_allclose(out.values[:, 0], [-1.0, 1.0])


def test_standardize_idempotent():
    rng = np.random.default_rng(1)
    s = MultivariateSeries(rng.normal(size=(50, 3)))
    once, _ = standardize(s)
    twice, _ = standardize(once)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-8)
    np.testing.assert_allclose(once.values.mean(axis=0), 0, atol=1e-8)
    np.testing.assert_allclose(once.values.std(axis=0), 1, atol=1e-8)


def test_standardize_constant_column_named():
    s = MultivariateSeries(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]), ("flat", "ok"))
    with pytest.raises(SeriesError, match="flat"):
        standardize(s)


def test_standardize_fit_range():
    s = MultivariateSeries(np.array([[0.0, 0.0], [2.0, 4.0], [100.0, 100.0]]))
    out, scaler = standardize(s, (0, 2))
    np.testing.assert_allclose(out.values[:2].mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(scaler.mean, [1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(2, 5), st.floats(-1e3, 1e3), st.floats(1e-2, 1e3), st.integers(0, 10_000))
def test_standardize_round_trip(T, N, loc, scale, seed):
    rng = np.random.default_rng(seed)
    vals = loc + scale * rng.normal(size=(T, N))
    s = MultivariateSeries(vals)
    out, scaler = standardize(s)
    back = scaler.inverse_transform(out)
    err = np.abs(back.values - vals) / np.maximum(np.abs(vals), 1.0)
    assert err.max() <= 1e-10


def test_windows_stride_two():
    ws = make_windows(10, 4, 2, 2)
    assert list(ws.starts) == [4, 6, 8]
    assert len(ws) == 3


def test_windows_single_fit():
    ws = make_windows(6, 4, 2, 1)
    assert list(ws.starts) == [4]


def test_windows_too_short():
    with pytest.raises(SeriesError):
        make_windows(5, 4, 2)


def test_windows_default_stride_is_horizon():
    assert make_windows(20, 4, 3).stride == 3


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 20), st.integers(1, 10), st.integers(1, 6), st.integers(0, 60))
def test_window_coverage(context, horizon, stride, extra):
    length = context + horizon + extra
    ws = make_windows(length, context, horizon, stride)
    assert len(ws) == (length - context - horizon) // stride + 1
    prev = None
    for w in ws:
        c, t = w.context_slice, w.target_slice
        assert 0 <= c.start and t.stop <= length
        assert c.stop == t.start
        assert c.stop - c.start == context and t.stop - t.start == horizon
        if prev is not None:
            assert w.t0 - prev == stride
        prev = w.t0


def test_validate_partition_cases():
    ok = GroupPartition((("A", (0, 1)), ("B", (2, 3))))
    assert validate_partition(ok, 4) is None
    overlap = GroupPartition((("A", (0, 1)), ("B", (1, 2))))
    assert "overlap at index 1" in validate_partition(overlap, 3)
    gap = GroupPartition((("A", (0,)), ("B", (2,))))
    assert "gap at index 1" in validate_partition(gap, 3)
    empty = GroupPartition((("A", (0, 1)), ("B", ())))
    assert "empty" in validate_partition(empty, 2)
    single = GroupPartition((("A", (0, 1)),))
    assert validate_partition(single, 2) is not None


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.data())
def test_partition_validity_matches_sorted_concat(n, data):
    G = data.draw(st.integers(2, 4))
    groups = tuple(
        (f"G{g}", tuple(data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n))))
        for g in range(G)
    )
    part = GroupPartition(groups)
    concat = sorted(i for _, idx in groups for i in idx)
    assert (validate_partition(part, n) is None) == (concat == list(range(n)))


def test_partition_from_mapping_by_name():
    p = GroupPartition.from_mapping({"climate": ["T", "Rg"], "eco": ["GPP", "Reco"]},
                                    names=("T", "Rg", "GPP", "Reco"))
    assert p.groups == (("climate", (0, 1)), ("eco", (2, 3)))
    with pytest.raises(SeriesError):
        GroupPartition.from_mapping({"a": ["missing"]}, names=("x", "y"))
