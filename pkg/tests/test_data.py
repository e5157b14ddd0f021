import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moets.data import (
    STD_FLOOR,
    RawSeries,
    WindowSet,
    fit_stats,
    load_csv,
    make_windows,
    prepare,
    split,
    standardize,
    window_at,
    window_count,
)
from moets.errors import BoundsError, CapacityError, ConfigError, FormatError, ParseError
from moets.synthetic import RegimeSpec, regime_switching, to_series, write_csv


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_small_csv(tmp_path):
    path = write(tmp_path, "date,a,b\n2016-07-01 00:00,1,2\n2016-07-01 01:00,3,4\n2016-07-01 02:00,5,6.5\n")
    series = load_csv(path)
    assert series.values.shape == (3, 2)
    assert series.values.dtype == np.float64
    assert series.columns == ["a", "b"]
    assert series.timestamps[0] == "2016-07-01 00:00"
    assert series.name == "d"


def test_parse_error_names_row_and_column(tmp_path):
    path = write(tmp_path, "date,a,b\nt0,1,2\nt1,abc,4\n")
    with pytest.raises(ParseError, match=r"line 3, column 'a'"):
        load_csv(path)


def test_ragged_and_empty(tmp_path):
    with pytest.raises(ParseError, match="line 3"):
        load_csv(write(tmp_path, "date,a\nt0,1\nt1,2,3\n"))
    with pytest.raises(FormatError):
        load_csv(write(tmp_path, "", "empty.csv"))
    with pytest.raises(FormatError):
        load_csv(write(tmp_path, "date,a\n", "header.csv"))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "date,a\nt0,nan\n", "nan.csv"))


def test_csv_roundtrip_through_writer(tmp_path):
    values, _ = regime_switching(RegimeSpec(length=50, variates=3))
    series = load_csv(write_csv(tmp_path / "s.csv", values))
    np.testing.assert_array_equal(series.values, values)
    assert series.columns == ["v0", "v1", "v2"]


def test_ett_borders():
    b = split(17420, "ett-hour", 512, 96)
    assert (b.a, b.b, b.c) == (8640, 11520, 14400)
    assert b.train == (0, 8640) and b.val == (8640 - 512, 11520) and b.test == (11520 - 512, 14400)
    b = split(69680, "ett-minute", 96, 96)
    assert (b.a, b.b, b.c) == (34560, 46080, 57600)
    with pytest.raises(CapacityError, match="14400"):
        split(14000, "ett-hour", 96, 96)


def test_ratio_borders():
    b = split(100, "ratio-70-10-20", 4, 2)
    assert (b.a, b.b, b.c) == (70, 80, 100)
    b = split(1001, "ratio-70-10-20", 4, 2)
    assert (b.a, b.b, b.c) == (700, 800, 1001)


def test_split_capacity_and_protocol():
    with pytest.raises(CapacityError, match="at least"):
        split(20, "ratio-70-10-20", 16, 8)
    with pytest.raises(ConfigError):
        split(100, "weekly", 4, 2)


def test_standardize_uses_train_only():
    values = np.r_[np.arange(70.0), np.full(30, 1e6)][:, None]
    b = split(100, "ratio-70-10-20", 4, 2)
    z, stats = standardize(values, b)
    assert stats.mean[0] == pytest.approx(34.5)
    np.testing.assert_allclose(z[:70].mean(), 0.0, atol=1e-12)
    np.testing.assert_allclose(z[:70].std(), 1.0, atol=1e-12)
    np.testing.assert_allclose(stats.inverse(z), values, rtol=1e-12)


@given(st.integers(0, 2**31), st.floats(-1e3, 1e3), st.floats(0.01, 100))
def test_standardized_train_moments(seed, loc, scale):
    values = np.random.default_rng(seed).normal(loc, scale, size=(60, 3))
    z, _ = standardize(values, split(60, "ratio-70-10-20", 4, 2))
    np.testing.assert_allclose(z[:42].mean(0), 0.0, atol=1e-6)
    np.testing.assert_allclose(z[:42].std(0), 1.0, atol=1e-6)


def test_constant_column_warns(caplog):
    values = np.column_stack([np.full(100, 7.0), np.arange(100.0)])
    with caplog.at_level(logging.WARNING, logger="moets.data"):
        stats = fit_stats(values, split(100, "ratio-70-10-20", 4, 2))
    assert stats.std[0] == STD_FLOOR
    assert "constant" in caplog.text
    assert np.isfinite(stats.apply(values)).all()


def test_window_count_examples():
    assert window_count(100, 10, 5) == 86
    assert window_count(15, 10, 5) == 1
    assert window_count(100, 10, 5, stride=10) == 9
    with pytest.raises(CapacityError):
        window_count(14, 10, 5)
    with pytest.raises(ConfigError):
        window_count(100, 10, 5, stride=0)


@given(st.integers(2, 300), st.integers(1, 50), st.integers(1, 50), st.integers(1, 20))
def test_window_count_formula(length, lookback, horizon, stride):
    if length < lookback + horizon:
        return
    windows = make_windows(np.arange(float(length))[:, None], (0, length), lookback, horizon, stride)
    assert len(windows) == (length - lookback - horizon) // stride + 1
    assert [w.origin for w in windows] == sorted(w.origin for w in windows)
    last = windows[-1]
    assert last.origin + lookback + horizon <= length


def test_windows_content_and_batching():
    values = np.arange(40.0).reshape(20, 2)
    ws = WindowSet(values, (3, 20), 4, 2, stride=2)
    pairs = make_windows(values, (3, 20), 4, 2, stride=2)
    x, y = ws.batch(np.arange(len(ws)))
    for i, p in enumerate(pairs):
        np.testing.assert_array_equal(x[i], p.x)
        np.testing.assert_array_equal(y[i], p.y)
    assert sum(len(bx) for bx, _ in ws.batches(3)) == len(ws)


def test_test_targets_do_not_reach_back_into_train():
    series = to_series(np.arange(200.0)[:, None])
    data = prepare(series, "ratio-70-10-20", 16, 8)
    a, b = data.borders.a, data.borders.b
    for part, lo in (("val", a), ("test", b)):
        ws = data.windows(part)
        first_target = ws.origins.min() + 16
        assert first_target >= lo
    train = data.windows("train")
    assert train.origins.max() + 16 + 8 <= a


def test_window_at_bounds():
    values = np.zeros((30, 1))
    assert window_at(values, 0, 10, 5).x.shape == (10, 1)
    assert window_at(values, 15, 10, 5).y.shape == (5, 1)
    with pytest.raises(BoundsError):
        window_at(values, 16, 10, 5)
    with pytest.raises(BoundsError):
        window_at(values, -1, 10, 5)


def test_prepare_is_deterministic():
    values, _ = regime_switching(RegimeSpec(length=300))
    a = prepare(to_series(values), "ratio-70-10-20", 24, 8)
    b = prepare(to_series(values), "ratio-70-10-20", 24, 8)
    assert a.values.tobytes() == b.values.tobytes()
    xa, _ = a.windows("train").batch([0, 5])
    xb, _ = b.windows("train").batch([0, 5])
    assert xa.tobytes() == xb.tobytes()


def test_regime_generator_labels_and_continuity():
    values, labels = regime_switching(RegimeSpec(length=1000, segment=100, noise=0.0, shift=0.0))
    assert values.shape == (1000, 2)
    assert labels[:100].tolist() == [0] * 100 and labels[100:200].tolist() == [1] * 100
    # with no noise and no shifts every step is small
    assert np.abs(np.diff(values, axis=0)).max() < 0.3
    assert isinstance(to_series(values), RawSeries)
