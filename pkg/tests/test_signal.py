import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_flags, brute_moving_average

from kehmode.errors import InvalidInputError, InvalidParameterError, TraceTooShortError
from kehmode.signal import (StationaryMask, VoltageTrace, calibrate_threshold, detect_stationary,
                            excise_stationary, hop_length, moving_average, otsu_threshold,
                            preprocess, read_manifest, read_trace_csv, rolling_sigma, segment,
                            window_length, write_trace_csv)


def tr(x, fs=100.0, **kw):
    return VoltageTrace(np.asarray(x, dtype=float), fs, **kw)


# --- trace container ----------------------------------------------------

def test_trace_rejects_bad_rate_and_nonfinite():
    with pytest.raises(InvalidParameterError):
        tr([1.0, 2.0], fs=0.0)
    with pytest.raises(InvalidInputError):
        tr([1.0, np.nan])


# --- smoothing ----------------------------------------------------------

@pytest.mark.parametrize("x, span, expected", [
    ([5, 5, 5, 5, 5], 3, [5, 5, 5, 5, 5]),
    ([1, 5, 3], 3, [1, 3, 3]),
    ([0, 0, 1, 0, 0], 3, [0, 1 / 3, 1 / 3, 1 / 3, 0]),
])
def test_moving_average_examples(x, span, expected):
    np.testing.assert_allclose(moving_average(tr(x), span).samples, expected, atol=1e-15)


@pytest.mark.parametrize("span", [0, 2, 10, -3])
def test_moving_average_rejects_even_or_zero_span(span):
    with pytest.raises(InvalidParameterError):
        moving_average(tr([1.0, 2.0, 3.0]), span)


def test_moving_average_rejects_empty():
    with pytest.raises(InvalidInputError):
        moving_average(tr([]), 3)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
       st.integers(0, 12).map(lambda h: 2 * h + 1))
def test_moving_average_matches_reference(x, span):
    out = moving_average(tr(x, label="bus", trace_id="t"), span)
    assert len(out) == len(x)
    assert out.label == "bus" and out.trace_id == "t"
    np.testing.assert_allclose(out.samples, brute_moving_average(x, span), rtol=1e-9, atol=1e-9)


@given(st.floats(-100, 100), st.integers(1, 50), st.integers(0, 10).map(lambda h: 2 * h + 1))
def test_moving_average_constant_is_fixed_point(c, n, span):
    np.testing.assert_allclose(moving_average(tr([c] * n), span).samples, c, rtol=1e-12, atol=1e-12)


# --- stop detection -----------------------------------------------------

def test_constant_trace_is_all_stationary():
    assert detect_stationary(tr(np.full(300, 2.5)), 1e-6).flags.all()


def test_alternating_trace_is_never_stationary():
    x = np.tile([1.0, -1.0], 150)
    flags = detect_stationary(tr(x), 0.1).flags
    assert not flags[100:].any()
    assert not flags.any()


def test_step_into_vibration():
    x = np.concatenate([np.zeros(200), np.tile([1.0, -1.0], 100)])
    flags = detect_stationary(tr(x), 0.1).flags
    ref = brute_flags(list(x), 100, 0.1)
    np.testing.assert_array_equal(flags, ref)
    m = int(np.argmin(flags[200:]))
    assert 0 < m < 100
    assert flags[:200 + m].all() and not flags[200 + m:].any()


def test_detect_stationary_short_trace():
    with pytest.raises(TraceTooShortError):
        detect_stationary(tr(np.zeros(100)), 0.1)


def test_detect_stationary_rejects_nonpositive_threshold():
    with pytest.raises(InvalidParameterError):
        detect_stationary(tr(np.zeros(300)), 0.0)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([10.0, 25.0, 50.0, 100.0]),
       st.floats(0.05, 2.0))
def test_detect_stationary_matches_brute_force(seed, fs, threshold):
    rng = np.random.default_rng(seed)
    n = int(fs) * 3 + int(rng.integers(1, 40))
    # mix quiet and noisy stretches so both decisions occur
    scale = np.repeat(rng.choice([0.01, 1.0], size=6), -(-n // 6))[:n]
    x = rng.normal(size=n) * scale
    k = int(round(fs))
    np.testing.assert_array_equal(detect_stationary(tr(x, fs), threshold).flags,
                                  brute_flags(list(x), k, threshold))


# --- excision -----------------------------------------------------------

def test_excise_examples():
    t = tr([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(
        excise_stationary(t, StationaryMask(np.array([True, False, True, False]))).samples, [2, 4])
    assert len(excise_stationary(t, StationaryMask(np.ones(4, bool)))) == 0
    np.testing.assert_array_equal(excise_stationary(t, StationaryMask(np.zeros(4, bool))).samples,
                                  t.samples)


def test_excise_length_mismatch():
    with pytest.raises(InvalidInputError):
        excise_stationary(tr([1.0, 2.0]), StationaryMask(np.zeros(3, bool)))


@given(st.lists(st.booleans(), min_size=1, max_size=80))
def test_excise_length_is_unflagged_count(flags):
    flags = np.array(flags)
    out = excise_stationary(tr(np.arange(flags.size, dtype=float)), StationaryMask(flags))
    assert len(out) == int((~flags).sum())
    np.testing.assert_array_equal(out.samples, np.flatnonzero(~flags))


# --- segmentation -------------------------------------------------------

@pytest.mark.parametrize("n, count, starts", [(1000, 2, [0, 450]), (500, 1, [0]), (499, 0, [])])
def test_segment_examples(n, count, starts):
    windows = segment(tr(np.arange(n, dtype=float)), 5.0, 0.1)
    assert len(windows) == count
    assert [w.start for w in windows] == starts
    assert all(len(w.samples) == 500 for w in windows)


def test_segment_empty_trace_gives_no_windows():
    assert segment(tr([]), 5.0, 0.1) == []


def test_overlap_out_of_range():
    with pytest.raises(InvalidParameterError):
        segment(tr(np.zeros(10)), 0.05, 1.0)


@given(st.integers(0, 5000), st.floats(0.05, 10.0), st.sampled_from([10.0, 20.0, 50.0, 100.0]),
       st.sampled_from([0.0, 0.1, 0.25, 0.5]))
def test_segment_count_closed_form(n, T, fs, overlap):
    L = int(round(T * fs))
    h = int(round((1 - overlap) * L))
    if L < 1 or h < 1:
        return
    windows = segment(tr(np.zeros(n), fs), T, overlap)
    expected = 0 if n < L else (n - L) // h + 1
    assert len(windows) == expected
    assert all(len(w.samples) == L for w in windows)
    assert all(b.start - a.start == h for a, b in zip(windows, windows[1:]))


def test_window_and_hop_lengths():
    assert window_length(5.0, 100.0) == 500
    assert hop_length(5.0, 100.0, 0.1) == 450


# --- composition --------------------------------------------------------

def test_pipeline_windows_avoid_injected_gaps(rng):
    # The detector looks back one second, so only the first k samples of a
    # stop can survive excision; the rest of every gap must be removed.
    fs, k = 100.0, 100
    parts, gaps = [], []
    for i in range(4):
        parts.append(rng.normal(size=800) + 10.0 * i)
        parts.append(np.full(400, 1000.0 + i))
        gaps.append(1000.0 + i)
    trace = tr(np.concatenate(parts), fs)
    moving = excise_stationary(trace, detect_stationary(trace, 0.05))
    for level in gaps:
        assert np.count_nonzero(moving.samples == level) <= k
    windows = preprocess(trace, 1, 0.05, 2.0, 0.1)
    assert windows
    for w in windows:
        np.testing.assert_array_equal(w.samples, moving.samples[w.start:w.start + len(w.samples)])


def test_rolling_sigma_length():
    assert rolling_sigma(tr(np.zeros(250))).shape == (150,)


def test_otsu_splits_two_modes(rng):
    low, high = rng.normal(-3, 0.2, 500), rng.normal(1, 0.2, 500)
    thr = otsu_threshold(np.concatenate([low, high]))
    assert (low < thr).mean() > 0.99 and (high > thr).mean() > 0.99


def test_calibrate_threshold_between_stop_and_motion(rng):
    x = np.concatenate([rng.normal(0, 1e-3, 600), rng.normal(0, 0.5, 1200)])
    thr = calibrate_threshold([tr(x)], 11)
    assert 1e-3 < thr < 0.1


# --- files --------------------------------------------------------------

def test_csv_round_trip(tmp_path, rng):
    t = tr(rng.normal(size=300), 100.0, label="car", user_id="u1", trace_id="x")
    path = tmp_path / "x.csv"
    write_trace_csv(t, path)
    assert path.read_text().splitlines()[0] == "t_s,voltage_v"
    back = read_trace_csv(path, 100.0, label="car", user_id="u1", trace_id="x")
    np.testing.assert_allclose(back.samples, t.samples, rtol=1e-8)


def test_csv_rate_mismatch(tmp_path):
    t = tr(np.zeros(200), 100.0)
    write_trace_csv(t, tmp_path / "a.csv")
    with pytest.raises(InvalidInputError):
        read_trace_csv(tmp_path / "a.csv", 50.0)


def test_csv_bad_header_and_time(tmp_path):
    (tmp_path / "h.csv").write_text("time,v\n0,1\n0.01,2\n")
    with pytest.raises(InvalidInputError):
        read_trace_csv(tmp_path / "h.csv", 100.0)
    (tmp_path / "t.csv").write_text("t_s,voltage_v\n0,1\n0,2\n")
    with pytest.raises(InvalidInputError):
        read_trace_csv(tmp_path / "t.csv", 100.0)


def test_manifest_validation(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"path": "x"}))
    with pytest.raises(InvalidInputError):
        read_manifest(p)
    p.write_text(json.dumps([{"path": "x", "mode": "plane", "user_id": "u", "trace_id": "t",
                              "sampling_rate_hz": 100}]))
    with pytest.raises(InvalidInputError):
        read_manifest(p)
