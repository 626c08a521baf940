import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.lib.stride_tricks import sliding_window_view

from twasim.errors import InvalidArgument
from twasim.library import builtin_templates
from twasim.preprocess import (EcgWindow, bsqi, detect_qrs_robust, detect_qrs_sensitive,
                               remove_baseline, segment_windows, select_windows, sqi)
from twasim.rhythm import RhythmConfig
from twasim.synthesizer import SynthesisConfig, dower_transform, synthesize_vcg


def median_oracle(x, k):
    h = k // 2
    padded = np.pad(x, h, mode="symmetric")
    return np.median(sliding_window_view(padded, k), axis=1)


def baseline_oracle(x, fs):
    k1, k2 = int(round(0.2 * fs)) | 1, int(round(0.6 * fs)) | 1
    return x - median_oracle(median_oracle(x, k1), k2)


@pytest.fixture(scope="module")
def ecg60():
    cfg = SynthesisConfig(builtin_templates()[3], RhythmConfig(60, hr_std=0), duration=16, seed=2)
    vcg = synthesize_vcg(cfg)
    return dower_transform(vcg, ("I",))["I"], vcg


def test_constant_removed():
    assert np.allclose(remove_baseline(np.full(1000, 0.5), 250.0), 0.0)


def test_matches_direct_two_pass_median():
    r = np.random.default_rng(0)
    x = np.cumsum(r.normal(size=2000)) * 0.01
    x[::250] += 1.0
    np.testing.assert_allclose(remove_baseline(x, 250.0), baseline_oracle(x, 250.0), atol=1e-12)


def test_spikes_preserved():
    fs = 500.0
    x = np.zeros(5000)
    t = np.arange(-20, 21)
    for c in range(250, 5000 - 50, 400):
        x[c + t] += np.exp(-t ** 2 / (2 * 6.0 ** 2))
    out = remove_baseline(x, fs)
    peaks = out[np.arange(250, 4950, 400)]
    assert np.all(np.abs(peaks - 1.0) <= 0.05)


@given(st.floats(-5, 5), st.integers(0, 2 ** 32 - 1))
def test_offset_equivariance(offset, seed):
    x = np.random.default_rng(seed).normal(size=600)
    np.testing.assert_allclose(remove_baseline(x + offset, 250.0), remove_baseline(x, 250.0),
                               atol=1e-12)


def test_idempotent_on_filtered():
    # narrow complexes on a drifting baseline: the first pass leaves a signal
    # whose median baseline is exactly zero, so a second pass changes nothing
    fs = 250.0
    r = np.random.default_rng(2)
    x = np.cumsum(r.normal(size=3000)) * 0.01
    t = np.arange(-5, 6)
    for c in range(100, 2900, 200):
        x[c + t] += np.exp(-t ** 2 / 8.0)
    once = remove_baseline(x, fs)
    twice = remove_baseline(once, fs)
    spikes_only = np.zeros(3000)
    for c in range(100, 2900, 200):
        spikes_only[c + t] += np.exp(-t ** 2 / 8.0)
    np.testing.assert_allclose(remove_baseline(spikes_only, fs), spikes_only, atol=1e-9)
    np.testing.assert_allclose(remove_baseline(remove_baseline(spikes_only, fs), fs),
                               remove_baseline(spikes_only, fs), atol=1e-9)
    assert np.max(np.abs(twice - once)) < 0.1 * np.max(np.abs(once))


def test_short_signal_rejected():
    with pytest.raises(InvalidArgument):
        remove_baseline(np.ones(10), 100.0)


@pytest.mark.parametrize("seconds,starts", [(16.0, [0.0]), (28.8, [0.0, 12.8]), (10.0, [])])
def test_segment_examples(seconds, starts):
    fs = 250.0
    wins = segment_windows(np.zeros(int(round(seconds * fs))), fs)
    assert [w.offset / fs for w in wins] == pytest.approx(starts)
    assert all(w.samples.size == 16 * fs for w in wins)


def test_segment_tiling_and_validation():
    fs = 100.0
    wins = segment_windows(np.zeros(int(100 * fs)), fs)
    assert np.allclose(np.diff([w.offset for w in wins]) / fs, 12.8)
    with pytest.raises(InvalidArgument):
        segment_windows(np.zeros(100), fs, overlap=1.0)


def test_detectors_count_beats(ecg60):
    x, vcg = ecg60
    expected = vcg.beat_onsets.size
    for det in (detect_qrs_robust, detect_qrs_sensitive):
        found = det(x, 1000.0)
        assert abs(found.size - 16) <= 1
        assert abs(found.size - expected) <= 1
        assert np.all(np.diff(found) >= 250)


def test_detectors_empty_on_zeros():
    assert detect_qrs_robust(np.zeros(4000), 1000.0).size == 0
    assert detect_qrs_sensitive(np.zeros(4000), 1000.0).size == 0


def test_robust_detector_polarity(ecg60):
    x, _ = ecg60
    a, b = detect_qrs_robust(x, 1000.0), detect_qrs_robust(-x, 1000.0)
    assert a.size == b.size
    assert np.all(np.abs(a - b) <= 20)


def test_detector_needs_three_seconds():
    with pytest.raises(InvalidArgument):
        detect_qrs_robust(np.zeros(100), 100.0)


def test_bsqi_examples():
    beats = np.arange(10) * 1000
    assert bsqi(beats, beats, 1000.0) == 1.0
    assert bsqi(beats, beats + 500, 1000.0) == 0.0
    assert bsqi(beats, np.sort(np.concatenate([beats, beats + 500])), 1000.0) == 0.5
    assert bsqi([], [], 1000.0) == 0.0


@given(st.lists(st.integers(0, 20000), max_size=30), st.lists(st.integers(0, 20000), max_size=30))
def test_bsqi_bounds_and_symmetry(a, b):
    a, b = np.unique(a), np.unique(b)
    v = bsqi(a, b, 1000.0)
    assert 0.0 <= v <= 1.0
    assert v == bsqi(b, a, 1000.0)


def test_clean_window_sqi_one(ecg60):
    x, _ = ecg60
    assert sqi(x, 1000.0) == 1.0


def _windows(sqis):
    return [EcgWindow(100.0, np.zeros(1600), s, ("r", i)) for i, s in enumerate(sqis)]


def test_select_examples():
    wins = _windows([1.0] * 60 + [0.9] * 5)
    a = select_windows(wins, 50, rng=3)
    b = select_windows(wins, 50, rng=3)
    assert len(a.windows) == 50 and not a.shortage
    assert [w.offset for w in a.windows] == [w.offset for w in b.windows]
    assert all(w.sqi == 1.0 for w in a.windows)
    few = select_windows(_windows([1.0] * 30), 50, rng=0)
    assert len(few.windows) == 30 and few.shortage
    none = select_windows(_windows([0.99] * 5), 50, rng=0)
    assert none.windows == [] and none.shortage
