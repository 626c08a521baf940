import numpy as np
import pytest
from hypothesis import given, strategies as st

from twasim.errors import InsufficientNoise, InvalidArgument
from twasim.noise import (NoiseRecord, measured_snr, mix, noise_pair, power, resample_noise,
                          snr_gain, synthetic_noise)
from twasim.preprocess import remove_baseline


def clean_ecg(n=8000, fs=1000.0):
    t = np.arange(n) / fs
    return np.exp(-((t % 0.8) - 0.4) ** 2 / (2 * 0.01 ** 2)) + 0.2 * np.sin(2 * np.pi * 0.3 * t)


@pytest.fixture(scope="module")
def pair():
    return noise_pair(1000.0, seed=7, duration_s=120.0)


def test_resample_examples():
    rec = NoiseRecord("MA", 1000.0, np.arange(10.0))
    assert resample_noise(rec, 1000.0) is rec
    const = NoiseRecord("EM", 360.0, np.full(100, 0.7))
    assert np.allclose(resample_noise(const, 1000.0).samples, 0.7)
    ramp = NoiseRecord("EM", 360.0, np.linspace(0, 1, 361))
    out = resample_noise(ramp, 1000.0)
    assert np.allclose(out.samples, np.arange(len(out)) / 1000.0, atol=1e-9)
    assert abs(len(out) / 1000.0 - len(ramp) / 360.0) <= 1 / 1000.0 + 1 / 360.0


def test_noise_record_validation():
    with pytest.raises(InvalidArgument):
        NoiseRecord("XX", 360.0, np.ones(3))
    with pytest.raises(InvalidArgument):
        NoiseRecord("MA", 360.0, np.array([]))
    with pytest.raises(InvalidArgument):
        NoiseRecord("MA", 360.0, np.array([np.inf]))


def test_gain_formula():
    assert snr_gain(1.0, 1.0, 20.0) == pytest.approx(0.1)


def test_vanishing_noise(pair, rng):
    x = clean_ecg()
    out = mix(x, *pair, 200.0, rng)
    assert np.sqrt(power(out - x) / power(x)) < 1e-8


@given(st.floats(15, 30), st.integers(0, 2 ** 32 - 1))
def test_snr_calibration_and_equal_power(snr, seed):
    ma, em = noise_pair(1000.0, seed=7, duration_s=120.0)
    x = clean_ecg()
    out, pm, pe = mix(x, ma, em, snr, np.random.default_rng(seed), return_parts=True)
    assert measured_snr(x, out, 1000.0) == pytest.approx(snr, abs=0.5)
    assert abs(power(pm) - power(pe)) / power(pm) < 0.01


def test_example_22db(pair, rng):
    x = clean_ecg()
    out = mix(x, *pair, 22.0, rng)
    ref = 10 * np.log10(np.mean(remove_baseline(x, 1000.0) ** 2) / np.mean((out - x) ** 2))
    assert ref == pytest.approx(22.0, abs=0.5)


def test_determinism(pair):
    x = clean_ecg()
    a = mix(x, *pair, 18.0, np.random.default_rng(4))
    b = mix(x, *pair, 18.0, np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_short_noise_rejected():
    short = NoiseRecord("MA", 1000.0, np.random.default_rng(0).normal(size=1000))
    with pytest.raises(InsufficientNoise):
        mix(clean_ecg(), short, short, 20.0, np.random.default_rng(0))


def test_synthetic_noise_unit_rms():
    for kind in ("MA", "EM", "BW"):
        rec = synthetic_noise(kind, duration_s=30.0, seed=2)
        assert rec.fs == 360.0 and len(rec) == 10800
        assert np.std(rec.samples) == pytest.approx(1.0)
