"""Electrode-motion and muscle-artifact noise at a calibrated SNR.

SNR is defined on baseline-removed signals:

    snr_db = 10 log10(P_clean / P_noise),  P = mean square

Muscle (MA) and electrode-motion (EM) segments are each scaled to half the
target noise power, summed, and the sum rescaled once more so the total hits
the target exactly regardless of the cross term.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal as sps

from .errors import InsufficientNoise, InvalidArgument
from .preprocess import remove_baseline

KINDS = ("MA", "EM", "BW")
NSTDB_FS = 360.0


@dataclass(frozen=True, eq=False)
class NoiseRecord:
    kind: str
    fs: float
    samples: np.ndarray
    detrended: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"noise kind must be one of {KINDS}")
        s = np.asarray(self.samples, dtype=np.float64).ravel()
        if s.size == 0:
            raise InvalidArgument("noise record is empty")
        if not np.all(np.isfinite(s)):
            raise InvalidArgument("noise samples must be finite")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    def detrend(self):
        """Baseline-removed copy; segments taken from it skip per-call filtering."""
        if self.detrended:
            return self
        return NoiseRecord(self.kind, self.fs, remove_baseline(self.samples, self.fs), True)


def resample_noise(noise, target_fs):
    if not target_fs > 0:
        raise InvalidArgument("target_fs must be > 0")
    if len(noise) == 0:
        raise InvalidArgument("empty noise record")
    if target_fs == noise.fs:
        return noise
    n_in = len(noise)
    n_out = int(np.floor((n_in - 1) * target_fs / noise.fs + 1e-9)) + 1
    t_in = np.arange(n_in) / noise.fs
    t_out = np.arange(n_out) / target_fs
    return NoiseRecord(noise.kind, float(target_fs), np.interp(t_out, t_in, noise.samples),
                       noise.detrended)


def power(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def snr_gain(p_signal, p_noise, snr_db):
    """Amplitude gain bringing noise of power ``p_noise`` to ``snr_db`` below the signal."""
    return float(np.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0))))


def measured_snr(clean, noisy, fs):
    clean = np.asarray(clean, dtype=np.float64)
    return 10.0 * np.log10(power(remove_baseline(clean, fs)) / power(np.asarray(noisy) - clean))


def _segment(noise, n, rng, fs):
    if noise.fs != fs:
        raise InvalidArgument(f"{noise.kind} noise at {noise.fs} Hz, signal at {fs} Hz")
    if len(noise) < n:
        raise InsufficientNoise(f"{noise.kind} noise has {len(noise)} samples, need {n}")
    start = int(rng.integers(0, len(noise) - n + 1))
    seg = noise.samples[start:start + n]
    return seg if noise.detrended else remove_baseline(seg, fs)


def mix(clean, ma, em, snr_db, rng, fs=None, return_parts=False):
    """Add equal-power MA and EM noise to ``clean`` at ``snr_db``."""
    if not np.isfinite(snr_db):
        raise InvalidArgument("snr_db must be finite")
    clean = np.asarray(clean, dtype=np.float64)
    fs = ma.fs if fs is None else fs
    n = clean.size
    p_target = power(remove_baseline(clean, fs)) / 10.0 ** (snr_db / 10.0)
    seg_ma = _segment(ma, n, rng, fs)
    seg_em = _segment(em, n, rng, fs)
    part_ma = seg_ma * np.sqrt(0.5 * p_target / max(power(seg_ma), 1e-300))
    part_em = seg_em * np.sqrt(0.5 * p_target / max(power(seg_em), 1e-300))
    total = part_ma + part_em
    g = np.sqrt(p_target / max(power(total), 1e-300)) if p_target > 0 else 0.0
    part_ma, part_em = part_ma * g, part_em * g
    out = clean + (part_ma + part_em)
    if return_parts:
        return out, part_ma, part_em
    return out


# -- synthetic stand-ins for the stress-test records ---------------------------


def _smooth_noise(rng, n, fs, cutoff):
    sos = sps.butter(2, cutoff, btype="lowpass", fs=fs, output="sos")
    z = sps.sosfiltfilt(sos, rng.standard_normal(n))
    return z / z.std()


def synthetic_noise(kind, duration_s=1800.0, fs=NSTDB_FS, seed=0):
    """Seeded noise with the broad character of the stress-test classes.

    MA: 5-120 Hz band-limited Gaussian noise under a slowly varying burst
    envelope.  EM: a sub-3 Hz wander plus Poisson-timed damped transients of
    40-250 ms.  BW: sub-0.5 Hz wander.  Each is scaled to unit RMS (mV).
    """
    if kind not in KINDS:
        raise InvalidArgument(f"noise kind must be one of {KINDS}")
    rng = np.random.default_rng([seed, KINDS.index(kind)])
    n = int(round(duration_s * fs))
    if kind == "MA":
        hi = min(120.0, 0.45 * fs)
        sos = sps.butter(4, [5.0, hi], btype="bandpass", fs=fs, output="sos")
        x = sps.sosfiltfilt(sos, rng.standard_normal(n))
        x *= np.exp(0.5 * _smooth_noise(rng, n, fs, 0.2))
    elif kind == "EM":
        x = 0.5 * _smooth_noise(rng, n, fs, 3.0)
        n_events = rng.poisson(0.5 * duration_s)
        t = np.arange(n) / fs
        for at, dur, amp, f0 in zip(rng.uniform(0, duration_s, n_events),
                                    rng.uniform(0.04, 0.25, n_events),
                                    rng.lognormal(0.0, 0.6, n_events) * rng.choice([-1, 1], n_events),
                                    rng.uniform(2.0, 12.0, n_events)):
            lo, hi = int(at * fs), min(int((at + 4 * dur) * fs), n)
            tt = t[lo:hi] - at
            x[lo:hi] += amp * np.exp(-tt / dur) * np.sin(2 * np.pi * f0 * tt)
    else:
        x = _smooth_noise(rng, n, fs, 0.5)
    x = x - x.mean()
    return NoiseRecord(kind, float(fs), x / x.std())


@lru_cache(maxsize=8)
def noise_pair(fs, seed=0, duration_s=1800.0):
    """Detrended MA and EM stand-ins resampled to ``fs``; cached per process."""
    ma = resample_noise(synthetic_noise("MA", duration_s, NSTDB_FS, seed), fs).detrend()
    em = resample_noise(synthetic_noise("EM", duration_s, NSTDB_FS, seed), fs).detrend()
    return ma, em
