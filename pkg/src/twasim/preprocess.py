"""Baseline removal, windowing, dual QRS detection and beat-agreement SQI."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage, signal as sps

from .errors import InvalidArgument

WINDOW_S = 16.0
OVERLAP = 0.2
REFRACTORY_S = 0.25
MATCH_S = 0.15
MIN_DETECT_S = 3.0


@dataclass(frozen=True, eq=False)
class EcgWindow:
    fs: float
    samples: np.ndarray
    sqi: float | None = None
    source: tuple = ("", 0)

    @property
    def offset(self):
        return self.source[1]


def _odd(n):
    n = max(int(round(n)), 1)
    return n if n % 2 else n + 1


def remove_baseline(signal, fs):
    """Subtract a two-stage (200 ms then 600 ms) median-filter baseline."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size <= 0.6 * fs:
        raise InvalidArgument(f"signal of {x.size} samples shorter than 600 ms at {fs} Hz")
    base = ndimage.median_filter(x, size=_odd(0.2 * fs), mode="reflect")
    base = ndimage.median_filter(base, size=_odd(0.6 * fs), mode="reflect")
    return x - base


def lowpass(signal, fs, cutoff=40.0, order=4):
    """Zero-phase Butterworth low-pass."""
    sos = sps.butter(order, cutoff, btype="lowpass", fs=fs, output="sos")
    return sps.sosfiltfilt(sos, np.asarray(signal, dtype=np.float64))


def segment_windows(signal, fs, window_s=WINDOW_S, overlap=OVERLAP, record_id=""):
    if not 0 <= overlap < 1:
        raise InvalidArgument(f"overlap must be in [0, 1), got {overlap}")
    x = np.asarray(signal, dtype=np.float64)
    n = int(round(window_s * fs))
    step = int(round(window_s * (1.0 - overlap) * fs))
    return [EcgWindow(fs, x[s:s + n], None, (record_id, s))
            for s in range(0, x.size - n + 1, step)]


def _samples(window, fs):
    if isinstance(window, EcgWindow):
        return window.samples, window.fs
    if fs is None:
        raise InvalidArgument("fs is required for raw sample arrays")
    return np.asarray(window, dtype=np.float64), float(fs)


def _check_length(x, fs):
    if x.size < MIN_DETECT_S * fs:
        raise InvalidArgument(f"detector needs >= {MIN_DETECT_S} s of signal")


def _enforce_refractory(idx, x, gap):
    """Drop the smaller of any two detections closer than ``gap`` samples."""
    kept = []
    for i in idx:
        if kept and i - kept[-1] < gap:
            if abs(x[i]) > abs(x[kept[-1]]):
                kept[-1] = i
            continue
        kept.append(i)
    return np.array(kept, dtype=np.int64)


def detect_qrs_robust(window, fs=None):
    """Energy detector: 5-15 Hz band-pass, squaring, 150 ms integration,
    adaptive signal/noise peak threshold with search-back, 250 ms refractory.
    Detections are placed at the largest |x| within 75 ms of the energy peak.
    """
    x, fs = _samples(window, fs)
    _check_length(x, fs)
    if not np.any(x):
        return np.empty(0, dtype=np.int64)
    sos = sps.butter(2, [5.0, 15.0], btype="bandpass", fs=fs, output="sos")
    energy = sps.sosfiltfilt(sos, x) ** 2
    w = max(int(round(0.15 * fs)), 1)
    mwi = np.convolve(energy, np.ones(w) / w, mode="same")
    refractory = int(round(REFRACTORY_S * fs))
    cand, _ = sps.find_peaks(mwi, distance=refractory)
    if cand.size == 0:
        return np.empty(0, dtype=np.int64)

    head = mwi[: int(2 * fs)]
    spk, npk = 0.25 * head.max(), 0.5 * head.mean()
    beats = []
    for c in cand:
        v = mwi[c]
        thr = npk + 0.25 * (spk - npk)
        if v > thr and (not beats or c - beats[-1] >= refractory):
            beats.append(c)
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk
    # search back with half threshold across long gaps
    if len(beats) >= 2:
        rr = np.median(np.diff(beats))
        extra = []
        for a, b in zip(beats[:-1], beats[1:]):
            if b - a > 1.66 * rr:
                inside = cand[(cand > a + refractory) & (cand < b - refractory)]
                if inside.size:
                    best = inside[np.argmax(mwi[inside])]
                    if mwi[best] > 0.5 * (npk + 0.25 * (spk - npk)):
                        extra.append(best)
        beats = sorted(beats + extra)

    half = int(round(0.075 * fs))
    refined = []
    for c in beats:
        lo, hi = max(c - half, 0), min(c + half + 1, x.size)
        refined.append(lo + int(np.argmax(np.abs(x[lo:hi]))))
    return _enforce_refractory(sorted(set(refined)), x, refractory)


def detect_qrs_sensitive(window, fs=None):
    """Peaks of |x| above 40% of the window maximum, 250 ms apart."""
    x, fs = _samples(window, fs)
    _check_length(x, fs)
    a = np.abs(x)
    top = a.max() if a.size else 0.0
    if top == 0:
        return np.empty(0, dtype=np.int64)
    peaks, _ = sps.find_peaks(a, height=0.4 * top, distance=int(round(REFRACTORY_S * fs)))
    return peaks.astype(np.int64)


def match_beats(a, b, tol):
    """Greedy nearest-first one-to-one matching; returns the match count."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.size == 0 or b.size == 0:
        return 0
    d = np.abs(a[:, None] - b[None, :])
    ia, ib = np.nonzero(d <= tol)
    order = np.lexsort((ib, ia, d[ia, ib]))
    used_a, used_b = set(), set()
    for k in order:
        i, j = int(ia[k]), int(ib[k])
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
    return len(used_a)


def bsqi(det_a, det_b, fs, tol_s=MATCH_S):
    """Matched pairs within ``tol_s`` over the union of both detection sets."""
    m = match_beats(det_a, det_b, tol_s * fs)
    union = len(det_a) + len(det_b) - m
    return m / union if union else 0.0


def sqi(window, fs=None):
    x, fs = _samples(window, fs)
    return bsqi(detect_qrs_robust(x, fs), detect_qrs_sensitive(x, fs), fs)


def with_sqi(windows):
    return [EcgWindow(w.fs, w.samples, sqi(w), w.source) for w in windows]


class Selection(NamedTuple):
    windows: list
    shortage: bool


def select_windows(windows, n=50, rng=None):
    """Uniform sample without replacement of ``n`` windows whose SQI is exactly 1."""
    rng = np.random.default_rng(rng)
    good = [w for w in windows if w.sqi is not None and w.sqi == 1.0]
    if len(good) <= n:
        return Selection(good, len(good) < n)
    pick = np.sort(rng.choice(len(good), size=n, replace=False))
    return Selection([good[i] for i in pick], False)
