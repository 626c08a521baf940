"""T-wave alternans by modified moving average (MMA) with a surrogate test.

Even- and odd-indexed beats feed two running averages.  Each new beat moves
its average by ``factor`` times the difference, and the per-sample step is
clipped to ``cap``.  The alternans estimate is the largest absolute
even-minus-odd difference inside the ST-T segment.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import InsufficientData, InvalidArgument

UPDATE_FACTOR = 1.0 / 8.0
CAP_UV = 32.0
MIN_BEATS = 8
N_SURROGATES = 99
WINDOW_BEATS = 60
WINDOW_OVERLAP = 0.5
PRE_R_S = 0.25
POST_R_S = 0.5
ST_START_S = 0.1
ST_END_S = 0.5
HR_BIN_EDGES = (30.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0)


def st_t_range(fs, mean_rr, pre_s=PRE_R_S, length=None):
    """Sample interval [R + 100 ms, R + min(500 ms, 0.9 RR)) inside a beat row."""
    r = int(round(pre_s * fs))
    lo = r + int(round(ST_START_S * fs))
    hi = r + int(round(min(ST_END_S, 0.9 * mean_rr) * fs))
    if length is not None:
        hi = min(hi, length)
    return lo, max(hi, lo)


@dataclass(frozen=True, eq=False)
class BeatMatrix:
    beats: np.ndarray
    fs: float
    st_t_range: tuple
    rr: np.ndarray
    r_index: int = 0

    def __post_init__(self):
        b = np.asarray(self.beats, dtype=np.float64)
        if b.ndim != 2:
            raise InvalidArgument("beats must be a 2-D array (beat, sample)")
        lo, hi = self.st_t_range
        if not 0 <= lo <= hi <= b.shape[1]:
            raise InvalidArgument(f"ST-T range {self.st_t_range} outside beat length {b.shape[1]}")
        rr = np.asarray(self.rr, dtype=np.float64)
        if rr.shape != (b.shape[0],):
            raise InvalidArgument("need one RR value per beat")
        object.__setattr__(self, "beats", b)
        object.__setattr__(self, "rr", rr)

    def __len__(self):
        return self.beats.shape[0]

    def window(self, start, stop):
        """Rows ``start:stop`` with the ST-T range recomputed from their RR."""
        rr = self.rr[start:stop]
        rng = st_t_range(self.fs, float(rr.mean()), self.r_index / self.fs, self.beats.shape[1])
        return BeatMatrix(self.beats[start:stop], self.fs, rng, rr, self.r_index)


def build_beat_matrix(signal, r_peaks, fs, pre_s=PRE_R_S, post_s=POST_R_S):
    """Cut [R - pre_s, R + post_s) around each peak; beats running off the
    record edge are dropped."""
    x = np.asarray(signal, dtype=np.float64)
    r = np.asarray(r_peaks, dtype=np.int64)
    pre, post = int(round(pre_s * fs)), int(round(post_s * fs))
    rr_all = np.diff(r) / fs
    rr = np.concatenate([[rr_all[0]], rr_all]) if rr_all.size else np.full(r.size, np.nan)
    ok = (r - pre >= 0) & (r + post <= x.size)
    r, rr = r[ok], rr[ok]
    idx = r[:, None] + np.arange(-pre, post)[None, :]
    beats = x[idx] if r.size else np.empty((0, pre + post))
    mean_rr = float(np.nanmean(rr)) if r.size else ST_END_S
    return BeatMatrix(beats, fs, st_t_range(fs, mean_rr, pre_s, pre + post), rr, pre)


def _twa_for_orders(beats, orders, update_factor, cap_uv):
    lo, hi = beats.st_t_range
    return 1e3 * kernels.mma_twa_batch(beats.beats, orders, update_factor, cap_uv * 1e-3, lo, hi)


def mma_twa(beats, update_factor=UPDATE_FACTOR, cap_uv=CAP_UV):
    """Alternans amplitude (uV) of the beats in their recorded order."""
    if len(beats) < MIN_BEATS:
        raise InsufficientData(f"MMA needs >= {MIN_BEATS} beats, got {len(beats)}")
    order = np.arange(len(beats))[None, :]
    return float(_twa_for_orders(beats, order, update_factor, cap_uv)[0])


def mma_averages(beats, update_factor=UPDATE_FACTOR, cap_uv=CAP_UV):
    """Full-length even and odd MMA averages (mV), for inspection."""
    b = beats.beats
    if b.shape[0] < 2:
        raise InsufficientData("need at least two beats")
    even, odd = b[0].copy(), b[1].copy()
    cap = cap_uv * 1e-3
    for k in range(2, b.shape[0]):
        avg = even if k % 2 == 0 else odd
        avg += np.clip((b[k] - avg) * update_factor, -cap, cap)
    return even, odd


class SurrogateResult(NamedTuple):
    p_value: float
    amplitude: float
    surrogates: np.ndarray


def surrogate_test(beats, n_surrogates=N_SURROGATES, rng=None,
                   update_factor=UPDATE_FACTOR, cap_uv=CAP_UV, full=False):
    """Beat-order permutation test for the observed MMA alternans.

    p = (1 + #{surrogate >= observed}) / (1 + n_surrogates).
    """
    if n_surrogates < 19:
        raise InvalidArgument("n_surrogates must be >= 19 to resolve p <= 0.05")
    n = len(beats)
    if n < MIN_BEATS:
        raise InsufficientData(f"MMA needs >= {MIN_BEATS} beats, got {n}")
    rng = np.random.default_rng(rng)
    perms = rng.permuted(np.tile(np.arange(n), (n_surrogates, 1)), axis=1)
    orders = np.vstack([np.arange(n)[None, :], perms])
    twa = _twa_for_orders(beats, orders, update_factor, cap_uv)
    observed, surr = float(twa[0]), twa[1:]
    p = (1.0 + np.count_nonzero(surr >= observed)) / (1.0 + n_surrogates)
    if full:
        return SurrogateResult(p, observed, surr)
    return p


@dataclass(frozen=True)
class TwaMeasurement:
    amplitude: float
    p_value: float
    mean_hr: float
    window_index: int


class SlidingResult(NamedTuple):
    measurements: list
    shortage: bool


def sliding_twa(beats, window_beats=WINDOW_BEATS, overlap=WINDOW_OVERLAP,
                n_surrogates=N_SURROGATES, rng=None,
                update_factor=UPDATE_FACTOR, cap_uv=CAP_UV):
    """MMA alternans and surrogate p-value in overlapping beat windows."""
    rng = np.random.default_rng(rng)
    n = len(beats)
    if n < window_beats:
        return SlidingResult([], True)
    step = max(int(round(window_beats * (1.0 - overlap))), 1)
    out = []
    for i, start in enumerate(range(0, n - window_beats + 1, step)):
        win = beats.window(start, start + window_beats)
        res = surrogate_test(win, n_surrogates, rng, update_factor, cap_uv, full=True)
        out.append(TwaMeasurement(res.amplitude, res.p_value,
                                  60.0 / float(win.rr.mean()), i))
    return SlidingResult(out, False)


@dataclass(frozen=True, eq=False)
class TwaFeatureVector:
    bins: np.ndarray
    n_dropped: int = 0
    n_significant: int = 0

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.float64)
        if b.shape != (6,) or np.any(b < 0):
            raise InvalidArgument("feature vector needs six non-negative bins")
        object.__setattr__(self, "bins", b)


def hr_bin(hr):
    """Index of the HR bin, or None outside [30, 110]."""
    if not HR_BIN_EDGES[0] <= hr <= HR_BIN_EDGES[-1]:
        return None
    if hr == HR_BIN_EDGES[-1]:
        return len(HR_BIN_EDGES) - 2
    return int(np.searchsorted(HR_BIN_EDGES, hr, side="right")) - 1


def bin_features(measurements, alpha=0.05):
    """Mean significant alternans amplitude per HR bin; empty bins are 0."""
    sums = np.zeros(6)
    counts = np.zeros(6)
    dropped = 0
    significant = 0
    for m in measurements:
        if m.p_value > alpha:
            continue
        k = hr_bin(m.mean_hr)
        if k is None:
            dropped += 1
            continue
        significant += 1
        sums[k] += m.amplitude
        counts[k] += 1
    bins = np.divide(sums, counts, out=np.zeros(6), where=counts > 0)
    return TwaFeatureVector(bins, dropped, significant)
