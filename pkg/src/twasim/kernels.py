"""Hot numeric kernels.

Every kernel exists twice: an explicit-loop form compiled with numba and a
vectorised numpy form.  The module-level names point at the numba forms when
numba is importable and ``TWASIM_DISABLE_NUMBA`` is unset, otherwise at the
numpy forms.  Both forms are always reachable through ``loops`` and
``vectorized`` so they can be compared and benchmarked side by side.
"""
from types import SimpleNamespace

import numpy as np

from ._accel import USE_NUMBA, njit

TWO_PI = 2.0 * np.pi


def wrap_phase(x):
    """Map phase differences into (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, TWO_PI)


# -- loop forms ---------------------------------------------------------------


@njit(cache=True)
def _gaussian_sum_loop(phases, amps, widths, centers):
    n = phases.shape[0]
    out = np.zeros(n)
    for k in range(amps.shape[0]):
        a = amps[k]
        inv = 1.0 / (2.0 * widths[k] * widths[k])
        c = centers[k]
        for i in range(n):
            d = np.pi - ((np.pi - (phases[i] - c)) % TWO_PI)
            out[i] += a * np.exp(-d * d * inv)
    return out


@njit(cache=True)
def _render_loop(n_samples, fs, amps, centers, widths, support):
    out = np.zeros(n_samples)
    nb, nk = amps.shape
    for b in range(nb):
        for k in range(nk):
            a = amps[b, k]
            c = centers[b, k]
            w = widths[b, k]
            i0 = int(np.ceil((c - support * w) * fs))
            i1 = int(np.floor((c + support * w) * fs))
            if i0 < 0:
                i0 = 0
            if i1 > n_samples - 1:
                i1 = n_samples - 1
            inv = 1.0 / (2.0 * w * w)
            for i in range(i0, i1 + 1):
                t = i / fs - c
                out[i] += a * np.exp(-t * t * inv)
    return out


@njit(cache=True)
def _mma_twa_batch_loop(beats, orders, factor, cap, lo, hi):
    ns, nb = orders.shape
    m = hi - lo
    out = np.empty(ns)
    even = np.empty(m)
    odd = np.empty(m)
    for s in range(ns):
        r0 = orders[s, 0]
        r1 = orders[s, 1]
        for j in range(m):
            even[j] = beats[r0, lo + j]
            odd[j] = beats[r1, lo + j]
        for k in range(2, nb):
            row = orders[s, k]
            avg = even if k % 2 == 0 else odd
            for j in range(m):
                d = (beats[row, lo + j] - avg[j]) * factor
                if d > cap:
                    d = cap
                elif d < -cap:
                    d = -cap
                avg[j] += d
        best = 0.0
        for j in range(m):
            diff = abs(even[j] - odd[j])
            if diff > best:
                best = diff
        out[s] = best
    return out


# -- vectorised forms ---------------------------------------------------------


def _gaussian_sum_vec(phases, amps, widths, centers):
    if amps.shape[0] == 0:
        return np.zeros(phases.shape[0])
    d = wrap_phase(phases[:, None] - centers[None, :])
    return np.exp(-d * d / (2.0 * widths * widths)[None, :]) @ amps


def _render_vec(n_samples, fs, amps, centers, widths, support):
    out = np.zeros(n_samples)
    if amps.size == 0:
        return out
    for k in range(amps.shape[1]):
        a, c, w = amps[:, k], centers[:, k], widths[:, k]
        i0 = np.maximum(np.ceil((c - support * w) * fs).astype(np.int64), 0)
        i1 = np.minimum(np.floor((c + support * w) * fs).astype(np.int64), n_samples - 1)
        span = int(max((i1 - i0).max(), -1)) + 1
        if span <= 0:
            continue
        idx = i0[:, None] + np.arange(span)[None, :]
        keep = idx <= i1[:, None]
        t = idx / fs - c[:, None]
        vals = a[:, None] * np.exp(-t * t * (1.0 / (2.0 * w * w))[:, None])
        out += np.bincount(idx[keep], weights=vals[keep], minlength=n_samples)
    return out


def _mma_twa_batch_vec(beats, orders, factor, cap, lo, hi):
    seg = beats[:, lo:hi]
    even = seg[orders[:, 0]].copy()
    odd = seg[orders[:, 1]].copy()
    for k in range(2, orders.shape[1]):
        avg = even if k % 2 == 0 else odd
        avg += np.clip((seg[orders[:, k]] - avg) * factor, -cap, cap)
    if seg.shape[1] == 0:
        return np.zeros(orders.shape[0])
    return np.abs(even - odd).max(axis=1)


loops = SimpleNamespace(
    gaussian_sum=_gaussian_sum_loop,
    render=_render_loop,
    mma_twa_batch=_mma_twa_batch_loop,
)
vectorized = SimpleNamespace(
    gaussian_sum=_gaussian_sum_vec,
    render=_render_vec,
    mma_twa_batch=_mma_twa_batch_vec,
)
active = loops if USE_NUMBA else vectorized


def gaussian_sum(phases, amps, widths, centers):
    """Sum of wrapped Gaussian kernels evaluated at ``phases`` (radians)."""
    return active.gaussian_sum(
        np.ascontiguousarray(phases, dtype=np.float64),
        np.ascontiguousarray(amps, dtype=np.float64),
        np.ascontiguousarray(widths, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64),
    )


def render(n_samples, fs, amps, centers, widths, support=6.0):
    """Render time-domain Gaussian kernels onto a sample grid.

    ``amps``, ``centers`` and ``widths`` are (n_beats, n_kernels) arrays with
    centers and widths in seconds.  Each kernel is truncated at
    ``support`` standard deviations.
    """
    return active.render(
        int(n_samples),
        float(fs),
        np.ascontiguousarray(amps, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64),
        np.ascontiguousarray(widths, dtype=np.float64),
        float(support),
    )


def mma_twa_batch(beats, orders, factor, cap, lo, hi):
    """Max |even - odd| of bounded-update averages for each beat ordering.

    ``orders`` is an (n_orderings, n_beats) integer array of row indices into
    ``beats``; only samples ``lo:hi`` are tracked.
    """
    return active.mma_twa_batch(
        np.ascontiguousarray(beats, dtype=np.float64),
        np.ascontiguousarray(orders, dtype=np.int64),
        float(factor),
        float(cap),
        int(lo),
        int(hi),
    )
