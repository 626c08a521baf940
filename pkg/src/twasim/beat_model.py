"""Sum-of-Gaussians beat morphology and its least-squares fit.

A beat is a function of cardiac phase theta in (-pi, pi] with the R peak at
phase 0.  Each lead is the sum

    z(theta) = sum_i a_i * exp(-d_i**2 / (2 * b_i**2)),   d_i = wrap(theta - theta_i)

where ``wrap`` maps into (-pi, pi].
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from .errors import InsufficientData, InvalidArgument, InvalidTemplate

LEADS = ("X", "Y", "Z")
DEFAULT_N_KERNELS = 9
DEFAULT_GRID = 512
SEED_WIDTH = 0.05
MIN_WIDTH = 1e-4


@dataclass(frozen=True)
class GaussianKernel:
    amplitude: float
    width: float
    center: float

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidArgument(f"kernel width must be > 0, got {self.width}")
        if not -np.pi < self.center <= np.pi:
            raise InvalidArgument(f"kernel center {self.center} outside (-pi, pi]")


@dataclass(frozen=True, eq=False)
class LeadTemplate:
    """Kernels of one VCG lead, stored as parallel arrays sorted by center."""

    lead: str
    amplitudes: np.ndarray
    widths: np.ndarray
    centers: np.ndarray
    fitted: bool = False

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.float64).ravel()
        b = np.asarray(self.widths, dtype=np.float64).ravel()
        c = np.asarray(self.centers, dtype=np.float64).ravel()
        if not (a.shape == b.shape == c.shape):
            raise InvalidArgument("amplitudes, widths and centers must have equal length")
        if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)) or np.any(~np.isfinite(c)):
            raise InvalidArgument("kernel parameters must be finite")
        if np.any(b <= 0):
            raise InvalidArgument("kernel widths must be > 0")
        c = kernels.wrap_phase(c)
        order = np.argsort(c, kind="stable")
        a, b, c = a[order], b[order], c[order]
        if np.any(np.diff(c) <= 0):
            raise InvalidTemplate(f"lead {self.lead}: kernel centers must be distinct")
        if self.fitted and a.size == 0:
            raise InvalidTemplate("a fitted lead template needs at least one kernel")
        for name, arr in (("amplitudes", a), ("widths", b), ("centers", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_kernels(cls, lead, kernel_list, fitted=False):
        kernel_list = list(kernel_list)
        return cls(
            lead,
            np.array([k.amplitude for k in kernel_list], dtype=np.float64),
            np.array([k.width for k in kernel_list], dtype=np.float64),
            np.array([k.center for k in kernel_list], dtype=np.float64),
            fitted=fitted,
        )

    @property
    def kernels(self):
        return [GaussianKernel(float(a), float(b), float(c))
                for a, b, c in zip(self.amplitudes, self.widths, self.centers)]

    def __len__(self):
        return self.amplitudes.size

    def __eq__(self, other):
        if not isinstance(other, LeadTemplate):
            return NotImplemented
        return (self.lead == other.lead
                and np.array_equal(self.amplitudes, other.amplitudes)
                and np.array_equal(self.widths, other.widths)
                and np.array_equal(self.centers, other.centers))

    def with_params(self, amplitudes=None, widths=None, centers=None):
        return replace(
            self,
            amplitudes=self.amplitudes if amplitudes is None else amplitudes,
            widths=self.widths if widths is None else widths,
            centers=self.centers if centers is None else centers,
        )


@dataclass(frozen=True, eq=False)
class MorphologyTemplate:
    """Three-lead (X, Y, Z) beat morphology of one source subject."""

    leads: dict
    source_id: str = "anonymous"

    def __post_init__(self):
        leads = dict(self.leads)
        if sorted(leads) != sorted(LEADS):
            raise InvalidTemplate(f"need exactly leads {LEADS}, got {sorted(leads)}")
        for name, lt in leads.items():
            if lt.lead != name:
                raise InvalidTemplate(f"lead key {name} holds template for {lt.lead}")
        object.__setattr__(self, "leads", {k: leads[k] for k in LEADS})

    def __getitem__(self, lead):
        return self.leads[lead]

    def __eq__(self, other):
        if not isinstance(other, MorphologyTemplate):
            return NotImplemented
        return self.source_id == other.source_id and all(
            self.leads[k] == other.leads[k] for k in LEADS)

    @cached_property
    def nominal_qt(self):
        """QT (s) of the template rendered at the reference RR of 1 s."""
        from .synthesizer import REFERENCE_RR, qt_at_rr

        return float(qt_at_rr(self, REFERENCE_RR))

    def map_leads(self, fn):
        return MorphologyTemplate({k: fn(v) for k, v in self.leads.items()}, self.source_id)


@dataclass(frozen=True, eq=False)
class AverageBeat:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64).ravel()
        if s.size < 16:
            raise InvalidArgument(f"average beat needs >= 16 grid samples, got {s.size}")
        object.__setattr__(self, "samples", s)

    @property
    def phases(self):
        return phase_grid(self.samples.size)


def phase_grid(n):
    """Uniform grid over [-pi, pi) with ``n`` points."""
    return -np.pi + 2.0 * np.pi * np.arange(n) / n


def evaluate_lead(template, phases):
    phases = np.asarray(phases, dtype=np.float64)
    if not np.all(np.isfinite(phases)):
        raise InvalidArgument("phases must be finite")
    flat = phases.ravel()
    out = kernels.gaussian_sum(flat, template.amplitudes, template.widths, template.centers)
    return out.reshape(phases.shape)


def compute_average_beat(signal, r_peaks, fs, n_grid=DEFAULT_GRID):
    """Average the RR segments of ``signal`` on a common phase grid.

    Each RR interval is mapped linearly onto a full cycle with the R peak at
    phase 0: grid phases >= 0 are read after the earlier peak, negative
    phases before the later one.  Samples are taken by cubic interpolation.
    """
    signal = np.asarray(signal, dtype=np.float64)
    r = np.asarray(r_peaks)
    if r.size < 2:
        raise InsufficientData("need at least two R peaks")
    if np.any(np.diff(r) <= 0):
        raise InvalidArgument("R peaks must be strictly increasing")
    if r[0] < 0 or r[-1] >= signal.size:
        raise InvalidArgument("R peaks out of range")
    if n_grid < 16:
        raise InvalidArgument("phase grid must have at least 16 points")

    spline = CubicSpline(np.arange(signal.size), signal)
    phi = phase_grid(n_grid)
    frac = phi / (2.0 * np.pi)
    left, right = r[:-1].astype(np.float64), r[1:].astype(np.float64)
    rr = right - left
    pos = np.where(phi[None, :] >= 0,
                   left[:, None] + frac[None, :] * rr[:, None],
                   right[:, None] + frac[None, :] * rr[:, None])
    return AverageBeat(spline(pos).mean(axis=0), float(fs))


# -- fitting -------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    template: LeadTemplate
    rss: float
    rss_init: float
    rms: float
    n_iter: int
    converged: bool


def _unpack(p, n):
    return p[:n], p[n:2 * n], p[2 * n:]


def _residual(p, phi, y, n):
    a, b, c = _unpack(p, n)
    return kernels.gaussian_sum(phi, a, b, c) - y


def _jacobian(p, phi, n):
    a, b, c = _unpack(p, n)
    d = kernels.wrap_phase(phi[:, None] - c[None, :])
    e = np.exp(-d * d / (2.0 * b * b))
    return np.hstack([e, a * e * d * d / b ** 3, a * e * d / (b * b)])


def _local_extrema(y):
    prev, nxt = np.roll(y, 1), np.roll(y, -1)
    is_max = (y >= prev) & (y > nxt)
    is_min = (y <= prev) & (y < nxt)
    idx = np.flatnonzero(is_max | is_min)
    floor = 0.01 * np.max(np.abs(y)) if y.size else 0.0
    return idx[np.abs(y[idx]) > floor]


def initial_kernels(beat, n_kernels):
    """Seed kernels at the largest local extrema; top up at residual maxima."""
    y = beat.samples
    phi = beat.phases
    ext = _local_extrema(y)
    ext = ext[np.argsort(-np.abs(y[ext]), kind="stable")][:n_kernels]
    amps = list(y[ext])
    centers = list(phi[ext])
    taken = set(int(i) for i in ext)
    while len(amps) < n_kernels:
        model = kernels.gaussian_sum(phi, np.array(amps), np.full(len(amps), SEED_WIDTH),
                                     np.array(centers))
        resid = y - model
        order = np.argsort(-np.abs(resid), kind="stable")
        i = next((int(j) for j in order if int(j) not in taken), None)
        if i is None:
            break
        taken.add(i)
        amps.append(resid[i])
        centers.append(phi[i])
    return np.array(amps), np.full(len(amps), SEED_WIDTH), np.array(centers)


def fit_template(beat, n_kernels=DEFAULT_N_KERNELS, init=None, tol=1e-10, max_iter=500,
                 lead="X"):
    """Fit ``n_kernels`` Gaussians to an average beat by damped least squares.

    Levenberg-Marquardt on the Gauss-Newton normal equations with the damping
    multiplied by 10 after a rejected step and divided by 10 after an
    accepted one.  Stops when an accepted step improves the objective by less
    than ``tol`` relative, when the damping saturates, or after ``max_iter``
    iterations (``converged`` is then False).
    """
    if n_kernels < 1:
        raise InvalidArgument("n_kernels must be >= 1")
    y = beat.samples
    if y.size <= 3 * n_kernels:
        raise InvalidArgument(f"grid of {y.size} samples too short for {n_kernels} kernels")
    phi = beat.phases

    if init is None:
        a0, b0, c0 = initial_kernels(beat, n_kernels)
    else:
        init = list(init)
        if len(init) != n_kernels:
            raise InvalidArgument(f"init has {len(init)} kernels, expected {n_kernels}")
        a0 = np.array([k.amplitude for k in init])
        b0 = np.array([k.width for k in init])
        c0 = np.array([k.center for k in init])
    n = a0.size
    p = np.concatenate([a0, np.maximum(b0, MIN_WIDTH), c0])

    r = _residual(p, phi, y, n)
    f = float(r @ r)
    f_init = f
    scale = max(float(y @ y), 1e-300)
    lam = 1e-3
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        if f <= 1e-28 * scale:
            converged = True
            break
        jac = _jacobian(p, phi, n)
        g = jac.T @ r
        h = jac.T @ jac
        dg = np.diag(h).copy()
        dg = np.maximum(dg, 1e-12 * max(dg.max(), 1e-300))
        try:
            step = np.linalg.solve(h + lam * np.diag(dg), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = p + step
        trial[n:2 * n] = np.maximum(trial[n:2 * n], MIN_WIDTH)
        trial[2 * n:] = kernels.wrap_phase(trial[2 * n:])
        r_new = _residual(trial, phi, y, n)
        f_new = float(r_new @ r_new)
        if np.isfinite(f_new) and f_new < f:
            rel = (f - f_new) / f
            p, r, f = trial, r_new, f_new
            lam = max(lam / 10.0, 1e-15)
            if rel < tol:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e16:
                converged = True
                break

    a, b, c = _unpack(p, n)
    template = _dedupe(lead, a, b, c)
    return FitResult(template, f, f_init, float(np.sqrt(f / y.size)), it, converged)


def _dedupe(lead, a, b, c):
    c = kernels.wrap_phase(c)
    order = np.argsort(c, kind="stable")
    a, b, c = a[order], b[order], c[order]
    # coincident centers would break the canonical ordering; nudge by one ulp
    for i in range(1, c.size):
        if c[i] <= c[i - 1]:
            c[i] = np.nextafter(c[i - 1], np.inf)
    return LeadTemplate(lead, a, b, c, fitted=True)


def render_template(template, n_grid=DEFAULT_GRID, fs=1000.0):
    """Render all three leads of a morphology template as average beats."""
    phi = phase_grid(n_grid)
    return {k: AverageBeat(evaluate_lead(template[k], phi), fs) for k in LEADS}
