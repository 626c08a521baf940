"""Artificial VCG / ECG records from a morphology template.

Rendering happens in the time domain.  A beat whose preceding RR interval is
``rr`` places every kernel at time ``theta * scale(rr)`` after its R peak with
standard deviation ``b * scale(rr)``, where

    scale(rr) = REFERENCE_RR**(1 - QT_RR_EXPONENT) * rr**QT_RR_EXPONENT / (2 pi)

so repolarisation timing follows QT ~ RR**(1/3) rather than stretching
linearly with the cycle.  At the 1 s reference RR the phase-to-time map is
the plain linear one.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .beat_model import LEADS, LeadTemplate, MorphologyTemplate, evaluate_lead
from .errors import GenerationFailed, InvalidArgument, InvalidConfig, InvalidTemplate
from .rhythm import RhythmConfig, generate_tachogram

REFERENCE_RR = 1.0
QT_RR_EXPONENT = 1.0 / 3.0
QTC_RANGE = (0.360, 0.440)
DEFAULT_HR_GRID = tuple(range(60, 111, 2))
T_REGION = (0.15 * np.pi, 0.85 * np.pi)
T_LABEL_FRACTION = 0.25
Q_MIN_FRACTION = 0.05
QRS_HALF_WIDTH = 0.15 * np.pi
QUANTIZATION_STEP = 1.32e-6
TWA_RANGE = (20.0, 100.0)

# rows: lead; columns: X, Y, Z
DOWER = {
    "I": (0.632, -0.235, 0.059),
    "II": (0.235, 1.066, -0.132),
    "V1": (-0.515, 0.157, -0.917),
    "V2": (0.044, 0.164, -1.387),
    "V3": (0.882, 0.098, -1.277),
    "V4": (1.213, 0.127, -0.601),
    "V5": (1.125, 0.127, -0.086),
    "V6": (0.831, 0.076, 0.230),
}
LEADS_12 = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")


def time_scale(rr):
    """Seconds per radian for a beat preceded by an RR interval of ``rr`` s."""
    return REFERENCE_RR ** (1.0 - QT_RR_EXPONENT) * np.power(rr, QT_RR_EXPONENT) / (2.0 * np.pi)


# -- wave identification and QT ------------------------------------------------


def lead_kernels(template, lead="I"):
    """Kernel arrays (a, b, c) of one lead.

    For a Dower lead the kernels of X, Y and Z are pooled with their
    amplitudes weighted by the lead's coefficients.
    """
    if isinstance(template, LeadTemplate):
        return template.amplitudes, template.widths, template.centers
    if lead in LEADS:
        lt = template[lead]
        return lt.amplitudes, lt.widths, lt.centers
    if lead not in DOWER:
        raise InvalidArgument(f"no kernel-level definition for lead {lead}")
    coef = DOWER[lead]
    a = np.concatenate([w * template[k].amplitudes for w, k in zip(coef, LEADS)])
    b = np.concatenate([template[k].widths for k in LEADS])
    c = np.concatenate([template[k].centers for k in LEADS])
    return a, b, c


def t_region_mask(centers):
    return (centers > T_REGION[0]) & (centers < T_REGION[1])


def _wave_marks(a, b, c):
    region = t_region_mask(c) & (a != 0)
    if not region.any():
        raise InvalidTemplate("no T-wave kernels (centers in (0.15pi, 0.85pi))")
    amax = np.abs(a[region]).max()
    t_kern = region & (np.abs(a) >= T_LABEL_FRACTION * amax)
    t_offset = float(np.max(c[t_kern] + 3.0 * b[t_kern]))

    qrs = np.abs(c) < QRS_HALF_WIDTH
    if not qrs.any():
        raise InvalidTemplate("no QRS kernels near phase 0")
    cand = np.flatnonzero(qrs)
    r = cand[np.argmax(a[cand])]
    before = np.flatnonzero((c < c[r]) & (c > c[r] - QRS_HALF_WIDTH) & (a < 0)
                            & (np.abs(a) >= Q_MIN_FRACTION * abs(a[r])))
    q = before[np.argmax(c[before])] if before.size else r
    q_onset = float(c[q] - 3.0 * b[q])
    return q_onset, t_offset


class QtSpan(NamedTuple):
    fraction: float
    qt: float | None


def measure_qt(template, rr=None, lead="I"):
    """QT as a fraction of the cycle and, when ``rr`` is given, in seconds.

    Q onset is ``theta_Q - 3 b_Q`` for the nearest sizeable negative kernel
    preceding the R kernel (the R kernel itself when there is none); T offset
    is the latest ``theta_T + 3 b_T`` among T-region kernels of at least a
    quarter of the largest T-region amplitude.  The phase span maps to time
    linearly through ``rr``.
    """
    q_on, t_off = _wave_marks(*lead_kernels(template, lead))
    frac = (t_off - q_on) / (2.0 * np.pi)
    return QtSpan(frac, None if rr is None else frac * rr)


def qt_at_rr(template, rr, lead="I"):
    """QT (s) of the template rendered after an RR interval of ``rr`` s."""
    return measure_qt(template, lead=lead).fraction * 2.0 * np.pi * time_scale(rr)


def qtc_bazett(qt, rr):
    if not np.all(np.asarray(rr) > 0):
        raise InvalidArgument(f"rr must be > 0, got {rr}")
    return qt / np.sqrt(rr)


def validate_qtc(template, hr_grid=DEFAULT_HR_GRID, lead="I", qtc_range=QTC_RANGE):
    hr = np.asarray(hr_grid, dtype=np.float64)
    if hr.size == 0:
        raise InvalidArgument("hr_grid must be nonempty")
    rr = 60.0 / hr
    qtc = qtc_bazett(qt_at_rr(template, rr, lead), rr)
    return bool(np.all((qtc >= qtc_range[0]) & (qtc <= qtc_range[1])))


# -- morphology edits ----------------------------------------------------------


def perturb_template(template, max_frac, rng):
    """Scale every amplitude and width by an independent Uniform[1-f, 1+f] draw."""
    if not 0 <= max_frac < 1:
        raise InvalidArgument(f"max_frac must be in [0, 1), got {max_frac}")

    def one(lt):
        n = len(lt)
        ka = rng.uniform(1.0 - max_frac, 1.0 + max_frac, n)
        kb = rng.uniform(1.0 - max_frac, 1.0 + max_frac, n)
        return lt.with_params(amplitudes=lt.amplitudes * ka, widths=lt.widths * kb)

    return template.map_leads(one)


def t_wave_lead_i(template, phases):
    """Lead-I rendering of only the T-region kernels."""
    out = np.zeros_like(phases)
    for w, k in zip(DOWER["I"], LEADS):
        lt = template[k]
        m = t_region_mask(lt.centers)
        if m.any():
            out += w * kernels.gaussian_sum(phases, lt.amplitudes[m], lt.widths[m], lt.centers[m])
    return out


_DENSE = -np.pi + 2.0 * np.pi * np.arange(8192) / 8192


def apply_twa(template, twa_amplitude):
    """Even/odd templates whose lead-I T waves differ by ``twa_amplitude`` uV at most.

    T-region kernels of all three VCG leads are scaled by (1 + d) and
    (1 - d); d is chosen so that the peak absolute lead-I difference of the
    rendered T waves equals the requested amplitude.
    """
    if twa_amplitude < 0:
        raise InvalidArgument("twa_amplitude must be >= 0")
    if not any(t_region_mask(template[k].centers).any() for k in LEADS):
        raise InvalidTemplate("template has no T-wave kernels")
    if twa_amplitude == 0:
        return template, template
    peak = np.abs(t_wave_lead_i(template, _DENSE)).max()
    if peak == 0:
        raise InvalidTemplate("T wave vanishes on lead I")
    delta = (twa_amplitude * 1e-3) / (2.0 * peak)

    def scaled(sign):
        def one(lt):
            f = np.where(t_region_mask(lt.centers), 1.0 + sign * delta, 1.0)
            return lt.with_params(amplitudes=lt.amplitudes * f)
        return template.map_leads(one)

    return scaled(+1.0), scaled(-1.0)


# -- records -------------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisConfig:
    template: MorphologyTemplate
    rhythm: RhythmConfig
    twa_amplitude: float = 0.0
    duration: float = 70.0
    fs: float = 1000.0
    perturbation_frac: float = 0.045
    snr_db: float | None = None
    seed: int = 0
    hr_grid: tuple = DEFAULT_HR_GRID
    max_retries: int = 100

    def __post_init__(self):
        twa = self.twa_amplitude
        if not (twa == 0 or TWA_RANGE[0] <= twa <= TWA_RANGE[1]):
            raise InvalidConfig(f"twa_amplitude must be 0 or in [20, 100] uV, got {twa}")
        if not 0 <= self.perturbation_frac <= 0.10:
            raise InvalidConfig("perturbation_frac must be in [0, 0.10]")
        if self.snr_db is not None and not 15.0 <= self.snr_db <= 30.0:
            raise InvalidConfig("snr_db must be in [15, 30] dB or absent")
        if not self.duration > 0 or not self.fs > 0:
            raise InvalidConfig("duration and fs must be > 0")
        if self.max_retries < 1:
            raise InvalidConfig("max_retries must be >= 1")

    @property
    def label(self):
        return self.twa_amplitude >= TWA_RANGE[0]

    def digest(self):
        h = hashlib.sha256()
        h.update(self.template.source_id.encode())
        for k in LEADS:
            lt = self.template[k]
            for arr in (lt.amplitudes, lt.widths, lt.centers):
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fields = {
            "rhythm": [self.rhythm.mean_hr, self.rhythm.br, self.rhythm.hr_std,
                       self.rhythm.lf_hf_ratio],
            "twa": self.twa_amplitude, "duration": self.duration, "fs": self.fs,
            "perturbation_frac": self.perturbation_frac, "snr_db": self.snr_db,
            "seed": self.seed, "hr_grid": list(self.hr_grid),
        }
        h.update(json.dumps(fields, sort_keys=True).encode())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class VcgRecord:
    fs: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    beat_onsets: np.ndarray
    label: bool
    config_digest: str = ""
    metadata: dict = field(default_factory=dict)
    rr: np.ndarray | None = None

    def __post_init__(self):
        if not (self.x.shape == self.y.shape == self.z.shape):
            raise InvalidArgument("VCG channels must have equal length")
        if np.any(np.diff(self.beat_onsets) <= 0):
            raise InvalidArgument("beat onsets must be strictly increasing")

    def channel(self, lead):
        return {"X": self.x, "Y": self.y, "Z": self.z}[lead]


@dataclass(frozen=True, eq=False)
class EcgRecord:
    fs: float
    leads: dict
    label: bool
    quantization_step: float = QUANTIZATION_STEP
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.fs > 0:
            raise InvalidArgument("fs must be > 0")
        lengths = {np.asarray(v).shape for v in self.leads.values()}
        if len(lengths) > 1:
            raise InvalidArgument("all ECG channels must have equal length")

    def __getitem__(self, lead):
        return self.leads[lead]

    @property
    def n_samples(self):
        return next(iter(self.leads.values())).size if self.leads else 0


def draw_template(config, rng):
    """Perturbed template that passes the QTc gate, by rejection sampling."""
    for _ in range(config.max_retries):
        cand = perturb_template(config.template, config.perturbation_frac, rng)
        if validate_qtc(cand, config.hr_grid):
            return cand
    raise GenerationFailed(
        f"no QTc-valid perturbation of {config.template.source_id} in "
        f"{config.max_retries} draws", config.max_retries)


def synthesize_vcg(config):
    rng = np.random.default_rng(config.seed)
    template = draw_template(config, rng)
    even, odd = apply_twa(template, config.twa_amplitude)

    n_samples = int(round(config.duration * config.fs))
    mean_rr = 60.0 / config.rhythm.mean_hr
    n_beats = int(np.ceil(config.duration / mean_rr * 1.25)) + 4
    rhythm = RhythmConfig(config.rhythm.mean_hr, config.rhythm.br, config.rhythm.hr_std,
                          config.rhythm.lf_hf_ratio, n_beats,
                          int(rng.integers(0, 2 ** 63 - 1)))
    rr = generate_tachogram(rhythm).rr
    r_times = 0.5 * rr[0] + np.concatenate([[0.0], np.cumsum(rr[:-1])])
    keep = r_times < config.duration + 1.0
    r_times, rr = r_times[keep], rr[keep]
    rr_prev = np.concatenate([[rr[0]], rr[:-1]])
    scale = time_scale(rr_prev)[:, None]
    parity = (np.arange(r_times.size) % 2 == 0)[:, None]

    channels = {}
    for k in LEADS:
        ev, od = even[k], odd[k]
        amps = np.where(parity, ev.amplitudes[None, :], od.amplitudes[None, :])
        centers = r_times[:, None] + ev.centers[None, :] * scale
        widths = ev.widths[None, :] * scale
        channels[k] = kernels.render(n_samples, config.fs, amps, centers, widths)

    inside = r_times < n_samples / config.fs
    onsets = np.round(r_times[inside] * config.fs).astype(np.int64)
    meta = {
        "hr": f"{config.rhythm.mean_hr:g}",
        "br": f"{config.rhythm.br:g}",
        "twa": f"{config.twa_amplitude:g}",
        "snr": "" if config.snr_db is None else f"{config.snr_db:.6g}",
        "seed": str(config.seed),
        "source_id": config.template.source_id,
    }
    return VcgRecord(config.fs, channels["X"], channels["Y"], channels["Z"], onsets,
                     config.label, config.digest(), meta, rr[inside])


def dower_transform(vcg, leads=LEADS_12):
    """12-lead (or subset) ECG from a VCG by the fixed Dower matrix."""
    if not (vcg.x.shape == vcg.y.shape == vcg.z.shape):
        raise InvalidArgument("VCG channels must have equal length")
    base = {}

    def direct(name):
        if name not in base:
            cx, cy, cz = DOWER[name]
            base[name] = cx * vcg.x + cy * vcg.y + cz * vcg.z
        return base[name]

    out = {}
    for name in leads:
        if name in DOWER:
            out[name] = direct(name)
        elif name == "III":
            out[name] = direct("II") - direct("I")
        elif name == "aVR":
            out[name] = -(direct("I") + direct("II")) / 2.0
        elif name == "aVL":
            out[name] = direct("I") - direct("II") / 2.0
        elif name == "aVF":
            out[name] = direct("II") - direct("I") / 2.0
        else:
            raise InvalidArgument(f"unknown lead {name}")
    return EcgRecord(vcg.fs, out, vcg.label, metadata=dict(vcg.metadata))


def render_lead_i(template, phases):
    """Lead-I beat of a template on a phase grid (no HR adaptation)."""
    return sum(w * evaluate_lead(template[k], phases) for w, k in zip(DOWER["I"], LEADS))
