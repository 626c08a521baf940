"""Built-in VCG morphology library.

Used when no fitted templates are supplied.  A hand-set 9-kernel
normal-sinus morphology is varied deterministically into 47 source
templates; each source is kept only if its QT at 60 bpm lies in
[370, 388] ms, so that the QTc of the unperturbed source stays inside the
normal band across 60-110 bpm.
"""
from functools import lru_cache

import numpy as np

from .beat_model import LEADS, LeadTemplate, MorphologyTemplate

N_SOURCES = 47
LIBRARY_SEED = 20211
QT_WINDOW = (0.370, 0.388)

# name, time after R (s), sd (s), amplitude X, Y, Z (mV); timings at RR = 1 s
BASE_KERNELS = (
    ("P1", -0.215, 0.022, 0.06, 0.08, -0.02),
    ("P2", -0.180, 0.020, 0.05, 0.06, -0.03),
    ("Q", -0.028, 0.008, -0.10, -0.05, 0.10),
    ("R", 0.000, 0.010, 1.10, 0.60, -0.45),
    ("R2", 0.012, 0.018, 0.20, 0.15, -0.25),
    ("S", 0.032, 0.010, -0.25, -0.20, 0.30),
    ("ST", 0.110, 0.045, 0.03, 0.02, -0.02),
    ("T1", 0.210, 0.040, 0.25, 0.15, -0.10),
    ("T2", 0.250, 0.025, 0.12, 0.07, -0.05),
)
_REPOLARISATION = np.array([name in ("ST", "T1", "T2") for name, *_ in BASE_KERNELS])


def base_template():
    t = np.array([k[1] for k in BASE_KERNELS])
    sd = np.array([k[2] for k in BASE_KERNELS])
    amps = np.array([k[3:] for k in BASE_KERNELS])
    leads = {lead: LeadTemplate(lead, amps[:, i], 2 * np.pi * sd, 2 * np.pi * t)
             for i, lead in enumerate(LEADS)}
    return MorphologyTemplate(leads, "base")


def _variant(base, rng, source_id):
    n = len(base["X"])
    shift = rng.uniform(-0.01, 0.01, n) + _REPOLARISATION * rng.uniform(-0.08, 0.08)
    leads = {}
    for lead in LEADS:
        lt = base[lead]
        leads[lead] = LeadTemplate(
            lead,
            lt.amplitudes * rng.uniform(0.75, 1.25, n),
            lt.widths * rng.uniform(0.9, 1.1, n),
            lt.centers + shift,
        )
    return MorphologyTemplate(leads, source_id)


@lru_cache(maxsize=1)
def builtin_templates():
    """The 47 library templates, identical on every call and platform."""
    rng = np.random.default_rng(LIBRARY_SEED)
    base = base_template()
    out = []
    while len(out) < N_SOURCES:
        cand = _variant(base, rng, f"syn{len(out) + 1:02d}")
        if QT_WINDOW[0] <= cand.nominal_qt <= QT_WINDOW[1]:
            out.append(cand)
    return tuple(out)
