"""RR tachograms with a two-lobe (LF / respiratory HF) spectrum."""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

RR_MIN = 0.2
RR_MAX = 3.0
LF_CENTER = 0.1
LOBE_WIDTH = 0.01


@dataclass(frozen=True)
class RhythmConfig:
    mean_hr: float
    br: float = 15.0
    hr_std: float = 1.0
    lf_hf_ratio: float = 0.5
    n_beats: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 20.0 <= self.mean_hr <= 250.0:
            raise InvalidArgument(f"mean_hr {self.mean_hr} outside [20, 250] bpm")
        if not self.br > 0:
            raise InvalidArgument("br must be > 0")
        if self.hr_std < 0:
            raise InvalidArgument("hr_std must be >= 0")
        if not self.lf_hf_ratio > 0:
            raise InvalidArgument("lf_hf_ratio must be > 0")
        if self.n_beats < 0:
            raise InvalidArgument("n_beats must be >= 0")


@dataclass(frozen=True, eq=False)
class Tachogram:
    rr: np.ndarray
    n_clamped: int = 0

    def __len__(self):
        return self.rr.size

    @property
    def beat_times(self):
        """R-peak times (s) with the first peak at t = 0."""
        return np.concatenate([[0.0], np.cumsum(self.rr[:-1])]) if self.rr.size else self.rr


def _lobe(f, center):
    return np.exp(-0.5 * ((f - center) / LOBE_WIDTH) ** 2) / (LOBE_WIDTH * np.sqrt(2 * np.pi))


def generate_tachogram(config):
    """RR intervals whose instantaneous HR has the configured mean and spread.

    The HR fluctuation is synthesised in the beat-index domain (one sample per
    beat at the mean rate) from a spectrum with an LF lobe at 0.1 Hz and an HF
    lobe at the breathing frequency, random phases, then rescaled to exactly
    zero mean and ``hr_std`` standard deviation.
    """
    n = config.n_beats
    if n == 0:
        return Tachogram(np.empty(0))
    if config.hr_std == 0 or n == 1:
        return Tachogram(np.full(n, 60.0 / config.mean_hr))

    rng = np.random.default_rng(config.seed)
    n_fft = max(64, 1 << int(np.ceil(np.log2(n))))
    f = np.fft.rfftfreq(n_fft, d=60.0 / config.mean_hr)
    power = config.lf_hf_ratio * _lobe(f, LF_CENTER) + _lobe(f, config.br / 60.0)
    spectrum = np.sqrt(power) * np.exp(2j * np.pi * rng.random(f.size))
    spectrum[0] = 0.0
    z = np.fft.irfft(spectrum, n_fft)[:n]
    z = z - z.mean()
    sd = z.std()
    if sd > 0:
        z = z / sd
    hr = np.maximum(config.mean_hr + config.hr_std * z, 1.0)
    rr = 60.0 / hr
    clamped = int(np.count_nonzero((rr < RR_MIN) | (rr > RR_MAX)))
    return Tachogram(np.clip(rr, RR_MIN, RR_MAX), clamped)
