"""Grid-driven dataset generation and the per-record analysis pipeline."""
from __future__ import annotations

import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import io
from .errors import InsufficientData, InvalidArgument, InvalidConfig
from .library import builtin_templates
from .noise import mix, noise_pair, resample_noise
from .preprocess import detect_qrs_robust, lowpass, remove_baseline
from .rhythm import RhythmConfig
from .synthesizer import DEFAULT_HR_GRID, LEADS_12, SynthesisConfig, dower_transform, synthesize_vcg
from .twa import bin_features, build_beat_matrix, sliding_twa

WORKERS_ENV = "TWASIM_WORKERS"
N_FOLDS = 10
ANALYSIS_CUTOFF_HZ = 40.0


def default_workers():
    try:
        return max(int(os.environ.get(WORKERS_ENV, "1")), 1)
    except ValueError:
        return 1


@dataclass(frozen=True)
class DatasetConfig:
    count: int = 200
    seed: int = 0
    hr_grid: tuple = DEFAULT_HR_GRID
    br_grid: tuple = tuple(range(12, 21))
    twa_grid: tuple = tuple(range(20, 101))
    snr_range: tuple | None = (15.0, 30.0)
    duration_s: float = 70.0
    fs: float = 1000.0
    perturbation_frac: float = 0.045
    templates_dir: str | None = None
    noise_dir: str | None = None
    hr_std: float = 1.0
    all_leads: bool = False

    def __post_init__(self):
        if self.count < N_FOLDS:
            raise InvalidConfig(f"count must be >= {N_FOLDS} to stratify into {N_FOLDS} folds")
        if self.count % 2:
            raise InvalidConfig("count must be even so exactly half the records carry TWA")
        for name in ("hr_grid", "br_grid", "twa_grid"):
            if len(getattr(self, name)) == 0:
                raise InvalidConfig(f"{name} is empty")
        if any(not 20 <= t <= 100 for t in self.twa_grid):
            raise InvalidConfig("twa_grid values must lie in [20, 100] uV")
        if self.snr_range is not None:
            lo, hi = self.snr_range
            if not 15.0 <= lo <= hi <= 30.0:
                raise InvalidConfig("snr_range must lie within [15, 30] dB")
        if not self.duration_s > 0 or not self.fs > 0:
            raise InvalidConfig("duration_s and fs must be > 0")


def _grid(value):
    if isinstance(value, dict):
        return tuple(np.arange(value["start"], value["stop"] + value.get("step", 1) / 2,
                               value.get("step", 1)).tolist())
    return tuple(value)


def load_config(path, **overrides):
    try:
        raw = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    raw = raw.get("dataset", raw)
    known = DatasetConfig.__dataclass_fields__
    unknown = set(raw) - set(known)
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    kw = dict(raw)
    for name in ("hr_grid", "br_grid", "twa_grid"):
        if name in kw:
            kw[name] = _grid(kw[name])
    if "snr_range" in kw:
        kw["snr_range"] = tuple(kw["snr_range"]) if kw["snr_range"] else None
    if kw.get("templates_dir"):
        kw["templates_dir"] = str((Path(path).parent / kw["templates_dir"]).resolve())
    if kw.get("noise_dir"):
        kw["noise_dir"] = str((Path(path).parent / kw["noise_dir"]).resolve())
    kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return DatasetConfig(**kw)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None


def resolve_templates(config):
    if config.templates_dir in (None, "", "builtin"):
        return builtin_templates()
    return io.load_templates(config.templates_dir)


# -- planning ------------------------------------------------------------------


def plan(config, templates):
    """Manifest entries: labels, stratified folds and per-record parameters.

    Exactly half the records carry TWA.  Positives fill folds round-robin in
    index order and negatives in reverse, so every fold holds the same number
    of records.  Parameters come from a generator seeded by (seed, index).
    """
    n = config.count
    master = np.random.default_rng(np.random.SeedSequence([config.seed, n]))
    positive = np.zeros(n, dtype=bool)
    positive[master.permutation(n)[: n // 2]] = True
    folds = np.empty(n, dtype=np.int64)
    pos_idx, neg_idx = np.flatnonzero(positive), np.flatnonzero(~positive)
    folds[pos_idx] = np.arange(pos_idx.size) % N_FOLDS
    folds[neg_idx] = N_FOLDS - 1 - np.arange(neg_idx.size) % N_FOLDS

    entries = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
        src = templates[int(rng.integers(len(templates)))].source_id
        hr = float(config.hr_grid[int(rng.integers(len(config.hr_grid)))])
        br = float(config.br_grid[int(rng.integers(len(config.br_grid)))])
        twa = float(config.twa_grid[int(rng.integers(len(config.twa_grid)))]) if positive[i] else 0.0
        snr = None if config.snr_range is None else float(rng.uniform(*config.snr_range))
        rid = f"rec{i:06d}"
        entries.append({
            "record_id": rid, "file": f"{rid}.json", "label": bool(positive[i]),
            "fold": int(folds[i]), "hr": hr, "br": br, "twa": twa, "snr": snr,
            "seed": int(rng.integers(0, 2 ** 63 - 1)), "source_id": src,
        })
    return entries


# -- generation ----------------------------------------------------------------

_STATE = {}


def _init_worker(config, templates):
    _STATE["config"] = config
    _STATE["templates"] = {t.source_id: t for t in templates}


def _noise(config):
    key = ("noise", config.noise_dir, config.fs)
    if key not in _STATE:
        if config.noise_dir:
            ma = resample_noise(io.find_noise(config.noise_dir, "MA"), config.fs).detrend()
            em = resample_noise(io.find_noise(config.noise_dir, "EM"), config.fs).detrend()
        else:
            ma, em = noise_pair(config.fs)
        _STATE[key] = (ma, em)
    return _STATE[key]


def build_record(entry, config=None, templates=None):
    """Synthesise the ECG record described by a manifest entry."""
    config = config or _STATE["config"]
    templates = templates or _STATE["templates"]
    if not isinstance(templates, dict):
        templates = {t.source_id: t for t in templates}
    syn = SynthesisConfig(
        template=templates[entry["source_id"]],
        rhythm=RhythmConfig(entry["hr"], entry["br"], config.hr_std),
        twa_amplitude=entry["twa"], duration=config.duration_s, fs=config.fs,
        perturbation_frac=config.perturbation_frac, snr_db=entry["snr"], seed=entry["seed"],
        hr_grid=tuple(config.hr_grid),
    )
    ecg = dower_transform(synthesize_vcg(syn), LEADS_12 if config.all_leads else ("I",))
    if entry["snr"] is not None:
        ma, em = _noise(config)
        rng = np.random.default_rng(np.random.SeedSequence([entry["seed"], 1]))
        noisy = {k: mix(v, ma, em, entry["snr"], rng, config.fs) for k, v in ecg.leads.items()}
        ecg = type(ecg)(ecg.fs, noisy, ecg.label, ecg.quantization_step, ecg.metadata)
    ecg.metadata["fold"] = str(entry["fold"])
    return ecg


def _generate_one(args):
    entry, out_dir = args
    rec = build_record(entry)
    io.write_record(out_dir, entry["record_id"], rec)
    return entry["record_id"]


def _analyze_entry(entry):
    rec = build_record(entry)
    return analyze_record(rec, seed=entry["seed"])


def _pool_map(fn, items, workers, config, templates):
    if workers <= 1:
        _init_worker(config, templates)
        return [fn(x) for x in items]
    chunk = max(len(items) // (workers * 4), 1)
    with ProcessPoolExecutor(workers, initializer=_init_worker,
                             initargs=(config, templates)) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def generate(config, out_dir, workers=None):
    """Write every record plus ``manifest.json``; returns the manifest path."""
    workers = workers or default_workers()
    templates = resolve_templates(config)
    entries = plan(config, templates)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _pool_map(_generate_one, [(e, str(out_dir)) for e in entries], workers, config, templates)
    return io.write_manifest(out_dir, entries, config.seed)


def generate_stream(config, workers=None):
    """Records are synthesised and analysed in memory; nothing is written.
    Returns (entries, features)."""
    workers = workers or default_workers()
    templates = resolve_templates(config)
    entries = plan(config, templates)
    return entries, _pool_map(_analyze_entry, entries, workers, config, templates)


# -- analysis ------------------------------------------------------------------


@dataclass
class RecordFeatures:
    bins: np.ndarray
    n_windows: int = 0
    n_significant: int = 0
    n_dropped: int = 0
    shortage: bool = False
    error: str = ""
    details: list = field(default_factory=list)


def analyze_signal(x, fs, seed=0, n_surrogates=99):
    """Baseline removal, 40 Hz low-pass, QRS detection, sliding MMA with the
    surrogate test and HR binning of the significant windows."""
    clean = lowpass(remove_baseline(x, fs), fs, ANALYSIS_CUTOFF_HZ)
    peaks = detect_qrs_robust(clean, fs)
    if peaks.size < 3:
        raise InsufficientData("fewer than three beats detected")
    beats = build_beat_matrix(clean, peaks, fs)
    res = sliding_twa(beats, n_surrogates=n_surrogates, rng=np.random.default_rng([seed, 2]))
    fv = bin_features(res.measurements)
    return RecordFeatures(fv.bins, len(res.measurements), fv.n_significant, fv.n_dropped,
                          res.shortage, details=res.measurements)


def analyze_record(record, lead="I", seed=0, n_surrogates=99):
    if lead not in record.leads:
        raise InvalidArgument(f"record has no lead {lead}")
    try:
        return analyze_signal(record[lead], record.fs, seed, n_surrogates)
    except (InsufficientData, InvalidArgument) as exc:
        return RecordFeatures(np.zeros(6), shortage=True, error=str(exc))


def _analyze_file(path):
    rid, rec = io.read_record(path)
    seed = int(rec.metadata.get("seed", 0) or 0)
    return rid, rec, analyze_record(rec, seed=seed)


def analyze_files(paths, workers=None):
    workers = workers or default_workers()
    paths = [str(p) for p in paths]
    if workers <= 1:
        return [_analyze_file(p) for p in paths]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_analyze_file, paths, chunksize=max(len(paths) // (workers * 4), 1)))
