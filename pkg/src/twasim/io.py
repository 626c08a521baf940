"""File formats: beats, templates, noise, records, manifests and result tables."""
from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .beat_model import LEADS, AverageBeat, LeadTemplate, MorphologyTemplate
from .errors import InvalidArgument, InvalidTemplate
from .noise import NoiseRecord
from .synthesizer import EcgRecord

FORMAT_VERSION = 1
FEATURE_COLUMNS = ("bin_30_60", "bin_60_70", "bin_70_80", "bin_80_90", "bin_90_100", "bin_100_110")
METRIC_COLUMNS = ("model", "AUC", "Acc", "F1", "BAcc", "sensitivity", "specificity")

_KV = re.compile(r"(\w+)=(\S+)")


def _header(lines):
    """key=value pairs from leading header lines (optionally '#'-prefixed)."""
    meta = {}
    for line in lines:
        if "=" not in line:
            break
        meta.update(_KV.findall(line))
    return meta


def _body(lines):
    return [ln for ln in lines if ln.strip() and "=" not in ln and not ln.startswith("#")]


# -- beats ---------------------------------------------------------------------


def read_beat(path):
    """Average beat of one lead: a ``fs=<Hz>`` header line (optionally also
    ``lead=`` and ``source_id=``), then one sample in mV per line.

    Returns (source_id, lead, AverageBeat).  The lead defaults to a trailing
    ``_X``/``_Y``/``_Z`` in the file stem, else X.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    meta = _header(lines)
    if "fs" not in meta:
        raise InvalidArgument(f"{path}: missing fs=<Hz> header")
    try:
        fs = float(meta["fs"])
        x = np.array([float(v) for v in _body(lines)])
    except ValueError as exc:
        raise InvalidArgument(f"{path}: {exc}") from None
    if not fs > 0 or not np.all(np.isfinite(x)):
        raise InvalidArgument(f"{path}: bad fs or non-finite samples")
    stem, _, suffix = path.stem.rpartition("_")
    lead = meta.get("lead") or (suffix if stem and suffix in LEADS else "X")
    if lead not in LEADS:
        raise InvalidArgument(f"{path}: unknown lead {lead}")
    source = meta.get("source_id") or (stem if stem and suffix in LEADS else path.stem)
    return source, lead, AverageBeat(x, fs)


def write_beat(path, beat, lead="X", source_id=None):
    with open(path, "w") as fh:
        fh.write(f"fs={beat.fs:g} lead={lead}" + (f" source_id={source_id}" if source_id else "") + "\n")
        for v in beat.samples:
            fh.write(f"{float(v)!r}\n")


# -- templates -----------------------------------------------------------------


def write_lead_template(path, template, source_id):
    with open(path, "w") as fh:
        fh.write(f"# source_id={source_id} lead={template.lead}\n")
        fh.write("lead,amplitude,width,center\n")
        for a, b, c in zip(template.amplitudes, template.widths, template.centers):
            fh.write(f"{template.lead},{float(a)!r},{float(b)!r},{float(c)!r}\n")


def read_lead_template(path):
    path = Path(path)
    lines = path.read_text().splitlines()
    meta = _header(lines)
    rows = list(csv.DictReader(ln for ln in lines if ln.strip() and not ln.startswith("#")
                               and "=" not in ln))
    if not rows:
        raise InvalidTemplate(f"{path}: no kernels")
    leads = {r["lead"] for r in rows}
    if len(leads) != 1:
        raise InvalidTemplate(f"{path}: one lead per file expected")
    lead = leads.pop()
    try:
        arr = {k: np.array([float(r[k]) for r in rows]) for k in ("amplitude", "width", "center")}
    except (KeyError, ValueError) as exc:
        raise InvalidTemplate(f"{path}: {exc}") from None
    t = LeadTemplate(lead, arr["amplitude"], arr["width"], arr["center"], fitted=True)
    return meta.get("source_id", path.stem.rsplit("_", 1)[0]), t


def write_template(out_dir, template):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in LEADS:
        p = out_dir / f"{template.source_id}_{k}.csv"
        write_lead_template(p, template[k], template.source_id)
        paths.append(p)
    return paths


def load_templates(directory):
    """All complete X/Y/Z templates in ``directory``, sorted by source id."""
    groups = defaultdict(dict)
    for p in sorted(Path(directory).glob("*.csv")):
        source, lt = read_lead_template(p)
        groups[source][lt.lead] = lt
    out = [MorphologyTemplate(leads, source) for source, leads in sorted(groups.items())
           if set(leads) == set(LEADS)]
    if not out:
        raise InvalidTemplate(f"no complete X/Y/Z templates in {directory}")
    return out


# -- noise ---------------------------------------------------------------------


def _read_wfdb(hea):
    """First channel of a WFDB record (formats 16 and 212), in physical units."""
    lines = [ln for ln in Path(hea).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    head = lines[0].split()
    nsig = int(head[1])
    fs = float(head[2].split("/")[0])
    sig = lines[1].split()
    fname, fmt = sig[0], sig[1].split("x")[0].split(":")[0]
    gain_s = sig[2].split("/")[0] if len(sig) > 2 else "200"
    gain = float(gain_s.split("(")[0]) or 200.0
    baseline = float(gain_s.split("(")[1].rstrip(")")) if "(" in gain_s else 0.0
    raw = np.fromfile(Path(hea).with_name(fname), dtype=np.uint8)
    if fmt == "16":
        vals = raw[: raw.size // 2 * 2].view("<i2").astype(np.int64)
    elif fmt == "212":
        trip = raw[: raw.size // 3 * 3].reshape(-1, 3).astype(np.int64)
        a = trip[:, 0] | ((trip[:, 1] & 0x0F) << 8)
        b = trip[:, 2] | ((trip[:, 1] & 0xF0) << 4)
        vals = np.column_stack([a, b]).ravel()
        vals = np.where(vals > 2047, vals - 4096, vals)
    else:
        raise InvalidArgument(f"{hea}: unsupported WFDB format {fmt}")
    vals = vals[: vals.size // nsig * nsig].reshape(-1, nsig)[:, 0]
    return fs, (vals - baseline) / gain


def read_noise(path, kind):
    """Noise from a WFDB header (``.hea``) or a text file with ``# fs=`` and
    one sample per line."""
    path = Path(path)
    if path.suffix == ".hea":
        fs, x = _read_wfdb(path)
    else:
        lines = path.read_text().splitlines()
        fs = float(_header(lines).get("fs", 360.0))
        x = np.array([float(v) for v in _body(lines)])
    return NoiseRecord(kind, fs, x)


def find_noise(directory, kind):
    d = Path(directory)
    for name in (kind.lower(), kind):
        for suffix in (".hea", ".txt", ".csv"):
            if (d / f"{name}{suffix}").exists():
                return read_noise(d / f"{name}{suffix}", kind)
    raise InvalidArgument(f"no {kind} noise file in {d}")


# -- records -------------------------------------------------------------------


def write_record(out_dir, record_id, record, extra=None):
    """``<id>.json`` header plus ``<id>.f32`` little-endian float32 payload, lead-major."""
    out_dir = Path(out_dir)
    leads = list(record.leads)
    header = {
        "record_id": record_id,
        "fs": record.fs,
        "n_samples": record.n_samples,
        "leads": leads,
        "label": bool(record.label),
        "quantization_step": record.quantization_step,
        "metadata": dict(record.metadata),
    }
    if extra:
        header.update(extra)
    payload = np.stack([np.asarray(record.leads[k], dtype="<f4") for k in leads])
    (out_dir / f"{record_id}.f32").write_bytes(payload.tobytes())
    (out_dir / f"{record_id}.json").write_text(json.dumps(header, sort_keys=True, indent=1) + "\n")
    return out_dir / f"{record_id}.json"


def read_record(header_path):
    header_path = Path(header_path)
    h = json.loads(header_path.read_text())
    data = np.fromfile(header_path.with_suffix(".f32"), dtype="<f4")
    n, leads = int(h["n_samples"]), list(h["leads"])
    if data.size != n * len(leads):
        raise InvalidArgument(f"{header_path}: payload has {data.size} samples, expected {n * len(leads)}")
    data = data.reshape(len(leads), n).astype(np.float64)
    rec = EcgRecord(float(h["fs"]), dict(zip(leads, data)), bool(h["label"]),
                    float(h["quantization_step"]), dict(h.get("metadata", {})))
    return h["record_id"], rec


def write_manifest(out_dir, entries, master_seed):
    body = {"format_version": FORMAT_VERSION, "master_seed": int(master_seed), "records": entries}
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(body, sort_keys=True, indent=1) + "\n")
    return path


def read_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    body = json.loads(path.read_text())
    if body.get("format_version") != FORMAT_VERSION:
        raise InvalidArgument(f"{path}: unsupported format_version {body.get('format_version')}")
    return body


# -- tables --------------------------------------------------------------------


def write_features(path, rows):
    """rows: (record_id, subject_id, bins, label)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "subject_id", *FEATURE_COLUMNS, "label"])
        for rid, sid, bins, label in rows:
            w.writerow([rid, sid, *(f"{v:.6f}" for v in bins), int(bool(label))])


def read_features(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidArgument(f"{path}: empty feature table")
    missing = [c for c in ("record_id", *FEATURE_COLUMNS, "label") if c not in rows[0]]
    if missing:
        raise InvalidArgument(f"{path}: missing columns {missing}")
    out = []
    for r in rows:
        bins = np.array([float(r[c]) for c in FEATURE_COLUMNS])
        label = r["label"].strip().lower() in ("1", "true", "yes")
        out.append((r["record_id"], r.get("subject_id") or r["record_id"], bins, label))
    return out


def write_metrics(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for name, m in rows:
            w.writerow([name, *(f"{v:.4f}" for v in (m.auc, m.accuracy, m.f1, m.balanced_accuracy,
                                                      m.sensitivity, m.specificity))])


def read_metrics(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_roc(path, roc, name="model"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "fpr", "tpr", "threshold"])
        for (f, t), thr in zip(roc.points, roc.thresholds):
            w.writerow([name, f"{f:.6f}", f"{t:.6f}", f"{thr:.6f}"])


def read_roc(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
