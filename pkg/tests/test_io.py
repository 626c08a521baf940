import numpy as np
import pytest

from twasim import io
from twasim.beat_model import AverageBeat, evaluate_lead, phase_grid
from twasim.errors import InvalidArgument
from twasim.synthesizer import EcgRecord


def test_beat_round_trip(tmp_path, template):
    beat = AverageBeat(evaluate_lead(template["Y"], phase_grid(128)), 500.0)
    p = tmp_path / "subj_Y.txt"
    io.write_beat(p, beat, "Y", "subj")
    source, lead, back = io.read_beat(p)
    assert (source, lead, back.fs) == ("subj", "Y", 500.0)
    assert np.array_equal(back.samples, beat.samples)


def test_plain_beat_file(tmp_path):
    p = tmp_path / "a01_Z.txt"
    p.write_text("fs=250\n" + "\n".join(str(v) for v in np.sin(np.arange(32))) + "\n")
    source, lead, beat = io.read_beat(p)
    assert (source, lead, beat.fs, beat.samples.size) == ("a01", "Z", 250.0, 32)


def test_beat_without_fs_rejected(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1\n2\n")
    with pytest.raises(InvalidArgument):
        io.read_beat(p)


def test_template_round_trip(tmp_path, templates):
    for t in templates[:3]:
        io.write_template(tmp_path, t)
    back = io.load_templates(tmp_path)
    assert [b.source_id for b in back] == [t.source_id for t in templates[:3]]
    assert all(a == b for a, b in zip(back, templates[:3]))


def test_record_round_trip(tmp_path):
    r = np.random.default_rng(0)
    leads = {"I": r.normal(size=100), "II": r.normal(size=100)}
    rec = EcgRecord(1000.0, leads, True, metadata={"hr": "70"})
    io.write_record(tmp_path, "r1", rec)
    rid, back = io.read_record(tmp_path / "r1.json")
    assert rid == "r1" and back.label and back.metadata["hr"] == "70"
    for k in leads:
        assert np.array_equal(back[k], leads[k].astype("<f4").astype(float))
    raw = (tmp_path / "r1.f32").read_bytes()
    assert len(raw) == 2 * 100 * 4
    assert np.frombuffer(raw[:4], "<f4")[0] == np.float32(leads["I"][0])


def _write_wfdb(tmp_path, fmt, values):
    name = f"n{fmt}"
    (tmp_path / f"{name}.hea").write_text(f"{name} 2 360 {len(values)}\n"
                                          f"{name}.dat {fmt} 200 11 0 0 0 0 MLII\n"
                                          f"{name}.dat {fmt} 200 11 0 0 0 0 V1\n")
    pairs = np.column_stack([values, -values]).ravel()
    if fmt == 16:
        (tmp_path / f"{name}.dat").write_bytes(pairs.astype("<i2").tobytes())
    else:
        u = pairs & 0xFFF
        a, b = u[0::2], u[1::2]
        data = np.column_stack([a & 0xFF, ((b >> 8) << 4) | (a >> 8), b & 0xFF]).astype(np.uint8)
        (tmp_path / f"{name}.dat").write_bytes(data.tobytes())
    return tmp_path / f"{name}.hea"


@pytest.mark.parametrize("fmt", [16, 212])
def test_wfdb_reader(tmp_path, fmt):
    values = np.array([0, 1, -1, 200, -200, 1000, -1000, 2047])
    rec = io.read_noise(_write_wfdb(tmp_path, fmt, values), "MA")
    assert rec.fs == 360.0
    np.testing.assert_allclose(rec.samples, values / 200.0)


def test_text_noise(tmp_path):
    p = tmp_path / "em.txt"
    p.write_text("fs=360\n0.1\n-0.2\n0.3\n")
    rec = io.find_noise(tmp_path, "EM")
    assert rec.kind == "EM" and np.allclose(rec.samples, [0.1, -0.2, 0.3])


def test_feature_table_round_trip(tmp_path):
    rows = [("r0", "s0", np.arange(6.0), True), ("r1", "s1", np.zeros(6), False)]
    io.write_features(tmp_path / "f.csv", rows)
    back = io.read_features(tmp_path / "f.csv")
    assert [(r[0], r[1], r[3]) for r in back] == [("r0", "s0", True), ("r1", "s1", False)]
    assert np.array_equal(back[0][2], np.arange(6.0))
