import numpy as np
import pytest
from hypothesis import given, strategies as st

from twasim.beat_model import LeadTemplate, MorphologyTemplate
from twasim.errors import GenerationFailed, InvalidArgument, InvalidConfig, InvalidTemplate
from twasim.rhythm import RhythmConfig
from twasim.synthesizer import (DOWER, LEADS_12, SynthesisConfig, VcgRecord, apply_twa,
                                dower_transform, measure_qt, perturb_template, qtc_bazett,
                                synthesize_vcg, t_wave_lead_i, validate_qtc)

DENSE = -np.pi + 2 * np.pi * np.arange(16384) / 16384


def simple_template(t_center=0.6 * np.pi - 0.3):
    # Q onset at -0.4 pi (width 0.3) and T offset at 0.6 pi (width 0.1)
    def one(name):
        return LeadTemplate(name, [-0.1, 1.0, 0.3], [0.3, 0.05, 0.1],
                            [-0.4 * np.pi + 0.9, 0.0, t_center])
    return MorphologyTemplate({k: one(k) for k in "XYZ"}, "simple")


def test_measure_qt_examples():
    t = simple_template()
    assert measure_qt(t, 1.0).qt == pytest.approx(0.5)
    assert measure_qt(t, 0.64).qt == pytest.approx(0.32)
    no_t = MorphologyTemplate({k: LeadTemplate(k, [1.0], [0.05], [0.0]) for k in "XYZ"})
    with pytest.raises(InvalidTemplate):
        measure_qt(no_t)


def test_qtc_bazett_examples():
    assert qtc_bazett(0.40, 1.0) == pytest.approx(0.40)
    assert qtc_bazett(0.36, 0.81) == pytest.approx(0.40)
    with pytest.raises(InvalidArgument):
        qtc_bazett(0.40, 0.0)


def test_validate_qtc_examples(templates):
    assert all(validate_qtc(t) for t in templates)
    # a template whose QT is far too long fails
    long_t = templates[0].map_leads(lambda lt: lt.with_params(widths=lt.widths * 2.5))
    assert not validate_qtc(long_t)


def test_perturb_zero_is_identity(template, rng):
    assert perturb_template(template, 0.0, rng) == template


def test_perturb_bounds_and_centers(template, rng):
    p = perturb_template(template, 0.045, rng)
    for k in "XYZ":
        ra = p[k].amplitudes / template[k].amplitudes
        rb = p[k].widths / template[k].widths
        assert np.all(np.abs(ra - 1) <= 0.045 + 1e-12)
        assert np.all(np.abs(rb - 1) <= 0.045 + 1e-12)
        assert np.array_equal(p[k].centers, template[k].centers)


def test_perturb_mean_unbiased(template):
    r = np.random.default_rng(0)
    draws = np.array([perturb_template(template, 0.045, r)["X"].amplitudes for _ in range(10000)])
    assert np.all(np.abs(draws.mean(axis=0) / template["X"].amplitudes - 1) < 0.005)


def test_apply_twa_zero(template):
    even, odd = apply_twa(template, 0)
    assert even == template and odd == template


@pytest.mark.parametrize("amp", [20, 60, 100])
def test_apply_twa_rendered_difference(templates, amp):
    for t in templates[:10]:
        even, odd = apply_twa(t, amp)
        diff = np.abs(t_wave_lead_i(even, DENSE) - t_wave_lead_i(odd, DENSE)).max() * 1e3
        assert diff == pytest.approx(amp, abs=1.0)
        for k in "XYZ":
            keep = ~((even[k].centers > 0.15 * np.pi) & (even[k].centers < 0.85 * np.pi))
            assert np.array_equal(even[k].amplitudes[keep], odd[k].amplitudes[keep])


def test_apply_twa_monotone(template):
    def diff(a):
        e, o = apply_twa(template, a)
        return np.abs(t_wave_lead_i(e, DENSE) - t_wave_lead_i(o, DENSE)).max()
    assert diff(100) > diff(20)


def test_apply_twa_needs_t_kernels():
    no_t = MorphologyTemplate({k: LeadTemplate(k, [1.0], [0.05], [0.0]) for k in "XYZ"})
    with pytest.raises(InvalidTemplate):
        apply_twa(no_t, 50)


def test_config_validation(template):
    rhythm = RhythmConfig(70)
    with pytest.raises(InvalidConfig):
        SynthesisConfig(template, rhythm, twa_amplitude=10)
    with pytest.raises(InvalidConfig):
        SynthesisConfig(template, rhythm, perturbation_frac=0.2)
    assert SynthesisConfig(template, rhythm, twa_amplitude=20).label
    assert not SynthesisConfig(template, rhythm).label


def test_identical_beats_without_twa_or_variability(template):
    cfg = SynthesisConfig(template, RhythmConfig(60, hr_std=0), duration=20, seed=3)
    rec = synthesize_vcg(cfg)
    on = rec.beat_onsets
    beats = np.array([rec.x[o - 300:o + 600] for o in on if o >= 300 and o + 600 <= rec.x.size])
    assert len(beats) >= 10
    assert np.max(np.abs(beats - beats[0])) < 1e-9


def test_twa_record_even_odd_difference(template):
    cfg = SynthesisConfig(template, RhythmConfig(70, hr_std=0), twa_amplitude=60,
                          duration=30, seed=8)
    rec = synthesize_vcg(cfg)
    lead_i = dower_transform(rec, ("I",))["I"]
    on = rec.beat_onsets
    rows = [(i, lead_i[o - 250:o + 600]) for i, o in enumerate(on)
            if o >= 250 and o + 600 <= lead_i.size]
    even = np.mean([b for i, b in rows if i % 2 == 0], axis=0)
    odd = np.mean([b for i, b in rows if i % 2 == 1], axis=0)
    assert np.abs(even - odd).max() * 1e3 == pytest.approx(60, abs=1.0)


def test_record_determinism_and_shape(template):
    cfg = SynthesisConfig(template, RhythmConfig(80), twa_amplitude=35, duration=12, seed=99)
    a, b = synthesize_vcg(cfg), synthesize_vcg(cfg)
    assert a.x.size == 12000
    for k in "xyz":
        assert np.array_equal(getattr(a, k), getattr(b, k))
    assert np.all(np.diff(a.beat_onsets) > 0)
    assert a.label and a.config_digest == b.config_digest
    assert a.metadata["twa"] == "35"


def test_generation_failure_carries_retries():
    bad = simple_template(t_center=0.85 * np.pi - 0.35)
    cfg = SynthesisConfig(bad, RhythmConfig(70), max_retries=3)
    with pytest.raises(GenerationFailed) as info:
        synthesize_vcg(cfg)
    assert info.value.retries == 3


def test_dower_examples():
    n = 50
    zero = VcgRecord(500.0, np.zeros(n), np.zeros(n), np.zeros(n), np.array([1]), False)
    assert all(np.all(v == 0) for v in dower_transform(zero).leads.values())
    impulse = np.zeros(n)
    impulse[5] = 1.0
    rec = VcgRecord(500.0, impulse, np.zeros(n), np.zeros(n), np.array([1]), False)
    ecg = dower_transform(rec)
    assert ecg["I"][5] == DOWER["I"][0]
    with pytest.raises(InvalidArgument):
        VcgRecord(500.0, np.zeros(3), np.zeros(4), np.zeros(3), np.array([1]), False)


@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 5))
def test_dower_linearity_and_identities(seed, alpha):
    r = np.random.default_rng(seed)
    x, y, z = r.normal(size=(3, 64))
    rec = VcgRecord(500.0, x, y, z, np.array([0]), False)
    ecg = dower_transform(rec)
    assert list(ecg.leads) == list(LEADS_12)
    I, II = ecg["I"], ecg["II"]
    np.testing.assert_allclose(ecg["III"], II - I, atol=1e-12)
    np.testing.assert_allclose(ecg["aVR"], -(I + II) / 2, atol=1e-12)
    np.testing.assert_allclose(ecg["aVL"], I - II / 2, atol=1e-12)
    np.testing.assert_allclose(ecg["aVF"], II - I / 2, atol=1e-12)
    M = np.array([DOWER[k] for k in ("I", "II", "V1", "V2", "V3", "V4", "V5", "V6")])
    direct = M @ np.vstack([x, y, z])
    for row, k in zip(direct, ("I", "II", "V1", "V2", "V3", "V4", "V5", "V6")):
        np.testing.assert_allclose(ecg[k], row, atol=1e-12)
    scaled = dower_transform(VcgRecord(500.0, alpha * x, alpha * y, alpha * z, np.array([0]), False))
    for k in LEADS_12:
        np.testing.assert_allclose(scaled[k], alpha * ecg[k], atol=1e-9)
