import numpy as np
import pytest
from hypothesis import given, strategies as st

from twasim.beat_model import (AverageBeat, GaussianKernel, LeadTemplate, MorphologyTemplate,
                               compute_average_beat, evaluate_lead, fit_template, phase_grid)
from twasim.errors import InsufficientData, InvalidArgument, InvalidTemplate


def lead(a, b, c, name="X"):
    return LeadTemplate(name, np.array(a, float), np.array(b, float), np.array(c, float))


def test_kernel_invariants():
    with pytest.raises(InvalidArgument):
        GaussianKernel(1.0, 0.0, 0.0)
    with pytest.raises(InvalidArgument):
        GaussianKernel(1.0, 0.1, -np.pi)
    GaussianKernel(1.0, 0.1, np.pi)


def test_lead_template_sorted_and_distinct():
    t = lead([1, 2, 3], [0.1, 0.1, 0.1], [0.5, -0.5, 0.0])
    assert np.all(np.diff(t.centers) > 0)
    assert list(t.amplitudes) == [2, 3, 1]
    with pytest.raises(InvalidTemplate):
        lead([1, 2], [0.1, 0.1], [0.3, 0.3])
    with pytest.raises(InvalidTemplate):
        LeadTemplate("X", [], [], [], fitted=True)


def test_morphology_needs_three_leads(template):
    with pytest.raises(InvalidTemplate):
        MorphologyTemplate({"X": template["X"], "Y": template["Y"]})
    assert template.nominal_qt > 0


def test_evaluate_examples():
    phases = np.linspace(-3, 3, 11)
    assert np.all(evaluate_lead(lead([], [], []), phases) == 0)
    assert evaluate_lead(lead([1.0], [0.1], [0.0]), np.array([0.0]))[0] == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        evaluate_lead(lead([1.0], [0.1], [0.0]), np.array([np.nan]))


@given(st.integers(0, 2 ** 32 - 1))
def test_evaluate_linear_in_amplitudes(seed):
    r = np.random.default_rng(seed)
    n = 5
    b, c = r.uniform(0.02, 0.8, n), np.sort(r.uniform(-3, 3, n))
    a1, a2 = r.normal(size=n), r.normal(size=n)
    alpha = r.normal()
    phi = r.uniform(-np.pi, np.pi, 50)
    lhs = evaluate_lead(lead(a1 + alpha * a2, b, c), phi)
    rhs = evaluate_lead(lead(a1, b, c), phi) + alpha * evaluate_lead(lead(a2, b, c), phi)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@given(st.floats(-50, 50), st.floats(-np.pi + 1e-9, np.pi))
def test_wrapped_distance_bounded(theta, center):
    # a kernel of huge width sees exp(-d^2/2b^2) >= exp(-pi^2/2b^2) only if |d| <= pi
    t = lead([1.0], [1.0], [center])
    v = evaluate_lead(t, np.array([theta]))[0]
    assert v >= np.exp(-np.pi ** 2 / 2) - 1e-12


def periodic_signal(beat_fn, r_peaks, n):
    x = np.zeros(n)
    for left, right in zip(r_peaks[:-1], r_peaks[1:]):
        for s in range(left, right):
            x[s] = beat_fn(2 * np.pi * (s - left) / (right - left))
    return x


def test_average_of_identical_beats():
    t = lead([1.0, -0.2, 0.3], [0.1, 0.1, 0.3], [0.0, 0.4, 1.5])
    fs, rr = 500, 500
    peaks = np.arange(0, 6 * rr + 1, rr)
    x = np.tile(evaluate_lead(t, -np.pi + 2 * np.pi * np.arange(rr) / rr), 7)
    # shift so the R kernel (phase 0) lands on each peak
    x = np.roll(x, -rr // 2)
    beat = compute_average_beat(x, peaks[:-1] + 0, fs, n_grid=rr)
    expected = evaluate_lead(t, phase_grid(rr))
    np.testing.assert_allclose(beat.samples, expected, rtol=1e-6, atol=1e-6)


def test_inverted_pair_averages_to_zero():
    t = lead([1.0, 0.3], [0.1, 0.3], [0.0, 1.5])
    rr = 400
    one = evaluate_lead(t, -np.pi + 2 * np.pi * np.arange(rr) / rr)
    x = np.concatenate([one, -one, one])
    x = np.roll(x, -rr // 2)
    beat = compute_average_beat(x[: 2 * rr + 1], np.array([0, rr, 2 * rr]) , 500)
    assert np.max(np.abs(beat.samples)) < 1e-2


def test_unequal_rr_matches_resample_then_mean():
    r = np.random.default_rng(0)
    x = np.cumsum(r.normal(size=3000)) * 0.01
    peaks = np.array([100, 900, 1500, 2600])
    beat = compute_average_beat(x, peaks, 1000, n_grid=64)
    assert beat.samples.size == 64
    from scipy.interpolate import CubicSpline
    cs = CubicSpline(np.arange(x.size), x)
    frac = phase_grid(64) / (2 * np.pi)
    rows = []
    for a, b in zip(peaks[:-1], peaks[1:]):
        base = np.where(frac >= 0, a, b)
        rows.append(cs(base + frac * (b - a)))
    np.testing.assert_allclose(beat.samples, np.mean(rows, axis=0), atol=1e-12)


def test_average_beat_errors():
    with pytest.raises(InsufficientData):
        compute_average_beat(np.zeros(100), np.array([5]), 100)
    with pytest.raises(InvalidArgument):
        AverageBeat(np.zeros(8), 100)


def test_fit_single_kernel_recovers_truth():
    truth = lead([0.8], [0.12], [0.3])
    beat = AverageBeat(evaluate_lead(truth, phase_grid(512)), 1000)
    init = [GaussianKernel(0.7, 0.1, 0.25)]
    res = fit_template(beat, 1, init=init)
    assert res.template.amplitudes[0] == pytest.approx(0.8, abs=1e-6)
    assert res.template.widths[0] == pytest.approx(0.12, abs=1e-6)
    assert res.template.centers[0] == pytest.approx(0.3, abs=1e-6)


def test_fit_three_kernels_round_trip():
    truth = lead([1.0, -0.3, 0.35], [0.08, 0.1, 0.35], [0.0, 0.4, 1.6])
    beat = AverageBeat(evaluate_lead(truth, phase_grid(512)), 1000)
    res = fit_template(beat, 3)
    assert res.rms <= 1e-6


def test_fit_rejects_zero_kernels(template):
    beat = AverageBeat(np.ones(64), 1000)
    with pytest.raises(InvalidArgument):
        fit_template(beat, 0)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_fit_dominates_initialisation(seed, n):
    r = np.random.default_rng(seed)
    y = np.convolve(r.normal(size=128), np.ones(9) / 9, mode="same")
    res = fit_template(AverageBeat(y, 500), n, max_iter=60)
    assert res.rss <= res.rss_init
    assert np.all(res.template.widths > 0)


def test_refit_at_truth_is_idempotent(template):
    lt = template["X"]
    beat = AverageBeat(evaluate_lead(lt, phase_grid(512)), 1000)
    res = fit_template(beat, len(lt), init=lt.kernels)
    np.testing.assert_allclose(res.template.amplitudes, lt.amplitudes, atol=1e-8)
    np.testing.assert_allclose(res.template.centers, lt.centers, atol=1e-8)


def test_fit_flags_non_convergence():
    r = np.random.default_rng(3)
    beat = AverageBeat(r.normal(size=256), 500)
    res = fit_template(beat, 9, max_iter=2)
    assert not res.converged
    assert res.n_iter == 2
