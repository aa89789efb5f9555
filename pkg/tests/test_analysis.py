import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from darkstates.analysis import (count_revivals, extract_oscillation,
                                 fit_decay, fit_lorentzian, fit_two_regime,
                                 polariton_splitting, refined_maxima,
                                 spectral_peaks, write_report)
from darkstates.dynamics import (CavityParams, TimeSeries, TransmissionSpectrum,
                                 transmission_scan)
from darkstates.exceptions import FitError
from darkstates.spectral import SpinPacketSet

from conftest import KAPPA, OMEGA_C, TWO_PI

RATE = TWO_PI * 1e6
T = np.linspace(0.0, 2e-6, 4001)


def series(A, t=T):
    return TimeSeries(t, A)


def test_exact_exponential():
    fit = fit_decay((T, np.exp(-2 * RATE * T)), (0.2e-6, 1.8e-6))
    assert fit.rate == pytest.approx(RATE, rel=1e-3)
    assert fit.method == "direct" and fit.residual_rms < 1e-10


def test_oscillating_envelope():
    # a resolved beat note under a decaying envelope
    A = np.exp(-RATE * T) * np.cos(TWO_PI * 21.3e6 * T / 2)
    fit = fit_decay(series(A), (0.2e-6, 1.8e-6))
    assert fit.method == "envelope" and fit.n_peaks > 20
    assert fit.rate == pytest.approx(RATE, rel=1e-3)


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(1e-12, 1e12), shift=st.floats(0.0, 0.8e-6))
def test_scale_and_shift_invariance(scale, shift):
    y = scale * np.exp(-2 * RATE * T)
    fit = fit_decay((T, y), (0.1e-6 + shift, 1.1e-6 + shift))
    assert fit.rate == pytest.approx(RATE, rel=1e-6)


def test_two_regime_piecewise():
    r1, r2 = TWO_PI * 2e6, TWO_PI * 0.3e6
    tb = 0.8e-6
    logy = np.where(T < tb, -2 * r1 * T, -2 * r1 * tb - 2 * r2 * (T - tb))
    early, late = fit_two_regime((T, np.exp(logy)), (0.1e-6, 0.75e-6),
                                 (0.9e-6, 1.9e-6))
    assert early.rate == pytest.approx(r1, rel=1e-2)
    assert late.rate == pytest.approx(r2, rel=1e-2)


def test_two_regime_single_exponential_consistent():
    early, late = fit_two_regime((T, np.exp(-2 * RATE * T)),
                                 (0.1e-6, 0.6e-6), (1.0e-6, 1.9e-6))
    assert 0.95 <= early.rate / late.rate <= 1.05


def test_fit_errors():
    y = np.exp(-2 * RATE * T)
    with pytest.raises(FitError, match="non-decaying"):
        fit_decay((T, 1 / y), (0.1e-6, 1e-6))
    with pytest.raises(FitError, match="samples"):
        fit_decay((T, y), (0.1e-6, 0.1e-6 + 5e-9))
    with pytest.raises(FitError, match="outside"):
        fit_decay((T, y), (1e-6, 3e-6))
    with pytest.raises(FitError):
        fit_decay((T, y), (1e-6, 0.5e-6))
    with pytest.raises(FitError, match="overlap"):
        fit_two_regime((T, y), (0.5e-6, 1e-6), (0.8e-6, 1.5e-6))


def test_confidence_reported():
    rng = np.random.default_rng(3)
    y = np.exp(-2 * RATE * T) * np.exp(0.01 * rng.standard_normal(T.size))
    fit = fit_decay((T, y), (0.1e-6, 1.5e-6))
    assert 0 < fit.confidence < 0.01 * RATE
    assert abs(fit.rate - RATE) < 3 * fit.confidence


def test_refined_maxima_locates_parabola_peak():
    t = np.arange(50) * 1e-9
    y = np.exp(-((t - 20.3e-9) / 5e-9) ** 2)
    tp, lp = refined_maxima(t, y)
    assert tp[0] == pytest.approx(20.3e-9, abs=1e-15) and lp[0] == pytest.approx(0, abs=1e-12)


def test_dominant_frequency_within_bin():
    f = 21.3e6
    A = np.exp(-RATE * 0.2 * T) * np.cos(TWO_PI * f * T)
    fit = extract_oscillation(series(A), signal_kind="amplitude")
    assert abs(fit.dominant - TWO_PI * f) <= fit.resolution
    # intensity of cos beats at twice the frequency
    fit2 = extract_oscillation(series(A), min_frequency=TWO_PI * 5e6)
    assert abs(fit2.dominant - 2 * TWO_PI * f) <= fit2.resolution


@settings(max_examples=20, deadline=None)
@given(phase=st.floats(0, 2 * np.pi))
def test_oscillation_phase_invariance(phase):
    A = np.exp(-RATE * 0.2 * T) * (np.cos(TWO_PI * 21.3e6 * T) + 0.1)
    a = extract_oscillation(series(A), signal_kind="amplitude")
    b = extract_oscillation(series(A * np.exp(1j * phase)),
                            signal_kind="amplitude")
    assert a.dominant == pytest.approx(b.dominant, rel=1e-9)
    cut = TWO_PI * 5e6
    ai = extract_oscillation(series(A), min_frequency=cut)
    bi = extract_oscillation(series(A * np.exp(1j * phase)), min_frequency=cut)
    assert ai.dominant == pytest.approx(bi.dominant, rel=1e-9)


def test_beat_and_revivals():
    t = np.linspace(0, 4e-6, 8001)
    f1, f2 = 9e6, 10.8e6
    A = np.exp(-TWO_PI * 50e3 * t) * (np.cos(TWO_PI * f1 * t)
                                      + np.cos(TWO_PI * f2 * t))
    fit = extract_oscillation(series(A, t), signal_kind="amplitude")
    assert fit.beat == pytest.approx(TWO_PI * 1.8e6, abs=fit.resolution)
    # envelope |cos(pi 1.8 MHz t)| revives every 1/1.8 MHz
    assert fit.revivals >= 5
    assert count_revivals(t, np.exp(-t * 1e6)) == 0


def test_oscillation_errors():
    with pytest.raises(FitError, match="periods"):
        extract_oscillation(series(np.cos(TWO_PI * 1e6 * T)),
                            signal_kind="amplitude")
    with pytest.raises(FitError):
        extract_oscillation(series(np.ones(T.size)), min_frequency=1e12)
    with pytest.raises(FitError):
        extract_oscillation(series(np.ones(8), T[:8]))
    with pytest.raises(ValueError):
        extract_oscillation(series(np.cos(T)), signal_kind="phase")


def test_lorentzian_exact():
    x = OMEGA_C + np.linspace(-5, 5, 801) * KAPPA
    y = 3.2 / (1 + ((x - OMEGA_C - 0.1 * KAPPA) / KAPPA) ** 2)
    fit = fit_lorentzian((x, y))
    assert fit.center == pytest.approx(OMEGA_C + 0.1 * KAPPA, rel=1e-12)
    assert fit.hwhm == pytest.approx(KAPPA, rel=1e-6)
    assert fit.peak == pytest.approx(3.2, rel=1e-6)


def test_bare_cavity_scan_quality_factor():
    cav = CavityParams(OMEGA_C, KAPPA)
    w = OMEGA_C + np.linspace(-10, 10, 2001) * KAPPA
    spec = transmission_scan(SpinPacketSet.empty(), cav, w)
    fit = fit_lorentzian(spec)
    assert fit.hwhm == pytest.approx(KAPPA, rel=1e-2)
    assert fit.quality_factor == pytest.approx(2.691e9 / (2 * 440e3), rel=1e-2)
    assert round(fit.quality_factor) == 3058 or abs(fit.quality_factor - 3057) < 5


def test_polariton_segments():
    g = TWO_PI * 5e6
    p = SpinPacketSet(np.array([OMEGA_C]), np.array([g]), KAPPA)
    w = OMEGA_C + np.linspace(-3, 3, 6001) * g
    spec = transmission_scan(p, CavityParams(OMEGA_C, KAPPA), w)
    lo = fit_lorentzian(spec, (w[0], OMEGA_C))
    hi = fit_lorentzian(spec, (OMEGA_C, w[-1]))
    # the two overlapping resonances push the |A|^2 maxima slightly past +-g
    assert hi.center - lo.center == pytest.approx(2 * g, rel=2e-2)
    assert polariton_splitting(spec) == pytest.approx(2 * g, rel=2e-2)
    peaks = spectral_peaks(spec)
    assert len(peaks) == 2 and peaks[0]["omega"] < peaks[1]["omega"]
    assert peaks[0]["fwhm"] == pytest.approx(2 * KAPPA, rel=2e-2)


def test_lorentzian_errors():
    with pytest.raises(FitError):
        fit_lorentzian((np.arange(3.0), np.ones(3)))
    flat = TransmissionSpectrum(np.linspace(0, 1, 50), np.ones(50))
    with pytest.raises(FitError):
        polariton_splitting(flat)


def test_report_keys(tmp_path):
    fit = fit_decay((T, np.exp(-2 * RATE * T)), (0.2e-6, 1.8e-6))
    out = write_report(tmp_path / "fits.json",
                       {"decay": fit, "extra": {"x": 1}})
    data = json.loads((tmp_path / "fits.json").read_text())
    assert data == json.loads(json.dumps(out))
    assert set(data["decay"]) == {
        "rate_rad_s", "rate_over_2pi_hz", "window_s", "residual_rms",
        "confidence_rad_s", "n_samples", "n_peaks", "method"}
    assert data["decay"]["rate_over_2pi_hz"] == pytest.approx(1e6, rel=1e-3)
