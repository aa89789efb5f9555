"""Observables from simulated series and spectra.

Decay rates use the amplitude convention ``|A|^2 ~ exp(-2 rate t)``.  The
envelope of an oscillating intensity is taken from its local maxima,
refined by a parabola through the three log-samples around each maximum.

Fit reports serialize to a fixed key set (see :meth:`DecayFit.to_dict`):

``rate_rad_s``, ``rate_over_2pi_hz``, ``window_s``, ``residual_rms``,
``confidence_rad_s``, ``n_samples``, ``n_peaks``, ``method``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal, stats

from .dynamics import TimeSeries, TransmissionSpectrum
from .exceptions import FitError
from .units import TWO_PI


@dataclass
class DecayFit:
    rate: float
    window: tuple
    residual_rms: float
    confidence: float
    n_samples: int
    n_peaks: int
    method: str

    @property
    def rate_hz(self):
        return self.rate / TWO_PI

    def to_dict(self):
        return {
            "rate_rad_s": self.rate,
            "rate_over_2pi_hz": self.rate_hz,
            "window_s": [float(self.window[0]), float(self.window[1])],
            "residual_rms": self.residual_rms,
            "confidence_rad_s": self.confidence,
            "n_samples": self.n_samples,
            "n_peaks": self.n_peaks,
            "method": self.method,
        }


@dataclass
class OscillationFit:
    dominant: float
    secondary: float | None
    beat: float | None
    revivals: int
    resolution: float
    signal: str

    def to_dict(self):
        return {
            "dominant_rad_s": self.dominant,
            "dominant_over_2pi_hz": self.dominant / TWO_PI,
            "secondary_rad_s": self.secondary,
            "beat_rad_s": self.beat,
            "beat_over_2pi_hz": None if self.beat is None else self.beat / TWO_PI,
            "revivals": self.revivals,
            "resolution_rad_s": self.resolution,
            "signal": self.signal,
        }


@dataclass
class LorentzianFit:
    center: float
    hwhm: float
    peak: float

    @property
    def quality_factor(self):
        return self.center / (2.0 * self.hwhm)

    def to_dict(self):
        return {"center_rad_s": self.center, "hwhm_rad_s": self.hwhm,
                "peak": self.peak, "quality_factor": self.quality_factor}


def _series_arrays(series):
    if isinstance(series, TimeSeries):
        return series.t, series.intensity
    t, y = series
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def refined_maxima(t, y):
    """Local maxima of ``y`` refined by a parabola through log-samples.

    Returns ``(times, log_values)``; plateaus and edge points are skipped.
    """
    y = np.asarray(y, dtype=float)
    pk, _ = signal.find_peaks(y)
    pk = pk[(y[pk - 1] > 0) & (y[pk + 1] > 0)] if pk.size else pk
    if pk.size == 0:
        return np.empty(0), np.empty(0)
    l0, l1, l2 = np.log(y[pk - 1]), np.log(y[pk]), np.log(y[pk + 1])
    curv = l0 - 2.0 * l1 + l2
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(curv < 0, 0.5 * (l0 - l2) / curv, 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    dt = t[1] - t[0]
    return t[pk] + shift * dt, l1 - 0.25 * (l0 - l2) * shift


def fit_decay(series, window, min_samples=20, level=0.95):
    """Exponential decay rate of ``|A|^2`` inside ``window = (t0, t1)``.

    ``series`` is a :class:`TimeSeries` or a ``(t, intensity)`` pair.  With
    three or more oscillation maxima the log-envelope is interpolated
    between them onto the sample grid and fitted there; otherwise the raw
    log-intensity is fitted directly.  ``confidence`` is the ``level``
    half-width of the slope, taken from the regression over the maxima when
    an envelope is used.
    """
    t, y = _series_arrays(series)
    t0, t1 = window
    if not t1 > t0:
        raise FitError(f"empty fit window {window}")
    if t0 < t[0] - 1e-15 or t1 > t[-1] + 1e-12:
        raise FitError(f"fit window {window} outside series "
                       f"[{t[0]:.6g}, {t[-1]:.6g}]")
    m = (t >= t0) & (t <= t1)
    tt, yy = t[m], y[m]
    if tt.size < min_samples:
        raise FitError(f"{tt.size} samples in window, need {min_samples}")

    tp, lp = refined_maxima(tt, yy)
    if tp.size >= 3:
        grid = tt[(tt >= tp[0]) & (tt <= tp[-1])]
        if grid.size < min_samples:
            raise FitError(f"envelope spans {grid.size} samples, need "
                           f"{min_samples}")
        x, ly = grid, np.interp(grid, tp, lp)
        method = "envelope"
        ci_fit = stats.linregress(tp, lp)
        ci_n = tp.size
    else:
        pos = yy > 0
        if pos.sum() < min_samples:
            raise FitError("too few positive intensity samples to fit")
        x, ly = tt[pos], np.log(yy[pos])
        method = "direct"
        ci_fit = None
    fit = stats.linregress(x, ly)
    if not fit.slope < 0:
        raise FitError(f"non-decaying window {window}: log slope "
                       f"{fit.slope:.4g} >= 0")
    resid = ly - (fit.intercept + fit.slope * x)
    if ci_fit is None:
        ci_fit, ci_n = fit, x.size
    if ci_n > 2:
        tq = stats.t.ppf(0.5 + level / 2, ci_n - 2)
        conf = float(0.5 * tq * ci_fit.stderr)
    else:
        conf = math.nan
    return DecayFit(-0.5 * float(fit.slope), (float(t0), float(t1)),
                    float(np.sqrt(np.mean(resid ** 2))), conf, int(x.size),
                    int(tp.size), method)


def fit_two_regime(series, early, late, **kw):
    """Independent fits on an early and a late window (disjoint, ordered)."""
    if not early[1] <= late[0]:
        raise FitError(f"windows {early} and {late} overlap or are reversed")
    return fit_decay(series, early, **kw), fit_decay(series, late, **kw)


def _parabolic(mag, k):
    if k <= 0 or k >= mag.size - 1:
        return float(k)
    a, b, c = mag[k - 1], mag[k], mag[k + 1]
    den = a - 2.0 * b + c
    return float(k + (0.5 * (a - c) / den if den != 0 else 0.0))


def count_revivals(t, intensity, prominence=0.1):
    """Local maxima of the log-envelope after its first minimum."""
    tp, lp = refined_maxima(t, intensity)
    if lp.size < 3:
        return 0
    lp10 = lp / math.log(10.0)
    mins, _ = signal.find_peaks(-lp10, prominence=prominence)
    if mins.size == 0:
        return 0
    maxs, _ = signal.find_peaks(lp10, prominence=prominence)
    return int(np.sum(maxs > mins[0]))


def extract_oscillation(series, window=None, signal_kind="intensity",
                        pad=16, min_frequency=0.0, rel_secondary=0.1,
                        min_periods=8, revival_prominence=0.1):
    """Dominant and secondary oscillation frequencies of a time series.

    ``signal_kind="intensity"`` analyses ``|A|^2`` (mean removed), where a
    two-polariton state beats at the Rabi frequency.  ``"amplitude"``
    analyses the complex ``A`` and folds ``+f`` and ``-f``, which resolves
    the individual drive-frame components.  The secondary peak is the
    strongest other local maximum above ``rel_secondary`` of the dominant
    and at least one resolution bound away from it; ``beat`` is then their
    difference.
    """
    if not isinstance(series, TimeSeries):
        raise TypeError("extract_oscillation needs a TimeSeries")
    if window is not None:
        series = series.window(*window)
    t, A = series.t, series.A
    n = t.size
    if n < 16:
        raise FitError(f"{n} samples are too few for a spectral estimate")
    dt = series.dt
    T = n * dt
    nfft = int(pad) * n
    win = np.hanning(n)
    if signal_kind == "intensity":
        x = series.intensity
        mag = np.abs(np.fft.rfft((x - x.mean()) * win, nfft))
        freqs = np.fft.rfftfreq(nfft, dt)
    elif signal_kind == "amplitude":
        full = np.abs(np.fft.fft(A * win, nfft))
        half = nfft // 2 + 1
        mag = full[:half].copy()
        j = np.arange(1, half)
        j = j[nfft - j != j]
        mag[j] += full[nfft - j]
        freqs = np.arange(half) / (nfft * dt)
    else:
        raise ValueError(f"unknown signal kind {signal_kind!r}")
    omega = TWO_PI * freqs
    resolution = TWO_PI / T
    # only genuine local maxima count, so leakage from a decaying mean
    # cannot win at the band edge
    peaks, _ = signal.find_peaks(mag)
    peaks = peaks[omega[peaks] >= min_frequency]
    if peaks.size == 0:
        raise FitError("no spectral peak above the minimum frequency")
    k = int(peaks[np.argmax(mag[peaks])])
    dom = TWO_PI * _parabolic(mag, k) / (nfft * dt)
    if dom * T / TWO_PI < min_periods:
        raise FitError(f"series covers {dom * T / TWO_PI:.1f} periods of the "
                       f"dominant component, need {min_periods}")

    cand = peaks[(np.abs(omega[peaks] - omega[k]) >= 2.0 * resolution)
                 & (mag[peaks] >= rel_secondary * mag[k])]
    secondary = beat = None
    if cand.size:
        j = int(cand[np.argmax(mag[cand])])
        secondary = float(TWO_PI * _parabolic(mag, j) / (nfft * dt))
        beat = abs(dom - secondary)
    revivals = count_revivals(t, series.intensity, revival_prominence)
    return OscillationFit(float(dom), secondary, beat, revivals,
                          float(resolution), signal_kind)


def _lorentz(x, x0, w, p):
    return p / (1.0 + ((x - x0) / w) ** 2)


def fit_lorentzian(spectrum, segment=None, maxfev=2000):
    """Least-squares Lorentzian ``p / (1 + ((w - w0)/hwhm)^2)``.

    ``spectrum`` is a :class:`TransmissionSpectrum` or ``(omega, y)`` pair;
    ``segment=(lo, hi)`` restricts the fit to one peak.
    """
    if isinstance(spectrum, TransmissionSpectrum):
        x, y = spectrum.omega_p, spectrum.intensity
    else:
        x, y = (np.asarray(a, dtype=float) for a in spectrum)
    if segment is not None:
        m = (x >= segment[0]) & (x <= segment[1])
        x, y = x[m], y[m]
    if x.size < 4:
        raise FitError("Lorentzian fit needs at least 4 points")
    k = int(np.argmax(y))
    half = y >= 0.5 * y[k]
    w0 = max(0.5 * (x[half].max() - x[half].min()), x[1] - x[0])
    xs, ys = x[k], w0
    u = (x - xs) / ys
    scale = y[k]
    try:
        with warnings.catch_warnings():
            # the covariance is unused; noiseless input makes it singular
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            popt, _ = optimize.curve_fit(
                _lorentz, u, y / scale, p0=(0.0, 1.0, 1.0), maxfev=maxfev,
                ftol=1e-15, xtol=1e-15, gtol=1e-15)
    except RuntimeError as exc:
        raise FitError(f"Lorentzian fit did not converge: {exc}") from exc
    return LorentzianFit(float(xs + popt[0] * ys), float(abs(popt[1]) * ys),
                         float(popt[2] * scale))


def spectral_peaks(spectrum, rel_prominence=1e-3):
    """Local maxima of a scan with their half-prominence full widths.

    Returns a list of dicts ordered by frequency: ``omega``, ``height``,
    ``prominence`` and ``fwhm`` (all rad/s or intensity units).
    """
    if isinstance(spectrum, TransmissionSpectrum):
        x, y = spectrum.omega_p, spectrum.intensity
    else:
        x, y = (np.asarray(a, dtype=float) for a in spectrum)
    pk, props = signal.find_peaks(y, prominence=rel_prominence * y.max())
    widths = signal.peak_widths(y, pk, rel_height=0.5)[0]
    step = np.gradient(x)[pk] if x.size > 1 else np.zeros(pk.size)
    return [{"omega": float(x[i]), "height": float(y[i]),
             "prominence": float(p), "fwhm": float(w * s)}
            for i, p, w, s in zip(pk, props["prominences"], widths, step)]


def polariton_splitting(spectrum, rel_prominence=1e-3):
    """Separation of the two highest maxima of a scan."""
    peaks = spectral_peaks(spectrum, rel_prominence)
    if len(peaks) < 2:
        raise FitError(f"found {len(peaks)} maxima, need two for a splitting")
    top = sorted(peaks, key=lambda p: -p["height"])[:2]
    return abs(top[0]["omega"] - top[1]["omega"])


def write_report(path, fits):
    """Write ``{name: fit}`` as sorted, indented JSON."""
    out = {}
    for name, fit in fits.items():
        out[name] = fit.to_dict() if hasattr(fit, "to_dict") else fit
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return out
