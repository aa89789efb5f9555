"""Volterra (memory-kernel) formulation of the cavity amplitude.

Eliminating the spin amplitudes (``B(0) = 0``) and integrating the cavity
equation against its own decay ``c = kappa + i(omega_c - omega_p)`` gives

    A(t) = F(t) + int_0^t K(t - tau) A(tau) dtau

    F(t) = A0 e^{-ct} - int_0^t e^{-c(t-u)} eta(u) du
    K(s) = -Omega^2 int_0^s e^{-c(s-u)} U(u) du
    U(s) = int rho(w) e^{-(gamma + i(w - omega_p)) s} dw

The inner time integral is done analytically, so both U and K are single
frequency integrals of the density: adaptive Gauss-Kronrod for a continuous
``SpectralDensity``, an exact sum for a ``SpinPacketSet``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dynamics import CavityParams, DrivePulse, TimeSeries, drive_value
from .exceptions import ConfigError, DivergenceError, QuadratureError
from .spectral import SpectralDensity, SpinPacketSet


@dataclass
class KernelTable:
    lags: np.ndarray
    K: np.ndarray
    U: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def step(self):
        return float(self.lags[1] - self.lags[0])

    def write_csv(self, path, comments=()):
        with open(path, "w", newline="") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("lag_s", "re_K", "im_K", "re_U", "im_U"))
            for s, k, u in zip(self.lags, self.K, self.U):
                w.writerow((f"{s:.17g}", f"{k.real:.17g}", f"{k.imag:.17g}",
                            f"{u.real:.17g}", f"{u.imag:.17g}"))


def _phi1(z):
    """(e^z - 1)/z, continuous at 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def _kernel_factor(d, c, s):
    """-int_0^s e^{-c(s-u)} e^{-d u} du for broadcastable ``d`` and ``s``."""
    return -s * np.exp(-c * s) * _phi1((c - d) * s)


def _check_lags(lags):
    lags = np.asarray(lags, dtype=float)
    if lags.ndim != 1 or lags.size < 2:
        raise ConfigError("lag grid needs at least two points", "volterra.lags")
    if lags[0] != 0.0:
        raise ConfigError("lag grid must start at 0", "volterra.lags")
    d = np.diff(lags)
    if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
        raise ConfigError("lag grid must be uniform", "volterra.lags")
    return lags


def _density_digest(obj):
    h = hashlib.sha256()
    if isinstance(obj, SpinPacketSet):
        h.update(obj.frequencies.tobytes())
        h.update(obj.couplings.tobytes())
    else:
        h.update(repr(obj).encode())
    return h.hexdigest()[:16]


def build_kernel(source, cavity: CavityParams, omega_p, gamma=None,
                 lags=None, coupling=None, epsrel=1e-9, epsabs=0.0,
                 limit=20000):
    """Tabulate ``U`` and ``K`` on a uniform lag grid starting at 0.

    ``source`` is a :class:`SpinPacketSet` (exact sums; ``gamma`` and the
    coupling default to the set's own) or a :class:`SpectralDensity`
    (adaptive quadrature; ``gamma`` and ``coupling`` are required).
    """
    lags = _check_lags(lags)
    c = cavity.kappa + 1j * (cavity.omega_c - omega_p)

    if isinstance(source, SpinPacketSet):
        gamma = source.gamma if gamma is None else gamma
        g2 = np.square(source.couplings)
        omega2 = g2.sum() if coupling is None else coupling ** 2
        w = g2 / omega2 if omega2 > 0 else g2
        d = gamma + 1j * (source.frequencies - omega_p)
        U = np.empty(lags.size, dtype=complex)
        K = np.empty(lags.size, dtype=complex)
        chunk = max(1, 2 ** 21 // max(d.size, 1))
        for s0 in range(0, lags.size, chunk):
            s = lags[s0:s0 + chunk, None]
            U[s0:s0 + chunk] = (w * np.exp(-d * s)).sum(axis=1)
            K[s0:s0 + chunk] = (w * _kernel_factor(d, c, s)).sum(axis=1)
        K *= omega2
        info = {"method": "packet-sum", "error": 0.0}
    elif isinstance(source, SpectralDensity):
        if gamma is None or coupling is None:
            raise ConfigError("continuous density needs gamma and coupling",
                              "volterra")
        lo, hi = source.support
        n = lags.size

        def integrand(omega):
            d = gamma + 1j * (omega - omega_p)
            rho = float(source(omega))
            out = np.empty(2 * n, dtype=complex)
            out[:n] = rho * np.exp(-d * lags)
            out[n:] = rho * _kernel_factor(d, c, lags)
            return out

        pts = [p for p in source.breakpoints() if lo < p < hi]
        res = integrate.quad_vec(integrand, lo, hi, epsrel=epsrel,
                                 epsabs=epsabs, points=pts or None,
                                 limit=limit, full_output=True)
        val, err, info_q = res
        if not info_q.success:
            raise QuadratureError(
                f"kernel quadrature did not converge: estimated error "
                f"{err:.3g} after {info_q.intervals.shape[0]} intervals",
                achieved=err)
        U = val[:n]
        K = coupling ** 2 * val[n:]
        info = {"method": "quad_vec", "error": float(err),
                "intervals": int(info_q.intervals.shape[0])}
    else:
        raise TypeError("source must be a SpinPacketSet or SpectralDensity")

    prov = {"source": _density_digest(source), "omega_c": cavity.omega_c,
            "kappa": cavity.kappa, "omega_p": float(omega_p),
            "gamma": float(gamma), **info}
    return KernelTable(lags, K, U, prov)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def driving_term(drive: DrivePulse | None, cavity: CavityParams, omega_p,
                 grid, A0=0.0):
    """``F(t) = A0 e^{-ct} - int_{t0}^t e^{-c(t-u)} eta(u) du`` on ``grid``.

    The drive integral is accumulated step by step with 8-point
    Gauss-Legendre, splitting steps at the envelope edges.
    """
    grid = np.asarray(grid, dtype=float)
    c = cavity.kappa + 1j * (cavity.omega_c - omega_p)
    t0 = grid[0]
    F = A0 * np.exp(-c * (grid - t0))
    if drive is None or grid.size < 2:
        return np.asarray(F, dtype=complex)

    edges = (drive.t_on, drive.t_off)
    a, b = grid[:-1], grid[1:]
    inc = _step_integrals(drive, c, omega_p, a, b)
    for e in edges:
        hit = np.flatnonzero((a < e) & (e < b))
        for k in hit:
            inc[k] = (_step_integrals(drive, c, omega_p, a[k:k + 1],
                                      np.array([e]), t_end=b[k])[0]
                      + _step_integrals(drive, c, omega_p, np.array([e]),
                                        b[k:k + 1])[0])
    decay = np.exp(-c * (b - a))
    G = np.zeros(grid.size, dtype=complex)
    for k in range(grid.size - 1):
        G[k + 1] = decay[k] * G[k] + inc[k]
    return F - G


def _step_integrals(drive, c, omega_p, a, b, t_end=None):
    """int_a^b e^{-c(t_end - u)} eta(u) du per interval (t_end defaults to b)."""
    t_end = b if t_end is None else t_end
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    u = mid[:, None] + half[:, None] * _GL_X[None, :]
    # Gauss nodes sit strictly inside each piece, so envelope edges are safe
    eta = drive_value(drive, u, omega_p)
    wts = np.exp(-c * (np.atleast_1d(t_end)[:, None] - u))
    return half * (eta * wts * _GL_W[None, :]).sum(axis=1)


def solve_volterra(kernel: KernelTable, F, grid, growth_bound=1e6):
    """Second-kind Volterra solve by trapezoidal product integration."""
    grid = np.asarray(grid, dtype=float)
    F = np.asarray(F, dtype=complex)
    if F.shape != grid.shape:
        raise ConfigError("driving term and grid lengths differ", "volterra")
    n = grid.size
    if kernel.lags.size < n:
        raise ConfigError(
            f"kernel table has {kernel.lags.size} lags, grid needs {n}",
            "volterra")
    if n > 1:
        h = grid[1] - grid[0]
        if abs(kernel.step - h) > 1e-9 * h:
            raise ConfigError("kernel lag step differs from the time grid step",
                              "volterra")
    else:
        h = 0.0
    K = kernel.K[:n]
    A = np.empty(n, dtype=complex)
    A[0] = F[0]
    denom = 1.0 - 0.5 * h * K[0]
    for i in range(1, n):
        hist = 0.5 * K[i] * A[0]
        if i > 1:
            hist += K[i - 1:0:-1] @ A[1:i]
        A[i] = (F[i] + h * hist) / denom
    scale = max(float(np.max(np.abs(F))), 1e-300)
    peak = float(np.max(np.abs(A)))
    if not np.isfinite(peak) or peak > growth_bound * scale:
        raise DivergenceError(
            f"Volterra solution grew to {peak:.3g} (forcing {scale:.3g}); "
            "check the kernel sign")
    return TimeSeries(grid, A, frame=kernel.provenance.get("omega_p"),
                      meta={"method": "volterra-trapezoid"})


def volterra_response(source, cavity, drive, grid, A0=0.0, omega_p=None,
                      gamma=None, coupling=None, **quad):
    """Build kernel and forcing for ``grid`` and solve."""
    grid = np.asarray(grid, dtype=float)
    if omega_p is None:
        omega_p = drive.carrier if drive is not None else cavity.omega_c
    kernel = build_kernel(source, cavity, omega_p, gamma, grid - grid[0],
                          coupling, **quad)
    F = driving_term(drive, cavity, omega_p, grid, A0)
    return solve_volterra(kernel, F, grid)
