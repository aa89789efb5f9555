"""Linearized cavity / spin-packet equations of motion.

In the frame rotating at ``frame`` (normally the drive carrier)::

    dA/dt   = -[kappa + i(omega_c - frame)] A + sum_mu g_mu B_mu - eta(t)
    dB_mu/dt = -[gamma + i(omega_mu - frame)] B_mu - g_mu A

The coupling block is anti-Hermitian, so without drive the total norm
``|A|^2 + sum |B_mu|^2`` can only decay.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import (ConfigError, DivergenceError, OracleCapError,
                         StepSizeError)
from .spectral import SpinPacketSet

log = logging.getLogger(__name__)

# default step and hard limit, as fractions of 1/(fastest rate)
STEP_SAFETY = 0.03
STEP_LIMIT = 0.05
ORACLE_CAP = 512
ENVELOPES = ("rectangular", "gaussian")


@dataclass(frozen=True)
class CavityParams:
    omega_c: float
    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigError(f"cavity decay must be positive, got {self.kappa}",
                              "cavity.decay")


@dataclass(frozen=True)
class DrivePulse:
    """Drive ``eta(t)`` with carrier ``carrier`` (rad/s).

    In the carrier frame the pulse is ``amplitude * envelope(t) *
    sin(modulation * t + phase)`` for a modulated pulse and ``amplitude *
    envelope(t) * exp(i phase)`` otherwise.  The envelope vanishes outside
    ``[t_on, t_off]``; the gaussian envelope is centred in that window.
    """

    carrier: float
    amplitude: complex = 1.0
    modulation: float = 0.0
    envelope: str = "rectangular"
    t_on: float = 0.0
    t_off: float = 1e-6
    sigma: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if self.envelope not in ENVELOPES:
            raise ConfigError(f"unknown envelope {self.envelope!r}",
                              "drive.envelope")
        if not self.t_off > self.t_on:
            raise ConfigError("drive t_off must be after t_on", "drive.t_off")
        if self.envelope == "gaussian" and not (self.sigma and self.sigma > 0):
            raise ConfigError("gaussian envelope needs sigma > 0",
                              "drive.sigma")

    def envelope_value(self, t):
        t = np.asarray(t, dtype=float)
        on = (t >= self.t_on) & (t <= self.t_off)
        if self.envelope == "rectangular":
            return on.astype(float)
        mid = 0.5 * (self.t_on + self.t_off)
        return np.where(on, np.exp(-0.5 * ((t - mid) / self.sigma) ** 2), 0.0)

    def scaled(self, factor):
        """Same pulse with the amplitude multiplied by ``factor``."""
        return DrivePulse(self.carrier, self.amplitude * factor,
                          self.modulation, self.envelope, self.t_on,
                          self.t_off, self.sigma, self.phase)


def drive_value(pulse: DrivePulse, t, frame=None):
    """Complex drive amplitude at time(s) ``t`` seen in the frame rotating at
    ``frame`` (defaults to the carrier)."""
    t = np.asarray(t, dtype=float)
    env = pulse.amplitude * pulse.envelope_value(t)
    if pulse.modulation:
        eta = env * np.sin(pulse.modulation * t + pulse.phase)
    else:
        eta = env * np.exp(1j * pulse.phase)
    eta = np.asarray(eta, dtype=complex)
    if frame is not None and frame != pulse.carrier:
        eta = eta * np.exp(-1j * (pulse.carrier - frame) * t)
    return eta


@dataclass
class TimeSeries:
    """Cavity amplitude on a uniform time grid, in the frame ``frame``."""

    t: np.ndarray
    A: np.ndarray
    B: np.ndarray | None = None
    norm: np.ndarray | None = None
    frame: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.A = np.asarray(self.A, dtype=complex)
        if self.t.ndim != 1 or self.t.shape != self.A.shape:
            raise ValueError("t and A must be 1-D arrays of equal length")
        if self.t.size > 1:
            d = np.diff(self.t)
            if np.any(d <= 0):
                raise ValueError("time grid must be strictly increasing")
            if np.ptp(d) > 1e-6 * d.mean():
                raise ValueError("time grid must be uniform")
        if self.B is not None and self.B.shape[0] != self.t.size:
            raise ValueError("spin record length does not match time grid")

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def intensity(self):
        return np.abs(self.A) ** 2

    @property
    def quadratures(self):
        return self.A.real, self.A.imag

    def window(self, t0, t1):
        m = (self.t >= t0) & (self.t <= t1)
        return TimeSeries(self.t[m], self.A[m],
                          None if self.B is None else self.B[m],
                          None if self.norm is None else self.norm[m],
                          self.frame, dict(self.meta))

    def write_csv(self, path, comments=()):
        with open(path, "w", newline="") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t_s", "re_A", "im_A", "abs2_A"))
            for t, a in zip(self.t, self.A):
                w.writerow((f"{t:.17g}", f"{a.real:.17g}", f"{a.imag:.17g}",
                            f"{abs(a) ** 2:.17g}"))

    @classmethod
    def read_csv(cls, path):
        comments = []
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    comments.append(line[1:].strip())
                    continue
                rows.append(line)
        reader = csv.DictReader(rows)
        t, re_a, im_a = [], [], []
        for row in reader:
            t.append(float(row["t_s"]))
            re_a.append(float(row["re_A"]))
            im_a.append(float(row["im_A"]))
        A = np.asarray(re_a) + 1j * np.asarray(im_a)
        return cls(np.asarray(t), A, meta={"comments": comments})


def _detunings(packets, cavity, frame):
    return cavity.omega_c - frame, packets.frequencies - frame


def fastest_rate(packets, cavity, frame):
    dc, dmu = _detunings(packets, cavity, frame)
    scale = max(abs(dc), cavity.kappa, packets.collective_coupling)
    if dmu.size:
        scale = max(scale, float(np.max(np.abs(dmu))))
    return scale


def default_step(packets, cavity, frame, safety=STEP_SAFETY):
    """Recommended time step; keeps the RK4 error near 1e-9 of the state."""
    return safety / fastest_rate(packets, cavity, frame)


def max_step(packets, cavity, frame):
    """Largest time step accepted by :func:`integrate`."""
    return STEP_LIMIT / fastest_rate(packets, cavity, frame)


def generator_matrix(packets: SpinPacketSet, cavity: CavityParams, frame):
    """Dense (N+1)x(N+1) generator, state ordered as ``(A, B_1..B_N)``."""
    n = len(packets)
    dc, dmu = _detunings(packets, cavity, frame)
    M = np.zeros((n + 1, n + 1), dtype=complex)
    M[0, 0] = -(cavity.kappa + 1j * dc)
    M[0, 1:] = packets.couplings
    M[1:, 0] = -packets.couplings
    idx = np.arange(1, n + 1)
    M[idx, idx] = -(packets.gamma + 1j * dmu)
    return M


def _aligned_steps(t0, t1, dt, edges, multiple=1, tol=1e-6):
    """Smallest step count, a multiple of ``multiple``, with step <= dt that
    puts every drive edge inside (t0, t1) on a step boundary (falls back to
    ignoring edges)."""
    n0 = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    n0 = multiple * math.ceil(n0 / multiple)
    inner = [(e - t0) / (t1 - t0) for e in edges if t0 < e < t1]
    if not inner:
        return n0
    for n in range(n0, 2 * n0 + 1, multiple):
        if all(abs(f * n - round(f * n)) < tol for f in inner):
            return n
    log.warning("drive edges do not fit a uniform grid near dt=%.4g s; "
                "expect first-order error at the edges", dt)
    return n0


def integrate(packets: SpinPacketSet, cavity: CavityParams,
              drive: DrivePulse | None, span, dt, record_spins=False, *,
              frame=None, initial=None, sample_every=1, track_norm=False):
    """Time-step the equations of motion over ``span = (t0, t1)``.

    Fourth-order Runge-Kutta in the interaction picture of the diagonal
    (decay + detuning) part, which is propagated exactly each step.  Returns
    every ``sample_every``-th step.  The effective step is ``(t1-t0)/n`` with
    the smallest multiple ``n`` of ``sample_every`` that keeps it at or
    below ``dt`` and puts the drive's on/off edges on step boundaries, so
    the last sample falls on ``t1``.
    """
    if frame is None:
        frame = drive.carrier if drive is not None else cavity.omega_c
    t0, t1 = map(float, span)
    if not t1 > t0:
        raise ConfigError("integration span must be increasing", "run.span")
    limit = max_step(packets, cavity, frame)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(
            f"dt={dt:.4g} s exceeds {limit:.4g} s = {STEP_LIMIT}/max rate "
            f"({fastest_rate(packets, cavity, frame):.4g} rad/s)")
    sample_every = int(sample_every)
    if sample_every < 1:
        raise ConfigError("sample_every must be >= 1", "run.sample_every")
    edges = () if drive is None else (drive.t_on, drive.t_off)
    nsteps = _aligned_steps(t0, t1, dt, edges, sample_every)
    h = (t1 - t0) / nsteps

    n = len(packets)
    dc, dmu = _detunings(packets, cavity, frame)
    L = np.empty(n + 1, dtype=complex)
    L[0] = -(cavity.kappa + 1j * dc)
    L[1:] = -(packets.gamma + 1j * dmu)
    E = np.exp(0.5 * h * L)
    E2 = E * E
    g = packets.couplings.astype(complex)

    y = np.zeros(n + 1, dtype=complex)
    if initial is not None:
        y[:] = np.asarray(initial, dtype=complex)
        if not np.all(np.isfinite(y)):
            raise DivergenceError("initial state is not finite")

    nsamp = nsteps // sample_every + 1
    t_out = t0 + h * sample_every * np.arange(nsamp)
    A_out = np.empty(nsamp, dtype=complex)
    B_out = np.empty((nsamp, n), dtype=complex) if record_spins else None
    norm_out = np.empty(nsamp) if track_norm else None

    if drive is not None:
        tt = t0 + h * np.arange(nsteps + 1)
        # one-sided values at step ends keep envelope edges out of the steps
        eps = 1e-9 * h
        eta_start = drive_value(drive, tt[:-1] + eps, frame)
        eta_end = drive_value(drive, tt[1:] - eps, frame)
        eta_half = drive_value(drive, tt[:-1] + 0.5 * h, frame)
    else:
        eta_start = eta_end = np.zeros(nsteps, dtype=complex)
        eta_half = np.zeros(nsteps, dtype=complex)

    neg_g = -g

    def coupling(state, eta):
        out = np.empty_like(state)
        np.multiply(neg_g, state[0], out=out[1:])
        out[0] = g @ state[1:] - eta
        return out

    def record(k, state):
        A_out[k] = state[0]
        if record_spins:
            B_out[k] = state[1:]
        if track_norm:
            norm_out[k] = np.vdot(state, state).real

    record(0, y)
    half = 0.5 * h
    sixth = h / 6.0
    for i in range(nsteps):
        k1 = coupling(y, eta_start[i])
        k2 = coupling(E * (y + half * k1), eta_half[i])
        k3 = coupling(E * y + half * k2, eta_half[i])
        k4 = coupling(E2 * y + h * (E * k3), eta_end[i])
        y = E2 * y + sixth * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
        if (i + 1) % sample_every == 0:
            k = (i + 1) // sample_every
            if not np.isfinite(y[0]) or not np.all(np.isfinite(y)):
                raise DivergenceError(
                    f"non-finite state at t={t0 + (i + 1) * h:.6g} s "
                    f"(step {i + 1}/{nsteps})")
            record(k, y)

    return TimeSeries(t_out, A_out, B_out, norm_out, frame,
                      meta={"dt": h, "steps": nsteps,
                            "sample_every": sample_every})


def propagator_decay(packets: SpinPacketSet, cavity: CavityParams, state, t,
                     frame=None, cap=ORACLE_CAP):
    """Drive-free propagation ``expm(M t) @ state`` with the dense generator.

    Reference path for :func:`integrate`; limited to ``cap`` packets.
    ``t`` may be a scalar or a 1-D array of times (one expm per time).
    """
    if len(packets) > cap:
        raise OracleCapError(
            f"{len(packets)} packets exceed the dense oracle cap of {cap}")
    if frame is None:
        frame = cavity.omega_c
    M = generator_matrix(packets, cavity, frame)
    state = np.asarray(state, dtype=complex)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([linalg.expm(M * ti) @ state for ti in times])
    return out[0] if np.ndim(t) == 0 else out


def self_energy(packets: SpinPacketSet, omega_p, chunk=256):
    """``sum_mu g_mu^2 / (gamma + i(omega_mu - omega_p))`` per probe frequency."""
    omega_p = np.atleast_1d(np.asarray(omega_p, dtype=float))
    g2 = np.square(packets.couplings)
    out = np.empty(omega_p.size, dtype=complex)
    w = packets.frequencies
    for s in range(0, omega_p.size, chunk):
        wp = omega_p[s:s + chunk]
        denom = packets.gamma + 1j * (w[None, :] - wp[:, None])
        out[s:s + chunk] = (g2[None, :] / denom).sum(axis=1)
    return out


def steady_state_amplitude(packets, cavity, omega_p, eta0=1.0):
    """Stationary cavity amplitude under a constant drive at ``omega_p``:
    ``-eta0 / (kappa + i(omega_c - omega_p) + Sigma(omega_p))``."""
    scalar = np.ndim(omega_p) == 0
    wp = np.atleast_1d(np.asarray(omega_p, dtype=float))
    if len(packets):
        sigma = self_energy(packets, wp)
    else:
        sigma = np.zeros(wp.size, dtype=complex)
    A = -eta0 / (cavity.kappa + 1j * (cavity.omega_c - wp) + sigma)
    return A[0] if scalar else A


@dataclass
class TransmissionSpectrum:
    omega_p: np.ndarray
    amplitude: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def intensity(self):
        return np.abs(self.amplitude) ** 2

    def write_csv(self, path, comments=()):
        with open(path, "w", newline="") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("omega_p_rad_s", "re_A", "im_A", "abs2_A"))
            for x, a in zip(self.omega_p, self.amplitude):
                w.writerow((f"{x:.17g}", f"{a.real:.17g}", f"{a.imag:.17g}",
                            f"{abs(a) ** 2:.17g}"))


def transmission_scan(packets, cavity, omega_p, eta0=1.0):
    """Steady-state transmission ``|A_ss|^2`` over a list of probe frequencies.

    Each packet is a Lorentzian of HWHM ``gamma`` in this spectrum, so the
    scan only looks continuous when the packet spacing is below ``gamma``.
    """
    omega_p = np.asarray(omega_p, dtype=float)
    if omega_p.size == 0:
        raise ConfigError("empty probe-frequency list", "run.scan")
    if len(packets) > 1:
        spacing = float(np.min(np.diff(packets.frequencies)))
        if packets.gamma > 0 and spacing > 2 * packets.gamma:
            log.warning("packet spacing %.3g rad/s exceeds 2*gamma; the scan "
                        "resolves individual packets", spacing)
    A = steady_state_amplitude(packets, cavity, omega_p, eta0)
    return TransmissionSpectrum(omega_p, np.atleast_1d(A))
