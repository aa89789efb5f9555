"""Spin spectral density, hole burning and spin-packet discretization.

The inhomogeneous line is a q-Gaussian truncated to a finite support and
normalized to unit integral over it.  Holes multiply the line by
``1 - depth * notch(omega)``; they are imposed directly on the density, the
burning process itself is not simulated.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .exceptions import ConfigError

log = logging.getLogger(__name__)

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
HOLE_PROFILES = ("gaussian", "rectangular")


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QGaussianParams:
    """q-Gaussian line ``[1 + (q-1) beta x^2]^(-1/(q-1))`` around ``center``.

    ``cutoff`` is the half-width of the support measured from ``center``;
    it defaults to five linewidths.  Use :meth:`threshold_cutoff` for the
    "density below a fraction of the peak" criterion instead.
    """

    center: float
    fwhm: float
    q: float = 1.39
    cutoff: float | None = None

    def __post_init__(self):
        if not (self.fwhm > 0 and math.isfinite(self.fwhm)):
            raise ConfigError(f"fwhm must be positive, got {self.fwhm}", "fwhm")
        if not 1.0 < self.q < 3.0:
            raise ConfigError(f"q must lie in (1, 3), got {self.q}", "q")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", 5.0 * self.fwhm)
        if not self.cutoff > 0:
            raise ConfigError(f"cutoff must be positive, got {self.cutoff}",
                              "cutoff")

    @property
    def beta(self):
        q = self.q
        return 4.0 * (2.0 ** (q - 1.0) - 1.0) / ((q - 1.0) * self.fwhm ** 2)

    @property
    def support(self):
        return (self.center - self.cutoff, self.center + self.cutoff)

    def shape(self, x):
        """Unnormalized profile at offset ``x`` from the centre (peak = 1)."""
        q = self.q
        return (1.0 + (q - 1.0) * self.beta * np.square(x)) ** (-1.0 / (q - 1.0))

    @cached_property
    def norm(self):
        # int_{-X}^{X} (1 + a x^2)^(-p) dx = 2 X 2F1(p, 1/2; 3/2; -a X^2)
        a = (self.q - 1.0) * self.beta
        p = 1.0 / (self.q - 1.0)
        X = self.cutoff
        return 2.0 * X * special.hyp2f1(p, 0.5, 1.5, -a * X * X)

    def pdf(self, omega):
        omega = np.asarray(omega, dtype=float)
        x = omega - self.center
        out = self.shape(x) / self.norm
        return np.where(np.abs(x) <= self.cutoff, out, 0.0)

    def threshold_cutoff(self, rel=1e-9):
        """Copy whose support ends where the line falls below ``rel`` of its
        peak."""
        q = self.q
        x2 = (rel ** (-(q - 1.0)) - 1.0) / ((q - 1.0) * self.beta)
        return QGaussianParams(self.center, self.fwhm, q, math.sqrt(x2))


@dataclass(frozen=True)
class HoleSpec:
    """A burned spectral hole.  ``depth`` 1 bleaches the centre completely."""

    center: float
    fwhm: float
    depth: float = 1.0
    profile: str = "gaussian"

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ConfigError(f"hole fwhm must be positive, got {self.fwhm}",
                              "fwhm")
        if not 0.0 <= self.depth <= 1.0:
            raise ConfigError(f"hole depth must lie in [0, 1], got {self.depth}",
                              "depth")
        if self.profile not in HOLE_PROFILES:
            raise ConfigError(
                f"unknown hole profile {self.profile!r}; "
                f"expected one of {HOLE_PROFILES}", "profile")

    def notch(self, omega):
        x = np.asarray(omega, dtype=float) - self.center
        if self.profile == "gaussian":
            sigma = self.fwhm * _FWHM_TO_SIGMA
            return np.exp(-0.5 * np.square(x / sigma))
        return (np.abs(x) <= 0.5 * self.fwhm).astype(float)

    def transmission(self, omega):
        """Fraction of spins left coupled at ``omega``."""
        return 1.0 - self.depth * self.notch(omega)

    @property
    def breakpoints(self):
        if self.profile == "rectangular":
            return (self.center - 0.5 * self.fwhm, self.center + 0.5 * self.fwhm)
        return (self.center,)


@dataclass(frozen=True)
class SpectralDensity:
    """q-Gaussian base line with zero or more holes.

    With ``renormalize=False`` (the default) the holes simply remove spectral
    weight, so the integral drops below one; with ``renormalize=True`` the
    holed line is rescaled back to unit integral.
    """

    base: QGaussianParams
    holes: tuple[HoleSpec, ...] = ()
    renormalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))

    @property
    def support(self):
        return self.base.support

    def _holed(self, omega):
        rho = self.base.pdf(omega)
        for hole in self.holes:
            rho = rho * hole.transmission(omega)
        return rho

    def __call__(self, omega):
        rho = self._holed(omega)
        if self.renormalize and self.holes:
            rho = rho / self.retained_weight
        return rho

    def breakpoints(self):
        lo, hi = self.support
        pts = {self.base.center}
        for hole in self.holes:
            pts.update(p for p in hole.breakpoints if lo < p < hi)
        return sorted(pts)

    def integral(self, epsabs=1e-13, epsrel=1e-12):
        lo, hi = self.support
        val, _ = integrate.quad(self, lo, hi, points=self.breakpoints(),
                                limit=500, epsabs=epsabs, epsrel=epsrel)
        return val

    @cached_property
    def retained_weight(self):
        """Integral of the holed line before any renormalization."""
        if not self.holes:
            return 1.0
        lo, hi = self.support
        val, _ = integrate.quad(self._holed, lo, hi, points=self.breakpoints(),
                                limit=500, epsabs=1e-14, epsrel=1e-12)
        return val

    @property
    def removed_weight(self):
        return 1.0 - self.retained_weight


def eval_density(density, omega):
    """rho(omega); zero outside the support."""
    return density(omega)


def apply_holes(density: SpectralDensity, holes: Sequence[HoleSpec]):
    """Return a new density with ``holes`` appended.

    Holes must be centred inside the support.  Burning the exact same hole
    twice is treated as a configuration mistake.
    """
    holes = tuple(holes)
    if not holes:
        return density
    lo, hi = density.support
    seen = {(h.center, h.profile) for h in density.holes}
    for i, hole in enumerate(holes):
        if not lo <= hole.center <= hi:
            raise ConfigError(
                f"hole centre {hole.center:.6g} rad/s outside the density "
                f"support [{lo:.6g}, {hi:.6g}]", f"holes[{i}].center")
        key = (hole.center, hole.profile)
        if key in seen:
            raise ConfigError(
                "duplicate hole (same centre and profile)", f"holes[{i}]")
        seen.add(key)
    out = SpectralDensity(density.base, density.holes + holes,
                          density.renormalize)
    log.debug("burned %d hole(s); removed weight %.6g", len(holes),
              out.removed_weight)
    return out


@dataclass(frozen=True)
class FrequencyGrid:
    """``n`` uniformly spaced frequencies spanning ``[lo, hi]``.

    Points are placed symmetrically about the midpoint so that a grid centred
    on a symmetric line gives exactly mirrored offsets.  A single-point grid
    sits at the midpoint and represents the whole interval.
    """

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"grid needs at least one point, got {self.n}",
                              "packets")
        if not self.hi >= self.lo:
            raise ConfigError("grid upper edge below lower edge", "grid")

    @classmethod
    def around(cls, center, half_width, n):
        return cls(center - half_width, center + half_width, n)

    @classmethod
    def for_density(cls, density, n=2001):
        lo, hi = density.support
        return cls(lo, hi, n)

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def step(self):
        return (self.hi - self.lo) / (self.n - 1) if self.n > 1 else self.hi - self.lo

    def offsets(self):
        k = np.arange(self.n, dtype=float) - 0.5 * (self.n - 1)
        return k * self.step if self.n > 1 else np.zeros(1)

    @property
    def points(self):
        return self.center + self.offsets()


@dataclass(frozen=True)
class SpinPacketSet:
    """Discretized ensemble: packet frequencies, couplings and the
    homogeneous spin decay rate (all rad/s)."""

    frequencies: np.ndarray
    couplings: np.ndarray
    gamma: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = _readonly(self.frequencies)
        g = _readonly(self.couplings)
        if w.ndim != 1 or w.shape != g.shape:
            raise ConfigError("frequencies and couplings must be 1-D arrays of "
                              "equal length", "packets")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ConfigError("couplings must be finite and non-negative",
                              "packets")
        if w.size > 1 and np.any(np.diff(w) <= 0):
            raise ConfigError("packet frequencies must be strictly increasing",
                              "packets")
        if self.gamma < 0:
            raise ConfigError("spin decay rate must be non-negative", "gamma")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "couplings", g)

    def __len__(self):
        return self.frequencies.size

    @property
    def collective_coupling(self):
        """Omega = sqrt(sum g^2)."""
        return float(np.sqrt(np.sum(np.square(self.couplings))))

    @property
    def weights(self):
        """g^2 / Omega^2, the discrete spectral density."""
        g2 = np.square(self.couplings)
        return g2 / g2.sum()

    def with_gamma(self, gamma):
        return SpinPacketSet(self.frequencies, self.couplings, gamma, self.meta)

    @classmethod
    def empty(cls, gamma=0.0):
        return cls(np.zeros(0), np.zeros(0), gamma)


def discretize(density, coupling, grid: FrequencyGrid, gamma=0.0,
               min_hole_points=9):
    """Sample ``density`` on ``grid`` into spin packets of total coupling
    ``coupling``.

    ``g_mu = coupling * sqrt(rho(omega_mu) / sum_l rho0(omega_l))`` where
    ``rho0`` is the hole-free line when holes are not renormalized (burned
    spins are lost, so the effective collective coupling drops) and the holed
    line itself otherwise.  Packets inside full-depth holes keep ``g = 0``.
    """
    if not coupling > 0:
        raise ConfigError(f"collective coupling must be positive, got {coupling}",
                          "ensemble.coupling")
    lo, hi = density.support
    tol = 1e-12 * max(abs(lo), abs(hi), 1.0)
    if grid.lo > lo + tol or grid.hi < hi - tol:
        raise ConfigError(
            f"grid [{grid.lo:.9g}, {grid.hi:.9g}] does not cover the density "
            f"support [{lo:.9g}, {hi:.9g}]", "ensemble.packets")
    omega = grid.points
    holes = getattr(density, "holes", ())
    if holes and grid.n > 1:
        for i, hole in enumerate(holes):
            inside = np.count_nonzero(np.abs(omega - hole.center)
                                      <= 0.5 * hole.fwhm)
            if inside < min_hole_points:
                raise ConfigError(
                    f"hole of FWHM {hole.fwhm:.6g} rad/s covers only {inside} "
                    f"grid point(s); need >= {min_hole_points} "
                    f"(increase the packet count)", f"holes[{i}]")
    rho = np.asarray(density(omega), dtype=float)
    if holes and not getattr(density, "renormalize", True):
        ref = np.sum(density.base.pdf(omega))
    else:
        ref = np.sum(rho)
    if not ref > 0:
        raise ConfigError("density vanishes on the whole grid", "ensemble")
    g = coupling * np.sqrt(rho / ref)
    return SpinPacketSet(omega, g, gamma,
                         meta={"nominal_coupling": float(coupling),
                               "grid": (grid.lo, grid.hi, grid.n)})


def write_density_csv(path, density, omega, comments=()):
    omega = np.asarray(omega, dtype=float)
    rho = density(omega)
    _write_columns(path, ("omega_rad_s", "rho"), (omega, rho), comments)


def write_packets_csv(path, packets: SpinPacketSet, comments=()):
    _write_columns(path, ("omega_rad_s", "g_rad_s"),
                   (packets.frequencies, packets.couplings), comments)


def _write_columns(path, names, columns, comments=()):
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*columns):
            writer.writerow([f"{float(v):.17g}" for v in row])


# -- NV centre ---------------------------------------------------------------

_S = 1.0 / math.sqrt(2.0)
SX = np.array([[0, _S, 0], [_S, 0, _S], [0, _S, 0]], dtype=complex)
SY = np.array([[0, -1j * _S, 0], [1j * _S, 0, -1j * _S], [0, 1j * _S, 0]])
SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)


@dataclass(frozen=True)
class NVParams:
    """Spin-1 NV Hamiltonian ``H/h = D Sz^2 + mu B.S``.

    ``D`` in Hz, ``mu`` in Hz per field unit (28 MHz/mT -> ``mu=28e6`` with
    ``B`` in mT).
    """

    D: float = 2.877e9
    mu: float = 28e6
    B: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.D < 0 or self.mu <= 0:
            raise ConfigError("NV parameters need D >= 0 and mu > 0", "nv")
        object.__setattr__(self, "B", tuple(float(b) for b in self.B))
        if len(self.B) != 3:
            raise ConfigError("B must have three components", "nv.B")

    def hamiltonian(self):
        bx, by, bz = self.B
        return self.D * SZ @ SZ + self.mu * (bx * SX + by * SY + bz * SZ)


def nv_transitions(params: NVParams):
    """The two transition frequencies (Hz) out of the lowest level, ascending."""
    e = np.linalg.eigvalsh(params.hamiltonian())
    return np.sort(e[1:] - e[0])
