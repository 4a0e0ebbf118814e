"""Purcell factors of an emitter in an open microcavity with finite linewidths
and Gaussian cavity-length jitter.

Units
-----
Rates and linewidths are given in ordinary frequency units (Hz).  The
free-space emission rate ``gamma0`` is therefore ``1 / (2*pi*tau)`` for a
lifetime ``tau``; it has to live in the same unit system as the cavity
linewidth because both enter ``R / (R + linewidth_cav)``.  Angular quantities
(``g0``) are returned in rad/s and say so in their names.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.integrate import IntegrationWarning, quad
from scipy.special import erfcx

from ._validation import (
    NumericalError,
    check_fraction,
    check_nonnegative,
    check_positive,
)

__all__ = [
    "CavityParams",
    "EmitterParams",
    "JitterModel",
    "PurcellCurve",
    "coupling_rate_g0",
    "effective_rate",
    "effective_rate_R0",
    "effective_rate_limits",
    "overlap_integral",
    "overlap_integral_quadrature",
    "purcell_curve",
    "purcell_from_decay",
    "purcell_ideal",
    "purcell_jittered",
    "purcell_prefactor",
    "regime",
]


@dataclass(frozen=True)
class EmitterParams:
    """Emitter description.

    Parameters
    ----------
    gamma0 : float
        Free-space emission rate in Hz (``1/(2*pi*tau)``).
    linewidth : float
        Emitter FWHM in Hz, including pure dephasing.
    wavelength : float
        Emission wavelength in metres.
    eta_QE : float
        Quantum efficiency in (0, 1].
    xi : float
        Dipole-orientation overlap with the cavity field; ``xi**2`` scales the rate.
    field_factor : float
        Relative mode intensity at the emitter position (1 at the antinode).
    """

    gamma0: float
    linewidth: float
    wavelength: float
    eta_QE: float = 1.0
    xi: float = 1.0
    field_factor: float = 1.0

    def __post_init__(self):
        check_positive(self.gamma0, "gamma0")
        check_positive(self.linewidth, "linewidth")
        check_positive(self.wavelength, "wavelength")
        check_fraction(self.eta_QE, "eta_QE", allow_zero=False)
        check_fraction(self.xi, "xi")
        check_fraction(self.field_factor, "field_factor")

    @classmethod
    def from_lifetime(cls, tau, linewidth, wavelength, **kwargs):
        return cls(gamma0=1.0 / (2.0 * math.pi * check_positive(tau, "tau")),
                   linewidth=linewidth, wavelength=wavelength, **kwargs)

    @property
    def gamma_angular(self) -> float:
        """Lifetime-limited angular rate in rad/s."""
        return 2.0 * math.pi * self.gamma0

    @property
    def frequency(self) -> float:
        return SPEED_OF_LIGHT / self.wavelength


@dataclass(frozen=True)
class CavityParams:
    finesse: float
    L_eff: float
    w0: float
    n_mem: float

    def __post_init__(self):
        if not self.finesse > 1:
            raise ValueError(f"finesse must be > 1, got {self.finesse}")
        check_positive(self.L_eff, "L_eff")
        check_positive(self.w0, "w0")
        check_positive(self.n_mem, "n_mem")

    @property
    def linewidth(self) -> float:
        """Cavity FWHM in Hz."""
        return SPEED_OF_LIGHT / (2.0 * self.L_eff * self.finesse)

    @property
    def mode_volume(self) -> float:
        return 0.25 * math.pi * self.w0**2 * self.L_eff

    def with_finesse(self, finesse) -> CavityParams:
        return replace(self, finesse=float(finesse))


@dataclass(frozen=True)
class JitterModel:
    """Gaussian rms cavity-length jitter and its frequency equivalents."""

    sigma_L: float
    L_eff: float
    wavelength: float

    def __post_init__(self):
        check_nonnegative(self.sigma_L, "sigma_L")
        check_positive(self.L_eff, "L_eff")
        check_positive(self.wavelength, "wavelength")

    @classmethod
    def for_cavity(cls, sigma_L, cavity: CavityParams, emitter: EmitterParams):
        return cls(sigma_L, cavity.L_eff, emitter.wavelength)

    @property
    def length_to_frequency(self) -> float:
        """Hz of resonance shift per metre of length change."""
        return SPEED_OF_LIGHT / (self.L_eff * self.wavelength)

    @property
    def sigma_nu(self) -> float:
        return self.sigma_L * self.length_to_frequency

    @property
    def sigma_omega(self) -> float:
        return 2.0 * math.pi * self.sigma_nu


def purcell_prefactor(emitter: EmitterParams, cavity: CavityParams) -> float:
    """Dimensionless mode-volume prefactor ``xi^2 * 3 lambda^3 / (2 n^3 pi^2 w0^2 L_eff)``."""
    lam = emitter.wavelength
    geom = 3.0 * lam**3 / (2.0 * cavity.n_mem**3 * math.pi**2 * cavity.w0**2 * cavity.L_eff)
    return emitter.xi**2 * emitter.field_factor * geom


def coupling_rate_g0(emitter: EmitterParams, cavity: CavityParams) -> float:
    """Single-emitter coupling rate ``g0`` in rad/s (divide by 2*pi for Hz)."""
    lam = emitter.wavelength
    gamma = emitter.gamma_angular
    return math.sqrt(
        0.5 * gamma * 3.0 * lam**2 * SPEED_OF_LIGHT
        / (cavity.n_mem**3 * math.pi**2 * cavity.w0**2 * cavity.L_eff)
    )


def _perfect_integral(width_cav, width_em, center):
    return 2.0 * center / (math.pi * (width_cav + width_em))


def _closed_form(width_cav, width_em, sigma, center):
    total = width_cav + width_em
    if sigma == 0:
        return _perfect_integral(width_cav, width_em, center)
    x = total / (2.0 * math.sqrt(2.0) * sigma)
    # written as I0 * sqrt(pi) x erfcx(x): the factor tends to 1 for vanishing
    # jitter, so neither 1/sigma nor exp(x^2) can overflow
    if not math.isfinite(x) or x > 1e150:
        return _perfect_integral(width_cav, width_em, center)
    return _perfect_integral(width_cav, width_em, center) * math.sqrt(math.pi) * x * float(erfcx(x))


def overlap_integral(linewidth_cav, linewidth_em, jitter: JitterModel | None = None, units="ordinary"):
    """Spectral overlap integral of emitter and (jittering) cavity Lorentzians.

    ``linewidth_cav`` and ``linewidth_em`` are FWHM in Hz; the jitter model
    supplies the centre frequency ``c/lambda`` and the length conversion.
    ``units`` selects the system the integral is evaluated in:

    ``angular``  centre ``omega0``, widths and jitter multiplied by 2*pi
    ``ordinary`` centre ``nu0``, widths in Hz, jitter ``sigma_nu``
    ``spatial``  centre ``L_eff``, widths as length changes, jitter ``sigma_L``

    The value is the same in all three systems.
    """
    width_cav = check_positive(linewidth_cav, "linewidth_cav")
    width_em = check_positive(linewidth_em, "linewidth_em")
    if jitter is None:
        raise ValueError("a JitterModel is required (use sigma_L=0 for a stable cavity)")
    nu0 = SPEED_OF_LIGHT / jitter.wavelength
    if units == "ordinary":
        scale, center, sigma = 1.0, nu0, jitter.sigma_nu
    elif units == "angular":
        scale, center, sigma = 2.0 * math.pi, 2.0 * math.pi * nu0, jitter.sigma_omega
    elif units == "spatial":
        scale = 1.0 / jitter.length_to_frequency
        center, sigma = jitter.L_eff, jitter.sigma_L
    else:
        raise ValueError(f"units must be 'angular', 'ordinary' or 'spatial', got {units!r}")
    return _closed_form(width_cav * scale, width_em * scale, sigma, center)


def _lorentz(x, hwhm):
    return hwhm / (math.pi * (x * x + hwhm * hwhm))


def overlap_integral_quadrature(width_cav, width_em, sigma, center=1.0, *, epsabs=1e-12, epsrel=1e-9):
    """Brute-force nested adaptive quadrature of the overlap integral.

    Integrates ``center * g(w) * Lambda(w + d) * PDF(d)`` over ``w`` and the
    Gaussian detuning ``d`` without using the closed form.  The term linear in
    ``w`` is odd under the symmetric jitter distribution and integrates to zero,
    so it is left out.  Works in any unit system as long as all four inputs
    share it.  Meant as an independent check, not for production use.
    """
    width_cav = check_positive(width_cav, "width_cav")
    width_em = check_positive(width_em, "width_em")
    sigma = check_nonnegative(sigma, "sigma")
    scale = width_cav + width_em
    a_cav, a_em = 0.5 * width_cav / scale, 0.5 * width_em / scale
    s = sigma / scale
    inner_tol = {"epsabs": 1e-3 * epsabs, "epsrel": 1e-2 * epsrel, "limit": 400}

    def half(center_own, hwhm_own, center_other, hwhm_other, theta_lo, theta_hi):
        # uniform density over theta for the own Lorentzian, w = c + a*tan(theta)
        def f(theta):
            w = center_own + hwhm_own * math.tan(theta)
            return _lorentz(w - center_other, hwhm_other) / math.pi

        if theta_hi <= theta_lo:
            return 0.0
        val, _ = quad(f, theta_lo, theta_hi, **inner_tol)
        return val

    def inner(delta):
        # emitter at w = 0, cavity at w = -delta; split the line at the midpoint
        # so that each half is mapped around the peak it contains
        (c_lo, a_lo), (c_hi, a_hi) = sorted([(0.0, a_em), (-delta, a_cav)])
        mid = 0.5 * (c_lo + c_hi)
        edge = 0.5 * math.pi
        left = half(c_lo, a_lo, c_hi, a_hi, -edge, math.atan((mid - c_lo) / a_lo))
        right = half(c_hi, a_hi, c_lo, a_lo, math.atan((mid - c_hi) / a_hi), edge)
        return left + right

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            if s == 0:
                total = inner(0.0)
            else:
                root2s = math.sqrt(2.0) * s

                def outer(x):
                    return math.exp(-x * x) * inner(root2s * x) / math.sqrt(math.pi)

                # integrand is even in the detuning
                knee = min(8.6, 4.0 * (a_cav + a_em) / root2s)
                total, _ = quad(outer, 0.0, 8.6, points=[knee], epsabs=epsabs, epsrel=epsrel, limit=400)
                total *= 2.0
        except IntegrationWarning as exc:
            raise NumericalError(f"overlap quadrature did not converge: {exc}") from exc
    return center * total / scale


def effective_rate_R0(emitter: EmitterParams, cavity: CavityParams) -> float:
    """Effective emitter-cavity rate for a perfectly stable cavity, in Hz."""
    I0 = _perfect_integral(cavity.linewidth, emitter.linewidth, emitter.frequency)
    return purcell_prefactor(emitter, cavity) * emitter.gamma0 * I0


def effective_rate_limits(emitter: EmitterParams, cavity: CavityParams):
    """``(bad_cavity, bad_emitter)`` limit expressions of :func:`effective_rate_R0`."""
    lam, n, w0 = emitter.wavelength, cavity.n_mem, cavity.w0
    xi2 = emitter.xi**2 * emitter.field_factor
    bad_cavity = xi2 * 6.0 * lam**2 * cavity.finesse * emitter.gamma0 / (n**3 * math.pi**3 * w0**2)
    bad_emitter = (
        xi2 * 3.0 * lam**2 * SPEED_OF_LIGHT * emitter.gamma0
        / (n**3 * math.pi**3 * w0**2 * cavity.L_eff * emitter.linewidth)
    )
    return bad_cavity, bad_emitter


def regime(emitter: EmitterParams, cavity: CavityParams, ratio=10.0) -> str:
    """``bad-cavity``, ``bad-emitter`` or ``intermediate`` by linewidth ratio."""
    q = cavity.linewidth / emitter.linewidth
    if q >= ratio:
        return "bad-cavity"
    if q <= 1.0 / ratio:
        return "bad-emitter"
    return "intermediate"


def _as_jitter(jitter, cavity, emitter):
    if jitter is None:
        return JitterModel.for_cavity(0.0, cavity, emitter)
    if isinstance(jitter, JitterModel):
        return jitter
    return JitterModel.for_cavity(float(jitter), cavity, emitter)


def effective_rate(emitter: EmitterParams, cavity: CavityParams, jitter=None) -> float:
    """Effective rate with Gaussian length jitter (``sigma_L`` in m or a JitterModel), in Hz."""
    jitter = _as_jitter(jitter, cavity, emitter)
    I = overlap_integral(cavity.linewidth, emitter.linewidth, jitter, "ordinary")
    return purcell_prefactor(emitter, cavity) * emitter.gamma0 * I


def _saturate(rate, emitter, cavity):
    kappa = cavity.linewidth
    return rate * kappa / (emitter.gamma0 * (rate + kappa))


def purcell_ideal(emitter: EmitterParams, cavity: CavityParams) -> float:
    """Purcell factor of a stable cavity including the finite cavity decay rate."""
    return _saturate(effective_rate_R0(emitter, cavity), emitter, cavity)


def purcell_jittered(emitter: EmitterParams, cavity: CavityParams, jitter) -> float:
    """Effective Purcell factor under Gaussian cavity-length jitter."""
    return _saturate(effective_rate(emitter, cavity, jitter), emitter, cavity)


def purcell_from_decay(tau_ref: float, tau_cav: float, eta_QE: float = 1.0) -> float:
    """Effective Purcell factor from reference and in-cavity decay times.

    Negative values mean the cavity suppresses emission; they are returned
    unchanged so the caller can flag them.
    """
    tau_ref = check_positive(tau_ref, "tau_ref")
    tau_cav = check_positive(tau_cav, "tau_cav")
    eta_QE = check_fraction(eta_QE, "eta_QE", allow_zero=False)
    return (tau_ref / tau_cav - 1.0) / eta_QE


@dataclass
class PurcellCurve:
    """Purcell factor versus finesse, ready to be written as CSV."""

    finesse: np.ndarray
    linewidth_cav: np.ndarray
    ideal: np.ndarray
    bad_cavity: np.ndarray
    bad_emitter: np.ndarray
    jittered: dict
    annotations: dict = field(default_factory=dict)

    def columns(self):
        cols = {
            "finesse": self.finesse,
            "linewidth_cav_GHz": self.linewidth_cav / 1e9,
            "F_P_ideal": self.ideal,
            "asymptote_bad_cavity": self.bad_cavity,
            "asymptote_bad_emitter": self.bad_emitter,
        }
        for sigma, values in self.jittered.items():
            cols[f"F_P_sigma_{sigma * 1e12:g}pm"] = values
        return cols


def purcell_curve(emitter: EmitterParams, cavity: CavityParams, sigmas, finesse_grid) -> PurcellCurve:
    """Ideal and jittered Purcell factor over a finesse grid.

    ``cavity`` is a template whose finesse is replaced by each grid value.
    Annotations give the finesse where the cavity linewidth equals the emitter
    linewidth (regime crossover) and where it equals ``2 g0 / (2 pi)``.
    """
    grid = np.asarray(finesse_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("finesse grid is empty")
    sigmas = [float(s) for s in sigmas]
    ideal, bad_c, bad_e, widths = [], [], [], []
    jittered = {s: [] for s in sigmas}
    for F in grid:
        cav = cavity.with_finesse(F)
        ideal.append(purcell_ideal(emitter, cav))
        limits = effective_rate_limits(emitter, cav)
        bad_c.append(limits[0] / emitter.gamma0)
        bad_e.append(limits[1] / emitter.gamma0)
        widths.append(cav.linewidth)
        for s in sigmas:
            jittered[s].append(purcell_jittered(emitter, cav, s))
    two_g0 = 2.0 * coupling_rate_g0(emitter, cavity) / (2.0 * math.pi)
    finesse_at = lambda width: SPEED_OF_LIGHT / (2.0 * cavity.L_eff * width)
    annotations = {
        "finesse_linewidth_cav_eq_em": finesse_at(emitter.linewidth),
        "finesse_linewidth_cav_eq_2g0": finesse_at(two_g0),
        "linewidth_em_Hz": emitter.linewidth,
        "two_g0_Hz": two_g0,
    }
    return PurcellCurve(
        finesse=grid,
        linewidth_cav=np.array(widths),
        ideal=np.array(ideal),
        bad_cavity=np.array(bad_c),
        bad_emitter=np.array(bad_e),
        jittered={s: np.array(v) for s, v in jittered.items()},
        annotations=annotations,
    )
