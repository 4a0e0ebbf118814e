"""Spontaneous-emission rate of a dipole in front of a planar mirror.

The rate is obtained from the plane-wave (angular-spectrum) expansion of the
dipole field reflected by a laterally uniform mirror.  With ``u`` the in-plane
wavevector in units of the host wavenumber ``k`` and ``w = sqrt(1 - u^2)``::

    perpendicular: 1 - 3/2 Re int r_p u^3 / w exp(2ikdw) du
    parallel:      1 + 3/4 Re int (r_s + w^2 r_p) u / w exp(2ikdw) du

where ``r_s`` and ``r_p`` are tangential-field reflection coefficients (so a
perfect conductor has ``r_s = r_p = -1``).  Propagating waves are integrated
with ``u = sin(theta)`` and evanescent waves with ``u = cosh(t)``, which removes
the square-root singularity at ``u = 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from ._validation import NumericalError, check_nonnegative, check_positive
from .layers import Layer, LayerStack, reflection_coefficients

__all__ = [
    "ORIENTATIONS",
    "DipoleConfig",
    "DipoleRates",
    "angular_spectrum_rates",
    "enhancement_curve",
    "multilayer_enhancement",
    "pec_angular_spectrum",
    "pec_enhancement",
    "perfect_conductor_stack",
]

ORIENTATIONS = ("parallel", "perpendicular", "isotropic")


@dataclass(frozen=True)
class DipoleConfig:
    """Dipole at ``distance`` above the mirror's top interface, inside ``host_index``."""

    distance: float
    wavelength: float
    host_index: float
    orientation: str = "isotropic"

    def __post_init__(self):
        check_nonnegative(self.distance, "distance")
        check_positive(self.wavelength, "wavelength")
        check_positive(self.host_index, "host_index")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}")

    @property
    def phase_argument(self) -> float:
        """``2 k d`` with ``k`` the host wavenumber."""
        return 4.0 * math.pi * self.host_index * self.distance / self.wavelength


@dataclass
class DipoleRates:
    """Rates relative to the unbounded host, one entry per distance."""

    distance: np.ndarray
    parallel: np.ndarray
    perpendicular: np.ndarray

    @property
    def isotropic(self) -> np.ndarray:
        return (2.0 * self.parallel + self.perpendicular) / 3.0

    def select(self, orientation):
        if orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")
        return getattr(self, orientation)


def _pec_closed_form(x):
    x = np.asarray(x, dtype=float)
    perp = np.empty_like(x)
    par = np.empty_like(x)
    small = x < 0.5
    xs2 = x[small] ** 2
    # Taylor series near contact, where the closed form cancels catastrophically
    perp[small] = np.polyval([-1 / 7410154752000, 1 / 31135104000, -1 / 172972800, 1 / 1330560, -1 / 15120,
                              1 / 280, -1 / 10, 2.0], xs2)
    par[small] = np.polyval([1 / 926269344000, -1 / 4447872000, 1 / 28828800, -1 / 266112, 1 / 3780,
                             -3 / 280, 1 / 5, 0.0], xs2)
    xl = x[~small]
    s, c = np.sin(xl), np.cos(xl)
    perp[~small] = 1.0 + 3.0 * (s / xl**3 - c / xl**2)
    par[~small] = 1.0 - 1.5 * (s / xl + c / xl**2 - s / xl**3)
    return par, perp


def pec_enhancement(cfg: DipoleConfig) -> float:
    """Closed-form rate ratio in front of a perfect electric conductor.

    Image-dipole interference: the perpendicular dipole doubles at contact and
    the parallel one is cancelled.
    """
    par, perp = _pec_closed_form(np.array([cfg.phase_argument]))
    rates = DipoleRates(np.array([cfg.distance]), par, perp)
    return float(rates.select(cfg.orientation)[0])


def _integrand_pair(reflection, x):
    def propagating(theta):
        u, w = math.sin(theta), math.cos(theta)
        r_s, r_p = reflection(u)
        phase = np.exp(1j * x * w)
        perp = (r_p * u**3) * phase
        par = ((r_s + w * w * r_p) * u) * phase
        return np.concatenate([par.real, perp.real])

    def evanescent(t):
        u, sh = math.cosh(t), math.sinh(t)
        r_s, r_p = reflection(u)
        decay = np.exp(-x * sh)
        # du/w = sinh(t) dt / (i sinh(t)) = -i dt
        perp = (-1j * r_p * u**3) * decay
        par = (-1j * (r_s - sh * sh * r_p) * u) * decay
        return np.concatenate([par.real, perp.real])

    return propagating, evanescent


def _integrate(f, lo, hi, epsabs, epsrel):
    val, err, info = quad_vec(f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=2000, full_output=True)
    if not info.success:
        raise NumericalError(
            f"angular-spectrum quadrature failed on [{lo:.3g}, {hi:.3g}]: "
            f"{info.message}; error estimate {err:.3g} after {info.neval} evaluations"
        )
    return val


def _to_rates(total, n):
    return 1.0 + 0.75 * total[:n], 1.0 - 1.5 * total[n:]


def angular_spectrum_rates(reflection, x, *, u_max=5.0, epsabs=1e-13, epsrel=1e-10):
    """Rate ratios ``(parallel, perpendicular)`` for phase arguments ``x = 2kd``.

    ``reflection(u)`` returns the complex pair ``(r_s, r_p)`` for a scalar ``u``.  The
    evanescent part is cut at ``u_max``.  Raises :class:`NumericalError` if the
    adaptive quadrature reports failure.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    propagating, evanescent = _integrand_pair(reflection, x)
    total = _integrate(propagating, 0.0, 0.5 * math.pi, epsabs, epsrel)
    total = total + _integrate(evanescent, 0.0, math.acosh(u_max), epsabs, epsrel)
    return _to_rates(total, x.size)


def pec_angular_spectrum(x, **kwargs):
    """Plane-wave expansion with ``r_s = r_p = -1``; independent of the closed form."""

    def reflection(u):
        return -1.0 + 0j, -1.0 + 0j

    return angular_spectrum_rates(reflection, x, **kwargs)


def perfect_conductor_stack(host_index, wavelength, mirror_index=1e4) -> LayerStack:
    """A stack that reflects like a perfect conductor (``r -> -1`` at all angles).

    The exit medium is a lossless dielectric of huge index rather than a metal,
    which gives the same limit without a surface-plasmon pole near ``u = 1``.
    """
    return LayerStack(
        incident_medium=complex(host_index),
        layers=(Layer("host_spacer", wavelength * 1e-6, complex(host_index)),),
        exit_medium=complex(mirror_index),
        name="pec_like",
    )


def _check_host(mirror: LayerStack, host_index):
    if abs(mirror.incident_medium - host_index) > 1e-12 * abs(host_index):
        raise ValueError(
            f"dipole host index {host_index} differs from the stack's incident medium "
            f"{mirror.incident_medium}; the dipole must sit in the stack's incident medium"
        )
    if mirror.incident_medium.imag != 0:
        raise ValueError("the host medium must be lossless")


def enhancement_curve(distances, wavelength, mirror: LayerStack, *, u_max=5.0, check_cutoff=True,
                      epsabs=1e-10, epsrel=1e-8) -> DipoleRates:
    """Rate ratios over a distance grid for a dipole in the stack's incident medium.

    With ``check_cutoff`` the evanescent cutoff is doubled once and a warning is
    issued if any ratio moves by more than ``1e-6``.
    """
    d = np.atleast_1d(np.asarray(distances, dtype=float))
    if np.any(d < 0):
        raise ValueError("distances must be >= 0")
    wavelength = check_positive(wavelength, "wavelength")
    host = mirror.incident_medium.real
    x = 4.0 * math.pi * host * d / wavelength

    def reflection(u):
        return reflection_coefficients(mirror, wavelength, u)

    par, perp = angular_spectrum_rates(reflection, x, u_max=u_max, epsabs=epsabs, epsrel=epsrel)
    if check_cutoff:
        # contribution of the evanescent band between u_max and 2*u_max
        _, evanescent = _integrand_pair(reflection, x)
        tail = _integrate(evanescent, math.acosh(u_max), math.acosh(2 * u_max), epsabs, epsrel)
        shift = np.max(np.abs(np.concatenate([0.75 * tail[: x.size], 1.5 * tail[x.size:]])))
        if shift > 1e-6:
            warnings.warn(
                f"evanescent cutoff u_max={u_max} not converged (change {shift:.2g} on doubling)",
                RuntimeWarning,
                stacklevel=2,
            )
    return DipoleRates(d, par, perp)


def multilayer_enhancement(cfg: DipoleConfig, mirror: LayerStack, **kwargs) -> float:
    """Rate ratio for one dipole configuration in front of ``mirror``."""
    _check_host(mirror, cfg.host_index)
    rates = enhancement_curve([cfg.distance], cfg.wavelength, mirror, **kwargs)
    return float(rates.select(cfg.orientation)[0])
