"""Scalar figures of merit of a plano-concave fiber Fabry-Perot cavity.

Losses are dimensionless fractions throughout (1000 ppm is ``1e-3``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import brentq

from ._validation import NumericalError, check_nonnegative, check_positive

__all__ = [
    "CavityGeometry",
    "MirrorLoss",
    "cavity_linewidth",
    "finesse_from_losses",
    "free_spectral_range",
    "impedance_contrast",
    "mode_radius_on_fiber",
    "mode_waist",
    "optical_length_from_resonances",
    "scattering_loss",
    "total_loss_from_finesse",
]


@dataclass(frozen=True)
class MirrorLoss:
    """Loss budget of one mirror; absorption is not measured separately and defaults to 0."""

    transmission: float
    scattering: float = 0.0
    absorption: float = 0.0

    def __post_init__(self):
        for name in ("transmission", "scattering", "absorption"):
            check_nonnegative(getattr(self, name), name)
        if self.total >= 1:
            raise ValueError(f"total mirror loss must be < 1, got {self.total}")

    @property
    def total(self) -> float:
        return self.transmission + self.scattering + self.absorption


@dataclass(frozen=True)
class CavityGeometry:
    """Lengths in metres.  ``L_eff`` and the penetration depths may be left at 0
    when only the mode geometry is needed."""

    L_air: float
    L_mem: float
    n_mem: float
    RC_fiber: float
    wavelength: float
    L_pen_fib: float = 0.0
    L_pen_sc: float = 0.0
    L_eff: float = 0.0

    def __post_init__(self):
        for name in ("L_air", "L_mem", "L_pen_fib", "L_pen_sc", "L_eff"):
            check_nonnegative(getattr(self, name), name)
        check_positive(self.n_mem, "n_mem")
        check_positive(self.wavelength, "wavelength")
        if not self.RC_fiber > 0:
            raise ValueError("RC_fiber must be > 0")

    @property
    def geometric_length(self) -> float:
        """Air gap plus membrane thickness reduced by its index."""
        return self.L_air + self.L_mem / self.n_mem

    @property
    def is_stable(self) -> bool:
        return math.isfinite(self.RC_fiber) and self.RC_fiber > self.geometric_length > 0


def _as_total(loss) -> float:
    return loss.total if isinstance(loss, MirrorLoss) else float(loss)


def finesse_from_losses(sc, fib) -> float:
    """Finesse from the total losses of the semiconductor and fiber mirrors.

    ``sc`` and ``fib`` are :class:`MirrorLoss` instances or total loss fractions.
    """
    l_sc, l_fib = _as_total(sc), _as_total(fib)
    for name, v in (("semiconductor loss", l_sc), ("fiber loss", l_fib)):
        if not 0 <= v < 1:
            raise ValueError(f"{name} must lie in [0, 1), got {v}")
    if l_sc == 0 and l_fib == 0:
        raise ValueError("lossless cavity has infinite finesse")
    p = (1.0 - l_sc) * (1.0 - l_fib)
    return math.pi * p**0.25 / (1.0 - math.sqrt(p))


def total_loss_from_finesse(finesse: float) -> float:
    """Summed two-mirror loss for a measured finesse, assuming equal mirrors.

    Solved by Brent's method on a per-mirror loss bracketed in [1e-15, 1 - 1e-15];
    the finesse is monotone on that bracket.
    """
    finesse = float(finesse)
    if not finesse > 1:
        raise ValueError(f"finesse must be > 1, got {finesse}")
    lo, hi = 1e-15, 1.0 - 1e-15

    def residual(per_mirror):
        return finesse_from_losses(per_mirror, per_mirror) - finesse

    if residual(lo) * residual(hi) > 0:
        raise NumericalError(f"finesse {finesse} outside the invertible range of the symmetric model")
    per_mirror = brentq(residual, lo, hi, xtol=1e-18, rtol=1e-15, maxiter=500)
    return 2.0 * per_mirror


def scattering_loss(S_q: float, wavelength: float) -> float:
    """Surface scattering loss of a mirror with rms roughness ``S_q``."""
    S_q = check_nonnegative(S_q, "S_q")
    wavelength = check_positive(wavelength, "wavelength")
    return (4.0 * math.pi * S_q / wavelength) ** 2


def impedance_contrast(fib_trans: float, fib_total: float, sc_total: float) -> float:
    """Depth of the reflection dip seen through the fiber mirror.

    Equals 1 at impedance matching (``2*fib_trans == fib_total + sc_total``).
    """
    fib_trans = check_nonnegative(fib_trans, "fib_trans")
    fib_total = check_nonnegative(fib_total, "fib_total")
    sc_total = check_nonnegative(sc_total, "sc_total")
    if fib_trans > fib_total:
        raise ValueError("fiber transmission cannot exceed the fiber total loss")
    denom = fib_total + sc_total
    if denom == 0:
        raise ValueError("both total losses are zero; contrast is undefined")
    return 1.0 - ((2.0 * fib_trans - fib_total - sc_total) / denom) ** 2


def optical_length_from_resonances(lambda1: float, lambda2: float) -> float:
    """Optical length from two neighbouring longitudinal resonances."""
    lambda1 = check_positive(lambda1, "lambda1")
    lambda2 = check_positive(lambda2, "lambda2")
    if lambda1 == lambda2:
        raise ValueError("resonance wavelengths must differ")
    if lambda2 < lambda1:
        raise ValueError("expected lambda2 > lambda1")
    return lambda1 * lambda2 / (2.0 * (lambda2 - lambda1))


def cavity_linewidth(finesse: float, L_eff: float) -> float:
    """Cavity FWHM in Hz, ``c / (2 L_eff F)``."""
    finesse = check_positive(finesse, "finesse")
    L_eff = check_positive(L_eff, "L_eff")
    return SPEED_OF_LIGHT / (2.0 * L_eff * finesse)


def free_spectral_range(length: float) -> float:
    return SPEED_OF_LIGHT / (2.0 * check_positive(length, "length"))


def mode_waist(geometry: CavityGeometry) -> float:
    """Gaussian waist of the fundamental mode at the planar (membrane) side."""
    Lg = geometry.geometric_length
    RC = geometry.RC_fiber
    if not geometry.is_stable:
        raise ValueError(
            f"unstable geometry: need 0 < L_air + L_mem/n_mem ({Lg:.4g} m) < RC_fiber ({RC:.4g} m)"
        )
    return math.sqrt(geometry.wavelength / math.pi * math.sqrt(Lg * RC - Lg * Lg))


def mode_radius_on_fiber(geometry: CavityGeometry) -> float:
    """Beam radius on the curved fiber mirror, propagated from the waist."""
    w0 = mode_waist(geometry)
    z_r = math.pi * w0 * w0 / geometry.wavelength
    return w0 * math.sqrt(1.0 + (geometry.geometric_length / z_r) ** 2)
