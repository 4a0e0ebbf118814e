"""Photon budget from excitation to detection for a fiber-coupled cavity emitter."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from ._validation import check_fraction, check_nonnegative, check_positive

__all__ = [
    "PROVENANCE_KINDS",
    "BudgetWarning",
    "EfficiencyChain",
    "chain_total",
    "fiber_mode_match",
    "infer_excitation",
    "mirror_outcoupling",
    "mode_fraction",
]

PROVENANCE_KINDS = ("measured", "calculated", "manufacturer", "inferred")
FACTORS = ("eta_exc", "eta_QE", "eta_mode", "eta_trans", "eta_fib", "eta_setup", "eta_det")


class BudgetWarning(UserWarning):
    """The inferred numbers are physically inconsistent."""


@dataclass(frozen=True)
class EfficiencyChain:
    """Stage efficiencies of the collection chain.

    ``eta_exc`` may be ``None``: the excitation efficiency is not stored as a
    constant, it is supplied by the user or inferred with
    :func:`infer_excitation`.  ``provenance`` maps factor names to one of
    :data:`PROVENANCE_KINDS`.
    """

    eta_QE: float
    eta_mode: float
    eta_trans: float
    eta_fib: float
    eta_setup: float
    eta_det: float
    eta_exc: float | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in FACTORS:
            value = getattr(self, name)
            if value is not None:
                check_fraction(value, name)
        for name, kind in self.provenance.items():
            if name not in FACTORS:
                raise ValueError(f"provenance given for unknown factor {name!r}")
            if kind not in PROVENANCE_KINDS:
                raise ValueError(f"provenance of {name} must be one of {PROVENANCE_KINDS}, got {kind!r}")

    def factors(self, include_excitation=True) -> dict:
        """Present factors in chain order."""
        out = {}
        for name in FACTORS:
            value = getattr(self, name)
            if value is None or (name == "eta_exc" and not include_excitation):
                continue
            out[name] = value
        return out

    def rows(self):
        """``(name, value, provenance)`` rows for a report."""
        return [(k, v, self.provenance.get(k, "")) for k, v in self.factors().items()]


def mode_fraction(purcell: float) -> float:
    """Fraction of emission into the cavity mode (beta factor), ``F/(1+F)``."""
    purcell = check_nonnegative(purcell, "purcell")
    return purcell / (1.0 + purcell)


def mirror_outcoupling(T_fib: float, L_tot: float) -> float:
    """Share of the round-trip losses leaving through the fiber mirror."""
    T_fib = check_positive(T_fib, "T_fib")
    if not L_tot > 0:
        raise ValueError(f"L_tot must be > 0, got {L_tot!r}")
    if T_fib > L_tot:
        raise ValueError(f"T_fib ({T_fib}) cannot exceed L_tot ({L_tot})")
    return T_fib / L_tot


def fiber_mode_match(w_f: float, w_m: float, n_f: float, wavelength: float, RC: float) -> float:
    """Power coupling of the cavity mode into the fiber's guided mode.

    ``w_f`` is the fiber mode radius, ``w_m`` the cavity mode radius on the
    curved mirror, ``RC`` its radius of curvature (``math.inf`` for flat).
    """
    w_f = check_positive(w_f, "w_f")
    w_m = check_positive(w_m, "w_m")
    n_f = check_positive(n_f, "n_f")
    wavelength = check_positive(wavelength, "wavelength")
    if not RC > 0:
        raise ValueError(f"RC must be > 0, got {RC!r}")
    size = w_f / w_m + w_m / w_f
    curvature = 0.0 if math.isinf(RC) else math.pi * n_f * w_f * w_m / (wavelength * RC)
    return 4.0 / (size * size + curvature * curvature)


def chain_total(chain: EfficiencyChain, include_excitation=True) -> float:
    """Product of all present stage efficiencies."""
    return math.prod(chain.factors(include_excitation).values())


def infer_excitation(measured_rate: float, rep_rate: float, chain_without_exc: float) -> float:
    """Excitation efficiency implied by a detected count rate.

    Values above 1 cannot be physical; they are returned but a
    :class:`BudgetWarning` is issued.
    """
    measured_rate = check_positive(measured_rate, "measured_rate")
    rep_rate = check_positive(rep_rate, "rep_rate")
    chain_without_exc = check_positive(chain_without_exc, "chain_without_exc")
    eta = measured_rate / rep_rate / chain_without_exc
    if eta > 1:
        warnings.warn(
            f"inferred excitation efficiency {eta:.3g} exceeds 1; the budget is inconsistent",
            BudgetWarning,
            stacklevel=2,
        )
    return eta
