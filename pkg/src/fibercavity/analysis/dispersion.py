"""Cavity-length scans: per-spectrum optical length, mode numbers and fiber contact."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..metrics import optical_length_from_resonances
from .records import DispersionScan, Spectrum

__all__ = ["ContactReport", "DispersionAnalyzer", "PartialResultWarning", "dispersion_analyze", "find_modes"]


class PartialResultWarning(UserWarning):
    """Only part of the analysis could be carried out."""


@dataclass(frozen=True)
class ContactReport:
    detected: bool
    index: int | None
    z_set: float | None
    L_contact: float | None
    threshold: float
    residual_sigma: float


def find_modes(spectrum: Spectrum, prominence=0.2, half_window=5):
    """Centroid wavelengths of the resonances in one spectrum.

    Peaks are found with a prominence threshold relative to the spectrum's
    range and must be more than one centroid window apart; each centre is the
    background-subtracted intensity centroid over ``half_window`` bins on
    either side.
    """
    y = spectrum.counts
    span = float(np.ptp(y))
    if span == 0:
        return np.empty(0)
    idx, _ = signal.find_peaks(y, prominence=prominence * span, distance=2 * half_window + 1)
    centers = []
    for i in idx:
        lo, hi = max(i - half_window, 0), min(i + half_window + 1, y.size)
        seg = y[lo:hi] - y[lo:hi].min()
        if seg.sum() <= 0:
            continue
        centers.append(float(np.sum(seg * spectrum.wavelength[lo:hi]) / seg.sum()))
    return np.array(centers)


def _reject_outliers(values, half_width=4, rtol=0.02):
    # a length can only drift slowly between neighbouring spectra; drop values
    # more than rtol away from the median of their finite neighbours
    known = np.flatnonzero(np.isfinite(values))
    out = values.copy()
    for j, i in enumerate(known):
        window = values[known[max(j - half_width, 0): j + half_width + 1]]
        med = float(np.median(window))
        if abs(values[i] - med) > rtol * med:
            out[i] = np.nan
    return out


def _detect_contact(z, L, n_initial, run, n_sigma, sigma_floor):
    # expanding-window linear fit; contact is the first point of a run of
    # `run` consecutive points deviating by more than n_sigma residual sigmas
    n = z.size
    sigma = sigma_floor
    for i in range(n_initial, n - run + 1):
        coef = np.polyfit(z[:i], L[:i], 1)
        resid = L[:i] - np.polyval(coef, z[:i])
        sigma = max(float(np.std(resid, ddof=2)) if i > 2 else 0.0, sigma_floor)
        ahead = L[i: i + run] - np.polyval(coef, z[i: i + run])
        if np.all(np.abs(ahead) > n_sigma * sigma):
            return i, sigma
    return None, sigma


class DispersionAnalyzer(BaseEstimator):
    """Analyze a scan of spectra taken while the cavity length is tuned.

    Parameters
    ----------
    prominence : float
        Mode detection threshold relative to each spectrum's range.
    n_sigma : float
        Contact threshold in residual standard deviations of the linear fit.
    min_run : int
        Consecutive deviating scan steps required to flag contact.
    n_initial : int
        Points used for the first linear fit.
    sigma_floor : float
        Lower bound on the residual sigma in metres, so noiseless data does not
        flag rounding errors.

    Attributes
    ----------
    L_opt_ : array
        Optical length per spectrum (NaN where no mode was found).
    mode_numbers_ : list of int arrays
        Longitudinal order of every detected mode.
    mode_wavelengths_ : list of arrays
    z_to_length_ : (slope, intercept)
        Linear calibration of the set-point axis before contact.
    contact_ : ContactReport
    summed_spectrum_ : Spectrum
    partial_ : bool
        True when no spectrum showed two modes, so lengths are unknown.
    """

    def __init__(self, prominence=0.2, n_sigma=3.0, min_run=3, n_initial=5, sigma_floor=1e-10):
        self.prominence = prominence
        self.n_sigma = n_sigma
        self.min_run = min_run
        self.n_initial = n_initial
        self.sigma_floor = sigma_floor

    def fit(self, scan: DispersionScan, y=None):
        if not isinstance(scan, DispersionScan):
            raise TypeError("DispersionAnalyzer.fit expects a DispersionScan")
        modes = [find_modes(s, self.prominence) for s in scan.spectra]
        self.mode_wavelengths_ = modes
        z = scan.z_set
        n = z.size

        # lengths from adjacent mode pairs
        pair_L = np.full(n, np.nan)
        for i, lam in enumerate(modes):
            if lam.size >= 2:
                lam = np.sort(lam)
                pair_L[i] = np.median([optical_length_from_resonances(a, b) for a, b in itertools.pairwise(lam)])

        pair_L = _reject_outliers(pair_L)
        self.summed_spectrum_ = self._summed(scan)
        self.partial_ = not np.any(np.isfinite(pair_L))
        if self.partial_:
            warnings.warn("no spectrum shows two modes; optical lengths cannot be calibrated",
                          PartialResultWarning, stacklevel=2)
            self.L_opt_ = np.full(n, np.nan)
            self.mode_numbers_ = [np.zeros(0, dtype=int) for _ in modes]
            self.z_to_length_ = None
            self.contact_ = ContactReport(False, None, None, None, self.n_sigma, float("nan"))
            return self

        # mode numbers: round 2L/lambda with L from the pair estimate, or
        # interpolated from neighbouring spectra where only one mode is seen
        known = np.flatnonzero(np.isfinite(pair_L))
        L_guess = np.interp(np.arange(n), known, pair_L[known])
        L_opt = np.full(n, np.nan)
        orders = []
        for i, lam in enumerate(modes):
            if lam.size == 0:
                orders.append(np.zeros(0, dtype=int))
                continue
            m = np.rint(2.0 * L_guess[i] / lam).astype(int)
            orders.append(m)
            L_opt[i] = float(np.mean(m * lam / 2.0))
        # refine the guess once with the mode-number based lengths
        good = np.flatnonzero(np.isfinite(L_opt))
        L_guess = np.interp(np.arange(n), good, L_opt[good])
        for i, lam in enumerate(modes):
            if lam.size:
                orders[i] = np.rint(2.0 * L_guess[i] / lam).astype(int)
                L_opt[i] = float(np.mean(orders[i] * lam / 2.0))
        self.L_opt_ = L_opt
        self.mode_numbers_ = orders

        good = np.flatnonzero(np.isfinite(L_opt))
        zi, Li = z[good], L_opt[good]
        idx, sigma = (None, self.sigma_floor)
        if good.size >= self.n_initial + self.min_run:
            idx, sigma = _detect_contact(zi, Li, self.n_initial, self.min_run, self.n_sigma, self.sigma_floor)
        upto = good.size if idx is None else idx
        coef = np.polyfit(zi[:upto], Li[:upto], 1) if upto >= 2 else (np.nan, np.nan)
        self.z_to_length_ = (float(coef[0]), float(coef[1]))
        if idx is None:
            self.contact_ = ContactReport(False, None, None, None, self.n_sigma, sigma)
        else:
            k = int(good[idx])
            self.contact_ = ContactReport(True, k, float(z[k]), float(L_opt[k]), self.n_sigma, sigma)
        return self

    @staticmethod
    def _summed(scan):
        if scan.common_grid:
            grid = scan.spectra[0].wavelength
            total = np.sum([s.counts for s in scan.spectra], axis=0)
        else:
            grid = scan.spectra[0].wavelength
            total = np.sum([np.interp(grid, s.wavelength, s.counts, left=0, right=0) for s in scan.spectra], axis=0)
        return Spectrum(grid, total)

    def transform(self, scan: DispersionScan):
        """Set-points mapped to optical length with the pre-contact calibration."""
        check_is_fitted(self, "L_opt_")
        if self.z_to_length_ is None:
            raise ValueError("no length calibration available (partial result)")
        slope, intercept = self.z_to_length_
        return slope * np.asarray(scan.z_set) + intercept


def dispersion_analyze(scan: DispersionScan, **kwargs) -> DispersionAnalyzer:
    return DispersionAnalyzer(**kwargs).fit(scan)
