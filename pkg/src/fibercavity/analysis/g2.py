"""Raw second-order correlation from pulsed start-stop histograms."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import optimize, signal
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .records import CoincidenceHistogram

__all__ = ["G2Analyzer", "PeakOverlapWarning", "g2_raw"]


class PeakOverlapWarning(UserWarning):
    """Neighbouring coincidence peaks are closer than four peak widths."""


class G2Analyzer(BaseEstimator):
    """Peak-area analysis of a pulsed coincidence histogram.

    Parameters
    ----------
    n_side_peaks : int
        Number of side peaks (split evenly between negative and positive
        delays) whose mean area sets the uncorrelated level.
    window : float or None
        Half-width of each integration window in seconds; ``rep_period / 4``
        by default.
    fit_envelope : bool
        Fit ``A (1 + b exp(-|t| / tau_b))`` to all side-peak areas to estimate
        the fraction of time the emitter is optically active, ``1 / (1 + b)``.

    Attributes
    ----------
    g2_raw_ : float
    central_area_, side_mean_ : float
    peak_delays_, peak_areas_ : arrays
        Every complete comb peak in the histogram.
    on_fraction_, bunching_time_ : float or None
    peak_fwhm_ : float
    """

    def __init__(self, n_side_peaks=10, window=None, fit_envelope=True):
        self.n_side_peaks = n_side_peaks
        self.window = window
        self.fit_envelope = fit_envelope

    def fit(self, hist: CoincidenceHistogram, y=None):
        if not isinstance(hist, CoincidenceHistogram):
            raise TypeError("G2Analyzer.fit expects a CoincidenceHistogram")
        if self.n_side_peaks < 2 or self.n_side_peaks % 2:
            raise ValueError(f"n_side_peaks must be a positive even number, got {self.n_side_peaks}")
        T = hist.rep_period
        half = 0.25 * T if self.window is None else float(self.window)
        if not 0 < half <= 0.5 * T:
            raise ValueError("integration half-window must lie in (0, rep_period/2]")
        d, c = hist.delay, hist.counts
        dt = hist.bin_width
        if T < 4 * dt:
            raise ValueError(f"rep_period {T:g} s is not resolved by {dt:g} s bins")
        centers = d + 0.5 * dt

        k_lo = int(np.ceil((centers[0] + half) / T))
        k_hi = int(np.floor((centers[-1] - half) / T))
        ks = np.arange(k_lo, k_hi + 1)
        if 0 not in ks:
            raise ValueError("histogram does not contain the zero-delay peak")
        areas = np.array([c[np.abs(centers - k * T) <= half].sum() for k in ks], dtype=float)
        need = self.n_side_peaks // 2
        if -need not in ks or need not in ks:
            raise ValueError(f"{self.n_side_peaks} side peaks requested but the histogram spans only "
                             f"{min(-k_lo, k_hi)} on each side")
        side = np.array([areas[ks == k][0] for k in range(-need, need + 1) if k != 0])
        self.central_area_ = float(areas[ks == 0][0])
        self.side_mean_ = float(side.mean())
        if self.side_mean_ <= 0:
            raise ValueError("side peaks contain no coincidences")
        self.g2_raw_ = self.central_area_ / self.side_mean_
        self.g2_raw_err_ = self.g2_raw_ * float(np.sqrt(1.0 / max(self.central_area_, 1.0) + 1.0 / side.sum()))
        self.peak_delays_ = ks * T
        self.peak_areas_ = areas

        # peak width from the comb folded onto one period
        phase = np.mod(centers + 0.5 * T, T) - 0.5 * T
        nb = max(round(T / dt), 4)
        folded, edges = np.histogram(phase, bins=nb, range=(-0.5 * T, 0.5 * T), weights=c * (np.round(centers / T) != 0))
        folded = np.asarray(folded, dtype=float)
        centre_bin = int(np.argmax(folded))
        self.peak_fwhm_ = float(signal.peak_widths(folded, [centre_bin], rel_height=0.5)[0][0] * (edges[1] - edges[0]))
        if T < 4.0 * self.peak_fwhm_:
            warnings.warn(
                f"peaks overlap: period {T:g} s < 4 x peak FWHM {self.peak_fwhm_:g} s; raw g2 still reported",
                PeakOverlapWarning,
                stacklevel=2,
            )

        self.on_fraction_ = None
        self.bunching_time_ = None
        self.bunching_amplitude_ = None
        if self.fit_envelope:
            self._fit_envelope(ks, areas, T)
        return self

    def _fit_envelope(self, ks, areas, T):
        mask = ks != 0
        t = np.abs(ks[mask] * T)
        a = areas[mask]
        if t.size < 4:
            return
        far = float(np.mean(a[t >= np.quantile(t, 0.75)]))
        near = float(np.mean(a[t <= np.quantile(t, 0.25)]))
        b0 = max(near / far - 1.0, 1e-3)
        p0 = [far, b0, 0.2 * t.max()]

        def model(p):
            return p[0] * (1.0 + p[1] * np.exp(-t / p[2]))

        res = optimize.least_squares(lambda p: (model(p) - a) / np.sqrt(np.maximum(a, 1.0)), p0,
                                     bounds=([0.0, 0.0, T * 1e-3], [np.inf, np.inf, np.inf]),
                                     xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=10000)
        if res.success:
            self.bunching_amplitude_ = float(res.x[1])
            self.bunching_time_ = float(res.x[2])
            self.on_fraction_ = 1.0 / (1.0 + res.x[1])

    @property
    def normalized_areas_(self):
        """Peak areas over the side-peak mean: the pulsed g2 comb."""
        check_is_fitted(self, "g2_raw_")
        return self.peak_areas_ / self.side_mean_


def g2_raw(hist: CoincidenceHistogram, n_side_peaks=10, **kwargs) -> G2Analyzer:
    """Analyze ``hist`` and return the fitted :class:`G2Analyzer`."""
    return G2Analyzer(n_side_peaks=n_side_peaks, **kwargs).fit(hist)
