"""Cavity-length noise from a reflection trace recorded on a resonance flank."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .records import TimeTrace

__all__ = ["NoiseSpectrum", "ShortTraceWarning", "flank_slope", "noise_spectrum"]


class ShortTraceWarning(UserWarning):
    """The trace is too short to resolve the lowest requested frequency."""


def flank_slope(depth: float, fwhm_length: float) -> float:
    """Steepest slope (intensity per metre) of a Lorentzian dip of given depth.

    ``fwhm_length`` is the dip width expressed as a cavity-length change,
    ``lambda / (2 F)`` for finesse ``F``.  The maximum of the derivative sits at
    ``fwhm / (2 sqrt 3)`` from the centre.
    """
    if not fwhm_length > 0:
        raise ValueError("fwhm_length must be > 0")
    return depth * 3.0 * np.sqrt(3.0) / (4.0 * fwhm_length)


def _one_sided_psd(x, fs, window):
    # periodogram over the full trace; density scaling divides by sum(w^2), so
    # sum(psd) * df equals the window-weighted variance (Parseval)
    f, p = signal.periodogram(x, fs=fs, window=window, detrend="constant", scaling="density")
    return f, p


class NoiseSpectrum(BaseEstimator):
    """Displacement power spectrum and cumulative RMS of a flank trace.

    Parameters
    ----------
    flank_slope : float or None
        Intensity change per metre of cavity length.  Overrides the slope
        stored on the trace.
    window : str
        Any window name accepted by :func:`scipy.signal.get_window`.
    band : tuple or None
        ``(f_low, f_high)`` in Hz for the reported band sigma; the full band
        when ``None``.
    baseline : TimeTrace or None
        Off-resonance trace whose PSD is removed bin-wise before accumulation
        (negative differences are floored at zero).

    Attributes
    ----------
    frequencies_, psd_ : arrays
        One-sided displacement PSD in m^2/Hz.
    cumulative_rms_ : array
        sqrt of the running integral of ``psd_``.
    psd_corrected_, cumulative_rms_corrected_ : arrays or None
        Same after baseline removal.
    sigma_ : float
        RMS displacement in ``band`` (baseline-corrected when a baseline is given).
    """

    def __init__(self, flank_slope=None, window="hann", band=None, baseline=None):
        self.flank_slope = flank_slope
        self.window = window
        self.band = band
        self.baseline = baseline

    def _slope(self, trace):
        slope = self.flank_slope if self.flank_slope is not None else trace.flank_slope
        if slope is None:
            raise ValueError("flank slope calibration missing: pass flank_slope or attach it to the trace")
        if not (np.isfinite(slope) and slope != 0):
            raise ValueError(f"flank_slope must be finite and non-zero, got {slope!r}")
        return float(slope)

    def _displacement_psd(self, trace, slope):
        x = (trace.samples - trace.samples.mean()) / slope
        return _one_sided_psd(x, trace.sample_rate, self.window)

    def fit(self, trace: TimeTrace, y=None):
        if not isinstance(trace, TimeTrace):
            raise TypeError("NoiseSpectrum.fit expects a TimeTrace")
        slope = self._slope(trace)
        f, p = self._displacement_psd(trace, slope)
        df = f[1] - f[0]
        self.frequencies_ = f
        self.psd_ = p
        self.cumulative_rms_ = np.sqrt(np.cumsum(p) * df)
        self.psd_corrected_ = None
        self.cumulative_rms_corrected_ = None
        if self.baseline is not None:
            fb, pb = self._displacement_psd(self.baseline, slope)
            pb = np.interp(f, fb, pb)
            self.psd_corrected_ = np.maximum(p - pb, 0.0)
            self.cumulative_rms_corrected_ = np.sqrt(np.cumsum(self.psd_corrected_) * df)

        lo, hi = (f[0], f[-1]) if self.band is None else self.band
        if not lo < hi:
            raise ValueError(f"band must satisfy low < high, got {self.band}")
        if self.band is not None and lo > 0 and trace.duration < 10.0 / lo:
            warnings.warn(
                f"trace of {trace.duration:.3g} s is shorter than 10 periods of {lo:g} Hz",
                ShortTraceWarning,
                stacklevel=2,
            )
        self.sigma_ = self.band_sigma(lo, hi)
        self.duration_ = trace.duration
        return self

    def band_sigma(self, f_low, f_high, corrected=None) -> float:
        """RMS displacement from bins with ``f_low <= f <= f_high``."""
        check_is_fitted(self, "psd_")
        if corrected is None:
            corrected = self.psd_corrected_ is not None
        p = self.psd_corrected_ if corrected else self.psd_
        if p is None:
            raise ValueError("no baseline was supplied, corrected PSD unavailable")
        mask = (self.frequencies_ >= f_low) & (self.frequencies_ <= f_high)
        df = self.frequencies_[1] - self.frequencies_[0]
        return float(np.sqrt(np.sum(p[mask]) * df))

    def transform(self, trace: TimeTrace):
        """Displacement time series in metres, using the fitted calibration."""
        return (trace.samples - trace.samples.mean()) / self._slope(trace)


def noise_spectrum(trace: TimeTrace, **kwargs) -> NoiseSpectrum:
    """Fit a :class:`NoiseSpectrum` to ``trace``; keywords are estimator parameters."""
    return NoiseSpectrum(**kwargs).fit(trace)
