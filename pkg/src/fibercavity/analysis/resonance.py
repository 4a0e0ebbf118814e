"""Lorentzian fits of cavity resonances, finesse and dip contrast."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize, signal
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import NumericalError, check_1d, check_same_length
from .records import Spectrum

__all__ = ["LorentzianResonanceFit", "NoPeaksError", "ResonanceParams", "lorentzian", "resonance_fit"]


class NoPeaksError(ValueError):
    pass


def lorentzian(x, offset, amplitude, center, fwhm):
    """``offset + amplitude`` at the centre; negative amplitude gives a dip."""
    hw2 = 0.25 * fwhm * fwhm
    return offset + amplitude * hw2 / ((x - center) ** 2 + hw2)


@dataclass(frozen=True)
class ResonanceParams:
    center: float
    fwhm: float
    amplitude: float
    center_err: float
    fwhm_err: float
    amplitude_err: float


def _model(x, params, n):
    out = np.full_like(x, params[0])
    for i in range(n):
        amp, c, w = params[1 + 3 * i: 4 + 3 * i]
        out += lorentzian(x, 0.0, amp, c, w)
    return out


def _jacobian(x, params, n):
    J = np.empty((x.size, params.size))
    J[:, 0] = 1.0
    for i in range(n):
        amp, c, w = params[1 + 3 * i: 4 + 3 * i]
        d = x - c
        hw2 = 0.25 * w * w
        D = d * d + hw2
        J[:, 1 + 3 * i] = hw2 / D
        J[:, 2 + 3 * i] = amp * hw2 * 2.0 * d / (D * D)
        J[:, 3 + 3 * i] = amp * 0.5 * w * d * d / (D * D)
    return J


class LorentzianResonanceFit(BaseEstimator):
    """Joint fit of a shared offset plus one Lorentzian per detected resonance.

    Parameters
    ----------
    dips : bool
        Look for dips (reflection scans) instead of peaks.
    prominence : float
        Detection threshold as a fraction of the data range.
    max_resonances : int or None
        Keep only the most prominent ones.
    warm_start : bool
        Start from the previous solution instead of peak detection when refitting.
    smooth : int
        Moving-average length (samples) applied before peak detection only.
    min_width : float
        Minimum detected width in samples; rejects single-sample noise spikes.

    Attributes
    ----------
    offset_ : float
    resonances_ : list of ResonanceParams, sorted by centre
    finesse_ : float or None
        Spacing of the two most prominent resonances over their mean FWHM.
    contrast_ : float
        Depth of the most prominent resonance relative to the offset.
    residual_norm_ : float
    nfev_ : int
    """

    def __init__(self, dips=True, prominence=0.2, max_resonances=None, warm_start=False, smooth=5, min_width=2.0):
        self.dips = dips
        self.prominence = prominence
        self.max_resonances = max_resonances
        self.warm_start = warm_start
        self.smooth = smooth
        self.min_width = min_width

    @staticmethod
    def _xy(X, y):
        if isinstance(X, Spectrum):
            return X.wavelength, X.counts
        x = check_1d(X, "x", min_length=5)
        y = check_1d(y, "y", min_length=5)
        check_same_length(("x", x), ("y", y))
        return x, y

    def _seed(self, x, y):
        s = -y if self.dips else y
        # detect on a lightly smoothed copy; threshold at least 8 robust noise sigmas
        s = ndimage.uniform_filter1d(s, self.smooth) if self.smooth > 1 else s
        span = float(np.ptp(s))
        if span == 0:
            raise NoPeaksError("flat data: no resonance to fit")
        noise = 1.4826 * float(np.median(np.abs(np.diff(s) - np.median(np.diff(s))))) / np.sqrt(2.0)
        threshold = max(self.prominence * span, 8.0 * noise)
        idx, props = signal.find_peaks(s, prominence=threshold, width=self.min_width)
        if idx.size == 0:
            raise NoPeaksError(f"no resonance with prominence above {self.prominence:g} of the data range")
        order = np.argsort(props["prominences"])[::-1]
        if self.max_resonances is not None:
            order = order[: self.max_resonances]
        idx = idx[order]
        widths, _, _, _ = signal.peak_widths(s, idx, rel_height=0.5)
        step = np.mean(np.diff(x))
        offset = float(np.median(y))
        seeds = [offset]
        for i, w in zip(idx, widths):
            seeds += [float(y[i] - offset), float(x[i]), float(max(w, 1.0) * step)]
        return np.array(seeds), idx.size

    def fit(self, X, y=None):
        x, yv = self._xy(X, y)
        if self.warm_start and hasattr(self, "_params"):
            q0, n, x0, xs, ys = self._params
        else:
            p0, n = self._seed(x, yv)
            # work in scaled coordinates so the solver sees O(1) numbers
            x0, xs = x.mean(), np.ptp(x)
            ys = max(np.ptp(yv), np.finfo(float).tiny)
            q0 = p0.copy()
            q0[0] /= ys
            q0[1::3] /= ys
            q0[2::3] = (q0[2::3] - x0) / xs
            q0[3::3] /= xs
        u = (x - x0) / xs
        v = yv / ys

        res = optimize.least_squares(lambda q: _model(u, q, n) - v, q0, jac=lambda q: _jacobian(u, q, n),
                                     method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        if not res.success:
            raise NumericalError(
                f"Lorentzian fit did not converge ({res.message}); residual norm {np.linalg.norm(res.fun) * ys:.3g}"
            )
        q = res.x
        dof = max(x.size - q.size, 1)
        s2 = float(res.fun @ res.fun) / dof
        try:
            cov = np.linalg.inv(res.jac.T @ res.jac) * s2
            err = np.sqrt(np.abs(np.diag(cov)))
        except np.linalg.LinAlgError:
            err = np.full(q.size, np.nan)

        self.offset_ = float(q[0] * ys)
        resonances = []
        for i in range(n):
            a, c, w = q[1 + 3 * i: 4 + 3 * i]
            ea, ec, ew = err[1 + 3 * i: 4 + 3 * i]
            resonances.append(ResonanceParams(
                center=float(c * xs + x0), fwhm=float(abs(w) * xs), amplitude=float(a * ys),
                center_err=float(ec * xs), fwhm_err=float(ew * xs), amplitude_err=float(ea * ys),
            ))
        strongest = resonances[:2]
        self.contrast_ = float(abs(strongest[0].amplitude) / abs(self.offset_)) if self.offset_ else float("nan")
        if n >= 2:
            spacing = abs(strongest[1].center - strongest[0].center)
            self.finesse_ = float(spacing / np.mean([r.fwhm for r in strongest]))
            self.spacing_ = spacing
        else:
            self.finesse_ = None
            self.spacing_ = None
        self.resonances_ = sorted(resonances, key=lambda r: r.center)
        self.residual_norm_ = float(np.linalg.norm(res.fun) * ys)
        self.nfev_ = int(res.nfev)
        self._params = (q, n, x0, xs, ys)
        return self

    def predict(self, X):
        check_is_fitted(self, "resonances_")
        x = X.wavelength if isinstance(X, Spectrum) else np.asarray(X, dtype=float)
        q, n, x0, xs, ys = self._params
        return _model((x - x0) / xs, q, n) * ys


def resonance_fit(scan, y=None, **kwargs) -> LorentzianResonanceFit:
    """Fit Lorentzians to a :class:`Spectrum` (or ``x, y`` arrays)."""
    return LorentzianResonanceFit(**kwargs).fit(scan, y)
