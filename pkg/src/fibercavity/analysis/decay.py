"""Mono-exponential decay fits of TCSPC histograms by Poisson maximum likelihood."""

from __future__ import annotations

import numpy as np
from scipy import optimize, signal
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import NumericalError
from .records import DecayHistogram

__all__ = ["DecayFit", "decay_fit", "decay_model", "irf_fwhm"]


def irf_fwhm(irf, bin_width) -> float:
    """Full width at half maximum of a sampled IRF, interpolated between bins."""
    irf = np.asarray(irf, dtype=float)
    peak = int(np.argmax(irf))
    widths = signal.peak_widths(irf, [peak], rel_height=0.5)[0]
    return float(widths[0] * bin_width)


def _binned_exponential(n, dt, tau):
    # photons emitted in bin k after excitation at t=0, integrated over the bin
    k = np.arange(n)
    return tau * (-np.expm1(-dt / tau)) * np.exp(-k * dt / tau)


def decay_model(n_bins, bin_width, amplitude, tau, background, irf=None, t0_index=0):
    """Expected counts per bin.

    Without an IRF the decay starts at bin ``t0_index``; with one, the binned
    exponential is convolved with the IRF normalised to unit sum.
    ``amplitude`` is the peak rate per unit time of the undelayed decay.
    """
    if irf is None:
        decay = np.zeros(n_bins)
        m = n_bins - t0_index
        decay[t0_index:] = _binned_exponential(m, bin_width, tau)
    else:
        kernel = _binned_exponential(n_bins, bin_width, tau)
        decay = signal.fftconvolve(irf / irf.sum(), kernel)[:n_bins]
    return amplitude * decay + background


def _deviance_residuals(y, m):
    # sign(y - m) * sqrt(2 (m - y + y ln(y/m))); the sum of squares is the Poisson deviance
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / m), 0.0)
    d = 2.0 * (m - y + term)
    return np.sign(y - m) * np.sqrt(np.maximum(d, 0.0))


class DecayFit(BaseEstimator):
    """Fit ``A exp(-t/tau) + c_bg`` (optionally IRF-convolved) to a decay histogram.

    Parameters
    ----------
    use_irf : bool
        Reconvolve with the histogram's IRF when present.
    start, stop : float or None
        Fit window in seconds on the histogram's time axis.  The default start
        is the histogram peak plus two IRF FWHM (the peak itself without an IRF);
        the default stop is the last bin.
    tau_bounds : tuple
        Allowed range for the decay time in seconds.

    Attributes
    ----------
    tau_, tau_err_ : float
    amplitude_, background_ : float
        In counts per second of decay time and counts per bin.
    at_bound_ : bool
        The decay time ended within 0.1 % of a bound.
    deviance_, window_ : float, (int, int)
    """

    def __init__(self, use_irf=True, start=None, stop=None, tau_bounds=(1e-12, 1e-6)):
        self.use_irf = use_irf
        self.start = start
        self.stop = stop
        self.tau_bounds = tau_bounds

    def _window(self, hist, irf):
        t = hist.time
        dt = hist.bin_width
        peak = int(np.argmax(hist.counts))
        if self.start is None:
            offset = 2.0 * irf_fwhm(hist.irf, dt) if hist.irf is not None else 0.0
            i0 = int(np.searchsorted(t, t[peak] + offset - 1e-9 * dt))
        else:
            i0 = int(np.searchsorted(t, self.start - 1e-9 * dt))
        i1 = t.size if self.stop is None else int(np.searchsorted(t, self.stop + 1e-9 * dt, side="right"))
        if i1 - i0 < 4:
            raise ValueError(f"fit window [{i0}, {i1}) excludes (almost) all data")
        return i0, i1

    def fit(self, hist: DecayHistogram, y=None):
        if not isinstance(hist, DecayHistogram):
            raise TypeError("DecayFit.fit expects a DecayHistogram")
        irf = hist.irf if (self.use_irf and hist.irf is not None) else None
        i0, i1 = self._window(hist, irf)
        y = hist.counts.astype(float)
        n, dt = y.size, hist.bin_width
        yw = y[i0:i1]
        if yw.sum() <= 0:
            raise ValueError("no counts inside the fit window")
        t0_index = i0 if irf is None else 0
        scale = float(yw.max())
        lo_tau, hi_tau = self.tau_bounds

        def unpack(p):
            return p[0] * scale / dt, p[1] * dt, p[2] * scale

        def expected(p):
            amp, tau, bg = unpack(p)
            return decay_model(n, dt, amp, tau, bg, irf, t0_index)[i0:i1]

        def residuals(p):
            return _deviance_residuals(yw, np.maximum(expected(p), 1e-300))

        # seeds: background from the window tail, tau from a log-linear fit
        tail = yw[-max(3, yw.size // 10):]
        bg0 = max(float(np.mean(tail)), 1e-3 * scale) / scale
        sig = np.maximum(yw - bg0 * scale, 0.0)
        good = sig > 0.1 * sig.max()
        tau0 = dt * max(good.sum(), 3) / 2.3
        if good.sum() >= 3:
            slope = np.polyfit(np.flatnonzero(good) * dt, np.log(sig[good]), 1)[0]
            if slope < 0:
                tau0 = -1.0 / slope
        tau0 = float(np.clip(tau0, lo_tau * 1.01, hi_tau * 0.99))
        tail_peak = float(decay_model(n, dt, 1.0, tau0, 0.0, irf, t0_index)[i0:i1].max())
        amp0 = max(float(sig.max()), 1.0) / max(tail_peak, 1e-300)
        p0 = np.array([amp0 * dt / scale, tau0 / dt, bg0])
        lower = [0.0, lo_tau / dt, 1e-12]
        upper = [np.inf, hi_tau / dt, np.inf]
        p0 = np.clip(p0, np.array(lower) * (1 + 1e-9) + 1e-15, upper)

        res = optimize.least_squares(residuals, p0, bounds=(lower, upper), method="trf", x_scale="jac",
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        if res.status <= 0:
            raise NumericalError(f"decay fit did not converge: {res.message}")
        amp, tau, bg = unpack(res.x)

        # Fisher information of the Poisson likelihood, parameters (amp, tau, bg)
        m = np.maximum(expected(res.x), 1e-300)
        J = np.empty((m.size, 3))
        for j in range(3):
            h = 1e-6 * max(abs(res.x[j]), 1e-12)
            up, dn = res.x.copy(), res.x.copy()
            up[j] += h
            dn[j] -= h
            J[:, j] = (expected(up) - expected(dn)) / (2 * h)
        fisher = J.T @ (J / m[:, None])
        try:
            cov = np.linalg.inv(fisher)
            errs = np.sqrt(np.abs(np.diag(cov)))
        except np.linalg.LinAlgError:
            errs = np.full(3, np.nan)

        self.amplitude_ = amp
        self.tau_ = tau
        self.background_ = bg
        self.amplitude_err_ = errs[0] * scale / dt
        self.tau_err_ = errs[1] * dt
        self.background_err_ = errs[2] * scale
        self.at_bound_ = bool(tau <= lo_tau * 1.001 or tau >= hi_tau * 0.999)
        self.deviance_ = float(res.fun @ res.fun)
        self.window_ = (i0, i1)
        self.used_irf_ = irf is not None
        self.nfev_ = int(res.nfev)
        self._model_args = (n, dt, irf, t0_index)
        return self

    def predict(self, hist: DecayHistogram | None = None):
        """Expected counts on the fitted histogram's full grid."""
        check_is_fitted(self, "tau_")
        n, dt, irf, t0_index = self._model_args
        return decay_model(n, dt, self.amplitude_, self.tau_, self.background_, irf, t0_index)


def decay_fit(hist: DecayHistogram, **kwargs) -> DecayFit:
    """Fit a :class:`DecayFit` to ``hist``; keywords are estimator parameters."""
    return DecayFit(**kwargs).fit(hist)
