"""Seeded synthetic records with documented forward models.

Every generator draws from its own ``numpy.random.Generator`` so a fixed seed
gives byte-identical output.  Parameters are SI floats; see the ``*_DEFAULTS``
dictionaries for names and default values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..metrics import impedance_contrast
from .records import (
    CoincidenceHistogram,
    DecayHistogram,
    DispersionScan,
    Spectrum,
    TimeTrace,
    write_record,
)
from .resonance import lorentzian

__all__ = ["DEFAULTS", "FIXTURES", "KINDS", "generate", "write_fixtures"]

NOISE_DEFAULTS = {
    "sample_rate": 2000.0,
    "duration": 10.0,
    "sigma": 56e-12,         # rms displacement in the band; ignored when psd_level is set
    "psd_level": None,       # flat displacement PSD in m^2/Hz (band-limited, not rescaled)
    "band": (10.0, 200.0),
    "flank_slope": 1e9,      # intensity per metre
    "offset": 0.5,
    "detector_noise": 0.0,   # white intensity noise rms
}

RESONANCE_DEFAULTS = {
    "center": 1310e-9,
    "fsr": 1.0e-9,           # dip spacing on the wavelength axis
    "finesse": 1695.0,
    "contrast": None,        # dip depth / offset; from the loss triple when None
    "losses": (1000e-6, 1000e-6, 1864e-6),  # fiber transmission, fiber total, semiconductor total
    "offset": 1.0,
    "snr": 20.0,             # dip depth over additive noise rms; inf for noiseless
    "points_per_fwhm": 12.0,
    "span_fsr": 1.4,
}

DISPERSION_DEFAULTS = {
    "L_start": 10.6e-6,
    "L_contact": 9.93e-6,
    "step": 2e-9,            # optical-length change per scan step before contact
    "post_contact_steps": 25,
    "saturation": 0.05,      # residual length change per step after contact, relative
    "z_start": 0.0,
    "wavelength_min": 1250e-9,
    "wavelength_max": 1400e-9,
    "bin_width": 0.1e-9,
    "mode_fwhm": 0.5e-9,     # apparent (spectrometer-limited) mode width
    "lines": ((1304.4e-9, 0.3e-9, 1.0), (1306.9e-9, 0.3e-9, 0.7)),  # centre, FWHM, relative height
    "background": 0.3,       # broadband emission relative level
    "peak_counts": 2000.0,
    "dark_counts": 2.0,
    "poisson": True,
}

DECAY_DEFAULTS = {
    "tau": 1.007e-9,
    "bin_width": 4e-12,
    "n_bins": 2500,
    "t0": 1.0e-9,            # IRF centre
    "irf_fwhm": 50e-12,      # Gaussian IRF; 0 gives a delta IRF at t0
    "total_counts": 2e5,
    "background": 2.0,       # counts per bin
    "poisson": True,
    "include_irf": True,
}

G2_DEFAULTS = {
    "rep_period": 1.0 / 76e6,
    "bin_width": 0.1e-9,
    "n_peaks": 40,           # comb peaks on each side of zero delay
    "peak_fwhm": 1.0e-9,
    "side_area": 500.0,
    "g2_zero": 0.31,         # central / uncorrelated side area
    "on_fraction": 1.0,      # blinking: bunching amplitude b = (1 - p) / p
    "bunching_time": 100e-9,
    "poisson": False,
}

DEFAULTS = {
    "noise": NOISE_DEFAULTS,
    "resonance": RESONANCE_DEFAULTS,
    "dispersion": DISPERSION_DEFAULTS,
    "decay": DECAY_DEFAULTS,
    "g2": G2_DEFAULTS,
}
KINDS = tuple(DEFAULTS)


def _params(kind, params):
    base = dict(DEFAULTS[kind])
    unknown = set(params or {}) - set(base)
    if unknown:
        raise ValueError(f"unknown {kind} parameter(s): {', '.join(sorted(unknown))}")
    base.update(params or {})
    return base


def _noise(p, rng):
    fs, n = p["sample_rate"], round(p["duration"] * p["sample_rate"])
    f = np.fft.rfftfreq(n, 1.0 / fs)
    lo, hi = p["band"]
    inband = (f >= lo) & (f <= hi) & (f > 0)
    spec = np.zeros(f.size, dtype=complex)
    spec[inband] = rng.normal(size=inband.sum()) + 1j * rng.normal(size=inband.sum())
    x = np.fft.irfft(spec, n)
    if p["psd_level"] is not None:
        # each complex bin carries variance 2/n^2 after irfft; match the one-sided PSD
        df = fs / n
        x *= np.sqrt(p["psd_level"] * df * n * n / 4.0)
    else:
        x *= p["sigma"] / np.std(x)
    y = p["offset"] + p["flank_slope"] * x
    if p["detector_noise"]:
        y = y + rng.normal(scale=p["detector_noise"], size=n)
    return TimeTrace(fs, y, p["flank_slope"])


def _resonance(p, rng):
    fwhm = p["fsr"] / p["finesse"]
    contrast = p["contrast"]
    if contrast is None:
        contrast = impedance_contrast(*p["losses"])
    depth = contrast * p["offset"]
    span = p["span_fsr"] * p["fsr"]
    n = int(np.ceil(span / fwhm * p["points_per_fwhm"]))
    x = p["center"] + np.linspace(-0.5 * span, 0.5 * span, n)
    c1, c2 = p["center"] - 0.5 * p["fsr"], p["center"] + 0.5 * p["fsr"]
    y = p["offset"] + lorentzian(x, 0.0, -depth, c1, fwhm) + lorentzian(x, 0.0, -depth, c2, fwhm)
    if np.isfinite(p["snr"]):
        y = y + rng.normal(scale=depth / p["snr"], size=n)
    return Spectrum(x, y)


def _dispersion(p, rng):
    grid = np.arange(p["wavelength_min"], p["wavelength_max"], p["bin_width"])
    n_pre = int(np.floor((p["L_start"] - p["L_contact"]) / p["step"])) + 1
    L = p["L_start"] - p["step"] * np.arange(n_pre)
    post = L[-1] - p["step"] * p["saturation"] * np.arange(1, p["post_contact_steps"] + 1)
    L = np.concatenate([L, post])
    z = p["z_start"] + p["step"] * np.arange(L.size)

    source = np.full(grid.size, p["background"])
    for center, width, height in p["lines"]:
        source += lorentzian(grid, 0.0, height, center, width)
    sig = p["mode_fwhm"] / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    spectra = []
    for length in L:
        m_lo = int(np.ceil(2.0 * length / grid[-1])) - 1
        m_hi = int(np.floor(2.0 * length / grid[0])) + 1
        transmission = np.zeros(grid.size)
        for m in range(max(m_lo, 1), m_hi + 1):
            transmission += np.exp(-0.5 * ((grid - 2.0 * length / m) / sig) ** 2)
        mean = p["dark_counts"] + p["peak_counts"] * transmission * source / source.max()
        counts = rng.poisson(mean).astype(float) if p["poisson"] else mean
        spectra.append(Spectrum(grid.copy(), counts))
    scan = DispersionScan(z, spectra, step=p["step"])
    # ground truth for closed-loop checks; not part of the CSV form
    scan.true_length = L
    scan.contact_index = n_pre - 1
    return scan


def _decay(p, rng):
    dt, n = p["bin_width"], int(p["n_bins"])
    t = np.arange(n) * dt
    if p["irf_fwhm"] > 0:
        s = p["irf_fwhm"] / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        irf = np.exp(-0.5 * ((t + 0.5 * dt - p["t0"]) / s) ** 2)
    else:
        irf = np.zeros(n)
        irf[round(p["t0"] / dt)] = 1.0
    irf /= irf.sum()
    kernel = p["tau"] * (-np.expm1(-dt / p["tau"])) * np.exp(-np.arange(n) * dt / p["tau"])
    shape = np.convolve(irf, kernel)[:n]
    mean = p["total_counts"] * shape / shape.sum() + p["background"]
    counts = rng.poisson(mean).astype(float) if p["poisson"] else mean
    irf_counts = irf * 1e4 if p["include_irf"] else None
    return DecayHistogram(t, counts, irf_counts)


def _g2(p, rng):
    T, dt, K = p["rep_period"], p["bin_width"], int(p["n_peaks"])
    half_span = (K + 0.5) * T
    edges = np.arange(-half_span, half_span + 0.5 * dt, dt)
    delay = edges[:-1]
    centers = delay + 0.5 * dt
    b = (1.0 - p["on_fraction"]) / p["on_fraction"]
    s = p["peak_fwhm"] / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    mean = np.zeros(centers.size)
    for k in range(-K, K + 1):
        if k == 0:
            area = p["g2_zero"] * p["side_area"]
        else:
            area = p["side_area"] * (1.0 + b * np.exp(-abs(k) * T / p["bunching_time"]))
        # shape truncated to the +-T/4 integration window and normalised there,
        # so the window sums reproduce the areas exactly
        inside = np.abs(centers - k * T) <= 0.25 * T
        w = np.exp(-0.5 * ((centers[inside] - k * T) / s) ** 2)
        mean[inside] += area * w / w.sum()
    counts = rng.poisson(mean).astype(float) if p["poisson"] else mean
    return CoincidenceHistogram(delay, counts, T)


_GENERATORS = {
    "noise": _noise,
    "resonance": _resonance,
    "dispersion": _dispersion,
    "decay": _decay,
    "g2": _g2,
}


def generate(kind: str, params: dict | None = None, seed: int = 0):
    """Synthetic record of ``kind`` (one of :data:`KINDS`).

    Forward models:

    ``noise``       band-limited Gaussian displacement on a linear flank
    ``resonance``   two Lorentzian dips one FSR apart, additive Gaussian noise
    ``dispersion``  modes at ``2L/m`` (Gaussian, spectrometer-limited) filtering a
                    broadband source with emitter lines; the length follows the
                    set-point linearly until contact and then saturates
    ``decay``       binned exponential convolved with a Gaussian IRF, plus
                    background, Poisson sampled
    ``g2``          comb of Gaussian peaks with a suppressed central peak and an
                    optional blinking envelope
    """
    if kind not in _GENERATORS:
        raise ValueError(f"unknown record kind {kind!r}; expected one of {', '.join(KINDS)}")
    rng = np.random.default_rng(seed)
    return _GENERATORS[kind](_params(kind, params), rng)



# bundled decay fixtures: (kind, parameters, seed) per file name
FIXTURES = {
    "decay_qd_a_ref.csv": ("decay", {"tau": 1.007e-9}, 101),
    "decay_qd_a_cav.csv": ("decay", {"tau": 0.409e-9}, 102),
    "decay_qd_b_ref.csv": ("decay", {"tau": 0.632e-9}, 103),
    "decay_qd_b_cav.csv": ("decay", {"tau": 0.433e-9}, 104),
    "decay_qd_c_ref.csv": ("decay", {"tau": 0.821e-9}, 105),
    "decay_qd_c_cav.csv": ("decay", {"tau": 0.521e-9}, 106),
}


def write_fixtures(directory) -> list:
    """Regenerate the bundled fixture files into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_record(generate(kind, params, seed), directory / name)
            for name, (kind, params, seed) in FIXTURES.items()]
