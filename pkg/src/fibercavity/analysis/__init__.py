"""Analysis of measurement records plus a seeded synthetic-data generator."""

from .decay import DecayFit, decay_fit
from .dispersion import ContactReport, DispersionAnalyzer, dispersion_analyze
from .g2 import G2Analyzer, g2_raw
from .noise import NoiseSpectrum, flank_slope, noise_spectrum
from .records import (
    CoincidenceHistogram,
    DecayHistogram,
    DispersionScan,
    Spectrum,
    TimeTrace,
    read_record,
    write_record,
)
from .resonance import LorentzianResonanceFit, resonance_fit
from .synth import generate

__all__ = [
    "CoincidenceHistogram",
    "ContactReport",
    "DecayFit",
    "DecayHistogram",
    "DispersionAnalyzer",
    "DispersionScan",
    "G2Analyzer",
    "LorentzianResonanceFit",
    "NoiseSpectrum",
    "Spectrum",
    "TimeTrace",
    "decay_fit",
    "dispersion_analyze",
    "flank_slope",
    "g2_raw",
    "generate",
    "noise_spectrum",
    "read_record",
    "resonance_fit",
    "write_record",
]
