"""Measurement records and their CSV representations.

Every record kind has a fixed CSV header; readers reject any other header so
that a column mix-up fails loudly instead of producing wrong physics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._validation import check_1d, check_positive, check_same_length, check_uniform
from ..io import ConfigError

__all__ = [
    "HEADERS",
    "CoincidenceHistogram",
    "DecayHistogram",
    "DispersionScan",
    "Spectrum",
    "TimeTrace",
    "read_record",
    "record_csv",
    "write_record",
]


@dataclass
class TimeTrace:
    """Flank-reflection signal sampled at ``sample_rate``; ``flank_slope`` is intensity per metre."""

    sample_rate: float
    samples: np.ndarray
    flank_slope: float | None = None

    def __post_init__(self):
        self.sample_rate = check_positive(self.sample_rate, "sample_rate")
        self.samples = check_1d(self.samples, "samples", min_length=2)
        if self.flank_slope is not None and not (np.isfinite(self.flank_slope) and self.flank_slope != 0):
            raise ValueError("flank_slope must be finite and non-zero")

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class Spectrum:
    """Counts on a strictly increasing wavelength grid in metres."""

    wavelength: np.ndarray
    counts: np.ndarray
    integration_time: float | None = None

    def __post_init__(self):
        self.wavelength = check_1d(self.wavelength, "wavelength", min_length=2)
        self.counts = check_1d(self.counts, "counts", min_length=2)
        check_same_length(("wavelength", self.wavelength), ("counts", self.counts))
        if np.any(np.diff(self.wavelength) <= 0):
            raise ValueError("wavelength grid must be strictly increasing")


@dataclass
class DispersionScan:
    """Spectra recorded at successive piezo set-points ``z_set`` (metres)."""

    z_set: np.ndarray
    spectra: list
    excitation_wavelength: float | None = None
    step: float | None = None

    def __post_init__(self):
        self.z_set = check_1d(self.z_set, "z_set", min_length=1)
        if len(self.spectra) != self.z_set.size:
            raise ValueError(f"{self.z_set.size} set-points but {len(self.spectra)} spectra")
        d = np.diff(self.z_set)
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("z_set must be strictly monotone")

    @property
    def common_grid(self) -> bool:
        first = self.spectra[0].wavelength
        return all(s.wavelength.shape == first.shape and np.array_equal(s.wavelength, first) for s in self.spectra)


@dataclass
class DecayHistogram:
    """TCSPC histogram on a uniform time grid (bin starts, seconds) with optional IRF."""

    time: np.ndarray
    counts: np.ndarray
    irf: np.ndarray | None = None

    def __post_init__(self):
        self.time = check_1d(self.time, "time", min_length=3)
        self.counts = check_1d(self.counts, "counts", min_length=3)
        check_same_length(("time", self.time), ("counts", self.counts))
        check_uniform(self.time, "time")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")
        if self.irf is not None:
            self.irf = check_1d(self.irf, "irf", min_length=3)
            check_same_length(("time", self.time), ("irf", self.irf))
            if np.any(self.irf < 0) or self.irf.sum() <= 0:
                raise ValueError("irf must be non-negative with positive sum")

    @property
    def bin_width(self) -> float:
        return check_uniform(self.time, "time")


@dataclass
class CoincidenceHistogram:
    """Start-stop coincidences versus delay (seconds) for pulsed excitation."""

    delay: np.ndarray
    counts: np.ndarray
    rep_period: float = field(default=None)

    def __post_init__(self):
        self.delay = check_1d(self.delay, "delay", min_length=3)
        self.counts = check_1d(self.counts, "counts", min_length=3)
        check_same_length(("delay", self.delay), ("counts", self.counts))
        check_uniform(self.delay, "delay")
        if self.rep_period is None:
            raise ValueError("rep_period is required")
        self.rep_period = check_positive(self.rep_period, "rep_period")

    @property
    def bin_width(self) -> float:
        return check_uniform(self.delay, "delay")


HEADERS = {
    "trace": "time_s,intensity",
    "spectrum": "wavelength_nm,counts",
    "dispersion": "z_set_nm,wavelength_nm,counts",
    "decay": "time_ns,counts",
    "decay_irf": "time_ns,counts,irf",
    "g2": "delay_ns,coincidences",
}

_KIND_OF = {
    TimeTrace: "trace",
    Spectrum: "spectrum",
    DispersionScan: "dispersion",
    DecayHistogram: "decay",
    CoincidenceHistogram: "g2",
}


def _table(record):
    kind = _KIND_OF.get(type(record))
    if kind is None:
        raise TypeError(f"cannot serialise {type(record).__name__}")
    if kind == "trace":
        return HEADERS[kind], np.column_stack([record.time, record.samples])
    if kind == "spectrum":
        return HEADERS[kind], np.column_stack([record.wavelength * 1e9, record.counts])
    if kind == "dispersion":
        rows = [
            np.column_stack([np.full(s.wavelength.size, z * 1e9), s.wavelength * 1e9, s.counts])
            for z, s in zip(record.z_set, record.spectra)
        ]
        return HEADERS[kind], np.vstack(rows)
    if kind == "decay":
        if record.irf is not None:
            return HEADERS["decay_irf"], np.column_stack([record.time * 1e9, record.counts, record.irf])
        return HEADERS[kind], np.column_stack([record.time * 1e9, record.counts])
    return HEADERS[kind], np.column_stack([record.delay * 1e9, record.counts])


def record_csv(record) -> str:
    """CSV text of a record with its canonical header; byte-stable."""
    header, table = _table(record)
    lines = [header]
    lines.extend(",".join(f"{v:.12g}" for v in row) for row in table)
    return "\n".join(lines) + "\n"


def write_record(record, path) -> Path:
    """Write a record as CSV with its canonical header."""
    path = Path(path)
    path.write_text(record_csv(record))
    return path


def _load(path, expected):
    path = Path(path)
    try:
        with path.open() as fh:
            header = fh.readline().strip()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", path) from exc
    if header not in expected:
        raise ConfigError(f"unexpected CSV header {header!r}; expected {' or '.join(map(repr, expected))}", path, 1)
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"malformed CSV data: {exc}", path) from exc
    if data.shape[0] == 0:
        raise ConfigError("CSV has no data rows", path)
    if data.shape[1] != header.count(",") + 1:
        raise ConfigError(f"expected {header.count(',') + 1} columns, got {data.shape[1]}", path)
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise ConfigError("non-finite value", path, bad + 2)
    return header, data


def read_record(path, kind: str, **meta):
    """Read a CSV record of ``kind`` (``trace``, ``spectrum``, ``dispersion``, ``decay``, ``g2``).

    Quantities not stored in the CSV are passed as keywords: ``flank_slope``
    for traces, ``rep_period`` (seconds) for g2 histograms.
    """
    try:
        if kind == "trace":
            _, d = _load(path, [HEADERS["trace"]])
            t = d[:, 0]
            rate = 1.0 / check_uniform(t, "time_s", rtol=1e-6)
            return TimeTrace(rate, d[:, 1], meta.get("flank_slope"))
        if kind == "spectrum":
            _, d = _load(path, [HEADERS["spectrum"]])
            return Spectrum(d[:, 0] * 1e-9, d[:, 1])
        if kind == "dispersion":
            _, d = _load(path, [HEADERS["dispersion"]])
            z_values = np.unique(d[:, 0])
            bounds = [0, *(np.flatnonzero(np.diff(d[:, 0]) != 0) + 1), d.shape[0]]
            z_set, spectra = [], []
            for a, b in itertools.pairwise(bounds):
                z_set.append(d[a, 0] * 1e-9)
                spectra.append(Spectrum(d[a:b, 1] * 1e-9, d[a:b, 2]))
            if len(z_set) != z_values.size:
                raise ConfigError("rows of one z_set value must be contiguous", path)
            return DispersionScan(np.array(z_set), spectra)
        if kind == "decay":
            header, d = _load(path, [HEADERS["decay"], HEADERS["decay_irf"]])
            irf = d[:, 2] if header == HEADERS["decay_irf"] else None
            return DecayHistogram(d[:, 0] * 1e-9, d[:, 1], irf)
        if kind == "g2":
            _, d = _load(path, [HEADERS["g2"]])
            return CoincidenceHistogram(d[:, 0] * 1e-9, d[:, 1], meta.get("rep_period"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), path) from exc
    raise ValueError(f"unknown record kind {kind!r}; expected one of trace, spectrum, dispersion, decay, g2")
