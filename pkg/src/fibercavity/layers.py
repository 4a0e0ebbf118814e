"""Transfer-matrix engine for planar multilayer stacks.

Conventions
-----------
Time dependence is ``exp(-i*omega*t)``; a plane wave travelling towards +z is
``exp(+i*k*z)``.  Absorption therefore corresponds to ``Im(n) >= 0``.  The
reflection amplitude ``r`` is the ratio of tangential electric fields measured
at the first interface of the stack (the boundary between the incident medium
and the first layer).  For oblique incidence the same convention is used for
both polarizations, so a perfect conductor gives ``r_s = r_p = -1``.

All lengths are in metres.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from ._validation import check_positive

__all__ = [
    "AmplitudeResponse",
    "FieldProfile",
    "Layer",
    "LayerStack",
    "PenetrationDepth",
    "PenetrationDepthWarning",
    "effective_length",
    "field_profile",
    "optical_length",
    "penetration_depth",
    "quarter_wave_pairs",
    "reflection_coefficients",
    "solve_stack",
]


class PenetrationDepthWarning(UserWarning):
    """The group delay of a mirror could not be evaluated reliably."""


@dataclass(frozen=True)
class Layer:
    label: str
    thickness: float
    refractive_index: complex

    def __post_init__(self):
        d = float(self.thickness)
        if not math.isfinite(d) or d <= 0:
            raise ValueError(f"layer {self.label!r}: thickness must be finite and > 0, got {d!r}")
        n = complex(self.refractive_index)
        if not (n.real > 0 and n.imag >= 0):
            raise ValueError(
                f"layer {self.label!r}: refractive index needs Re(n) > 0 and Im(n) >= 0, got {n!r}"
            )
        object.__setattr__(self, "thickness", d)
        object.__setattr__(self, "refractive_index", n)


@dataclass(frozen=True)
class LayerStack:
    """Ordered layers between a semi-infinite incident medium and an exit medium."""

    incident_medium: complex
    layers: tuple
    exit_medium: complex
    name: str = ""
    provenance: str = ""

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a layer stack needs at least one layer")
        for layer in layers:
            if not isinstance(layer, Layer):
                raise TypeError(f"expected Layer instances, got {type(layer).__name__}")
        for label, n in (("incident_medium", self.incident_medium), ("exit_medium", self.exit_medium)):
            n = complex(n)
            if not (n.real > 0 and n.imag >= 0):
                raise ValueError(f"{label} needs Re(n) > 0 and Im(n) >= 0, got {n!r}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "incident_medium", complex(self.incident_medium))
        object.__setattr__(self, "exit_medium", complex(self.exit_medium))

    @property
    def thicknesses(self) -> np.ndarray:
        return np.array([layer.thickness for layer in self.layers])

    @property
    def indices(self) -> np.ndarray:
        return np.array([layer.refractive_index for layer in self.layers], dtype=complex)

    @property
    def total_thickness(self) -> float:
        return float(self.thicknesses.sum())

    @property
    def is_lossless(self) -> bool:
        all_n = np.concatenate([[self.incident_medium, self.exit_medium], self.indices])
        return bool(np.all(all_n.imag == 0))

    def boundaries(self) -> np.ndarray:
        """Interface positions, starting with 0 at the first interface."""
        return np.concatenate([[0.0], np.cumsum(self.thicknesses)])

    def reversed(self) -> LayerStack:
        """The same stack seen from the exit side."""
        return LayerStack(
            incident_medium=self.exit_medium,
            layers=tuple(reversed(self.layers)),
            exit_medium=self.incident_medium,
            name=self.name,
            provenance=self.provenance,
        )

    def slice(self, start: int, stop: int | None = None, *, incident=None, exit=None) -> LayerStack:
        """Sub-stack of layers ``start:stop`` with optionally overridden ambients."""
        layers = self.layers[start:stop]
        if incident is None:
            incident = self.layers[start - 1].refractive_index if start > 0 else self.incident_medium
        if exit is None:
            end = len(self.layers) if stop is None else stop
            exit = self.layers[end].refractive_index if end < len(self.layers) else self.exit_medium
        return LayerStack(incident, layers, exit, name=self.name, provenance=self.provenance)

    def index_of(self, label: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.label == label:
                return i
        raise KeyError(f"no layer labelled {label!r}")


def quarter_wave_pairs(n_first, n_second, wavelength, pairs, labels=("H", "L")):
    """Layers of ``pairs`` quarter-wave pairs designed for ``wavelength``."""
    out = []
    for _ in range(int(pairs)):
        for n, label in zip((n_first, n_second), labels):
            out.append(Layer(label, wavelength / (4.0 * complex(n).real), n))
    return out


@dataclass(frozen=True)
class AmplitudeResponse:
    wavelength: float
    r: complex
    t: complex
    R: float
    T: float
    A: float


@dataclass(frozen=True)
class FieldProfile:
    """|E(z)|^2 through a stack, normalised to a unit incident amplitude.

    ``z`` is non-decreasing: every interface is sampled twice, once with the
    index on either side, so that piecewise integration with the trapezoid
    rule never straddles an index step.  ``z = 0`` is the first interface.
    """

    z: np.ndarray
    intensity: np.ndarray
    index: np.ndarray
    labels: np.ndarray
    wavelength: float
    reference_label: str
    reference_index: float
    reference_intensity: float

    def __post_init__(self):
        if not (len(self.z) == len(self.intensity) == len(self.index) == len(self.labels)):
            raise ValueError("field profile arrays must have equal length")
        if np.any(np.diff(self.z) < 0):
            raise ValueError("z grid must be non-decreasing")
        if np.any(self.intensity < 0):
            raise ValueError("intensity must be >= 0")


def _kz(n, k0, u_ref):
    """Normal wavevector component with Im(kz) >= 0 (decaying branch)."""
    kz = k0 * np.sqrt(n * n - u_ref * u_ref + 0j)
    return np.where(kz.imag < 0, -kz, kz)


def _amplitudes(stack: LayerStack, wavelength: float, u=0.0, polarization="s"):
    """Forward/backward amplitudes in every layer for unit incident amplitude.

    ``u`` is the in-plane wavevector in units of ``k0 * n_incident`` (the sine
    of the propagation angle in the incident medium; ``u > 1`` is evanescent).
    Returns ``(r, t, A, B, kz, eta)`` where ``A[j], B[j]`` are the amplitudes at
    the left boundary of layer ``j`` and ``kz, eta`` include both ambients.
    """
    k0 = 2.0 * math.pi / wavelength
    n_all = np.concatenate([[stack.incident_medium], stack.indices, [stack.exit_medium]])
    u_ref = np.asarray(u, dtype=float) * stack.incident_medium.real
    kz = np.array([_kz(n, k0, u_ref) for n in n_all])
    if polarization == "s":
        eta = kz
    elif polarization == "p":
        eta = (n_all.reshape((-1,) + (1,) * np.ndim(u)) ** 2) / kz
    else:
        raise ValueError(f"polarization must be 's' or 'p', got {polarization!r}")

    d = stack.thicknesses
    n_layers = len(d)
    shape = np.shape(u)
    A = np.empty((n_layers,) + shape, dtype=complex)
    B = np.empty((n_layers,) + shape, dtype=complex)

    # back-propagate from the exit medium where only the outgoing wave exists
    a_next = np.ones(shape, dtype=complex)
    b_next = np.zeros(shape, dtype=complex)
    for j in range(n_layers, -1, -1):
        ratio = eta[j + 1] / eta[j]
        s = a_next + b_next
        diff = ratio * (a_next - b_next)
        a_right = 0.5 * (s + diff)
        b_right = 0.5 * (s - diff)
        if j == 0:
            a_next, b_next = a_right, b_right
            break
        phase = np.exp(1j * kz[j] * d[j - 1])
        a_left = a_right / phase
        b_left = b_right * phase
        A[j - 1] = a_left
        B[j - 1] = b_left
        a_next, b_next = a_left, b_left

    a0, b0 = a_next, b_next
    r = b0 / a0
    t = 1.0 / a0
    return r, t, A / a0, B / a0, kz, eta


def solve_stack(stack: LayerStack, wavelength: float) -> AmplitudeResponse:
    """Reflection/transmission amplitudes and energy coefficients at normal incidence."""
    wavelength = check_positive(wavelength, "wavelength")
    r, t, *_ = _amplitudes(stack, wavelength)
    r, t = complex(r), complex(t)
    R = abs(r) ** 2
    T = stack.exit_medium.real / stack.incident_medium.real * abs(t) ** 2
    # absorptance is exactly zero for lossless stacks; otherwise clip roundoff below zero
    A = 0.0 if stack.is_lossless else max(1.0 - R - T, 0.0)
    return AmplitudeResponse(wavelength=wavelength, r=r, t=t, R=R, T=T, A=A)


def _recursive_reflection(stack, wavelength, u, polarization):
    # r_j = (rho_j + r_{j+1} e^{2i kz d}) / (1 + rho_j r_{j+1} e^{2i kz d}); the
    # phase factor only ever shrinks for evanescent layers, so nothing overflows
    k0 = 2.0 * math.pi / wavelength
    n_all = np.concatenate([[stack.incident_medium], stack.indices, [stack.exit_medium]])
    u_ref = np.asarray(u, dtype=float) * stack.incident_medium.real
    kz = [_kz(n, k0, u_ref) for n in n_all]
    # p admittance n^2/kz written without dividing by kz, which vanishes at grazing incidence
    w = [np.ones_like(k) for k in kz] if polarization == "s" else [n * n + 0 * k for n, k in zip(n_all, kz)]
    d = stack.thicknesses
    r = np.zeros(np.shape(u), dtype=complex)
    for j in range(len(n_all) - 2, -1, -1):
        num = w[j] * kz[j + 1] - w[j + 1] * kz[j]
        den = w[j] * kz[j + 1] + w[j + 1] * kz[j]
        rho = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
        if polarization == "s":
            rho = -rho
        if j + 1 <= len(d):
            r = r * np.exp(2j * kz[j + 1] * d[j])
        r = (rho + r) / (1.0 + rho * r)
    return r


def _recursive_reflection_scalar(stack, wavelength, u):
    # same recursion as above for one real u, in plain complex arithmetic
    k0 = 2.0 * math.pi / wavelength
    u_ref = u * stack.incident_medium.real
    n_all = [stack.incident_medium, *(layer.refractive_index for layer in stack.layers), stack.exit_medium]
    kz = []
    for n in n_all:
        k = k0 * cmath.sqrt(n * n - u_ref * u_ref)
        kz.append(-k if k.imag < 0 else k)
    d = [layer.thickness for layer in stack.layers]
    r_s = r_p = 0j
    for j in range(len(n_all) - 2, -1, -1):
        a, b = kz[j], kz[j + 1]
        na2, nb2 = n_all[j] * n_all[j], n_all[j + 1] * n_all[j + 1]
        den_s, den_p = a + b, na2 * b + nb2 * a
        rho_s = (a - b) / den_s if den_s != 0 else 0j
        rho_p = (na2 * b - nb2 * a) / den_p if den_p != 0 else 0j
        if j < len(d):
            phase = cmath.exp(2j * b * d[j])
            r_s, r_p = r_s * phase, r_p * phase
        r_s = (rho_s + r_s) / (1.0 + rho_s * r_s)
        r_p = (rho_p + r_p) / (1.0 + rho_p * r_p)
    return r_s, r_p


def reflection_coefficients(stack: LayerStack, wavelength: float, u):
    """``(r_s, r_p)`` for in-plane wavevector ``u`` (units of ``k0*n_incident``).

    Both coefficients are ratios of tangential electric fields at the first
    interface.  ``u`` may be an array and may exceed 1 (evanescent waves).
    """
    wavelength = check_positive(wavelength, "wavelength")
    # grazing incidence in the host (and in index-matched layers) is a 0/0 limit
    u = np.where(np.asarray(u) == 1.0, 1.0 - 1e-12, u)
    if np.ndim(u) == 0:
        return _recursive_reflection_scalar(stack, wavelength, float(u))
    return (_recursive_reflection(stack, wavelength, u, "s"),
            _recursive_reflection(stack, wavelength, u, "p"))


def _max_intensity_in_layer(a, b, k, d):
    """max over s in [0, d] of |a e^{iks} + b e^{-iks}|^2."""
    if abs(k.imag) < 1e-12 * abs(k.real):
        k = k.real
        candidates = [0.0, d]
        if abs(a) > 0 and abs(b) > 0:
            # |E|^2 = |a|^2 + |b|^2 + 2|a||b| cos(2ks + arg a - arg b)
            phi = np.angle(a) - np.angle(b)
            period = math.pi / k
            s0 = (-phi / (2 * k)) % period
            candidates.extend(np.arange(s0, d, period)[:4].tolist())
        s = np.asarray(candidates)
    else:
        s = np.linspace(0.0, d, 20001)
    e = a * np.exp(1j * k * s) + b * np.exp(-1j * k * s)
    return float(np.max(np.abs(e) ** 2))


def field_profile(
    stack: LayerStack,
    wavelength: float,
    grid_step: float,
    reference: str | int | None = None,
    padding: float = 0.0,
) -> FieldProfile:
    """Sample the standing-wave intensity through ``stack``.

    Parameters
    ----------
    grid_step : float
        Maximum sample spacing; must not exceed ``wavelength / 20 / max(Re n)``
        over the sampled regions.
    reference : str or int, optional
        Layer (label or position) whose peak intensity and index normalise the
        effective length.  By default the layer with the largest peak energy
        density ``n^2 |E|^2`` is used.
    padding : float
        Length of incident and exit medium to include on either side.
    """
    wavelength = check_positive(wavelength, "wavelength")
    grid_step = check_positive(grid_step, "grid_step")
    if padding < 0:
        raise ValueError("padding must be >= 0")

    n_sampled = list(stack.indices.real)
    if padding > 0:
        n_sampled += [stack.incident_medium.real, stack.exit_medium.real]
    max_step = wavelength / 20.0 / max(n_sampled)
    if grid_step > max_step * (1 + 1e-12):
        raise ValueError(
            f"grid_step {grid_step:.4g} m is too coarse; need <= {max_step:.4g} m "
            f"(wavelength/20/max(Re n))"
        )

    r, t, A, B, kz, _ = _amplitudes(stack, wavelength)
    r, t = complex(r), complex(t)
    z_parts, e_parts, n_parts, lab_parts = [], [], [], []

    if padding > 0:
        m = max(math.ceil(padding / grid_step), 1)
        z = np.linspace(-padding, 0.0, m + 1)
        k = kz[0]
        e = np.exp(1j * k * z) + r * np.exp(-1j * k * z)
        z_parts.append(z)
        e_parts.append(np.abs(e) ** 2)
        n_parts.append(np.full(z.size, stack.incident_medium.real))
        lab_parts.append(np.full(z.size, "incident_medium", dtype=object))

    bounds = stack.boundaries()
    peaks = []
    for j, layer in enumerate(stack.layers):
        d = layer.thickness
        m = max(math.ceil(d / grid_step), 1)
        s = np.linspace(0.0, d, m + 1)
        k = kz[j + 1]
        e = A[j] * np.exp(1j * k * s) + B[j] * np.exp(-1j * k * s)
        z_parts.append(bounds[j] + s)
        e_parts.append(np.abs(e) ** 2)
        n_parts.append(np.full(s.size, layer.refractive_index.real))
        lab_parts.append(np.full(s.size, layer.label, dtype=object))
        peaks.append(_max_intensity_in_layer(A[j], B[j], k, d))

    if padding > 0:
        m = max(math.ceil(padding / grid_step), 1)
        s = np.linspace(0.0, padding, m + 1)
        e = t * np.exp(1j * kz[-1] * s)
        z_parts.append(bounds[-1] + s)
        e_parts.append(np.abs(e) ** 2)
        n_parts.append(np.full(s.size, stack.exit_medium.real))
        lab_parts.append(np.full(s.size, "exit_medium", dtype=object))

    if reference is None:
        energy = [p * layer.refractive_index.real ** 2 for p, layer in zip(peaks, stack.layers)]
        ref = int(np.argmax(energy))
    elif isinstance(reference, str):
        ref = stack.index_of(reference)
    else:
        ref = int(reference)

    return FieldProfile(
        z=np.concatenate(z_parts),
        intensity=np.concatenate(e_parts),
        index=np.concatenate(n_parts),
        labels=np.concatenate(lab_parts),
        wavelength=wavelength,
        reference_label=stack.layers[ref].label,
        reference_index=stack.layers[ref].refractive_index.real,
        reference_intensity=peaks[ref],
    )


def effective_length(profile: FieldProfile) -> float:
    """Energy-weighted length ``2 * int |E|^2 n^2 dz / (|E_ref|^2 n_ref^2)``.

    Uses the trapezoid rule on the profile grid; interfaces are sampled on both
    sides so each layer is integrated separately.
    """
    norm = profile.reference_intensity * profile.reference_index**2
    if not norm > 0:
        raise ValueError("reference field is zero; effective length is undefined")
    integrand = profile.intensity * profile.index**2
    return float(2.0 * np.trapezoid(integrand, profile.z) / norm)


@dataclass(frozen=True)
class PenetrationDepth:
    """Frequency penetration depth ``c * tau / 2`` with its diagnostics."""

    length: float
    group_delay: float
    reflectance: float
    warnings: tuple = field(default_factory=tuple)

    def __float__(self):
        return self.length


def _reflection_phase_derivative(stack, wavelength, rel_step):
    omega = 2.0 * math.pi * SPEED_OF_LIGHT / wavelength
    w_plus, w_minus = omega * (1 + rel_step), omega * (1 - rel_step)
    r_plus = complex(_amplitudes(stack, 2.0 * math.pi * SPEED_OF_LIGHT / w_plus)[0])
    r_minus = complex(_amplitudes(stack, 2.0 * math.pi * SPEED_OF_LIGHT / w_minus)[0])
    dphi = np.angle(r_plus / r_minus)
    return dphi / (w_plus - w_minus)


def penetration_depth(mirror: LayerStack, wavelength: float, rel_step: float = 1e-5) -> PenetrationDepth:
    """Group-delay penetration depth of ``mirror`` seen from its incident medium.

    The group delay ``tau = d(arg r)/d(omega)`` is taken by a central finite
    difference with relative frequency step ``rel_step``.  The result is an
    optical (vacuum-equivalent) length.
    """
    wavelength = check_positive(wavelength, "wavelength")
    notes = []
    R = solve_stack(mirror, wavelength).R
    if R <= 0.9:
        notes.append(f"mirror reflectance {R:.4f} <= 0.9; penetration depth is poorly defined")
    tau = _reflection_phase_derivative(mirror, wavelength, rel_step)
    tau_coarse = _reflection_phase_derivative(mirror, wavelength, 10 * rel_step)
    scale = max(abs(tau), abs(tau_coarse), 1e-30)
    if abs(tau - tau_coarse) > 1e-3 * scale and abs(tau - tau_coarse) * SPEED_OF_LIGHT / 2 > 1e-12:
        notes.append("group delay varies strongly with frequency (stopband edge?)")
    for note in notes:
        warnings.warn(note, PenetrationDepthWarning, stacklevel=2)
    return PenetrationDepth(
        length=float(SPEED_OF_LIGHT * tau / 2.0),
        group_delay=float(tau),
        reflectance=float(R),
        warnings=tuple(notes),
    )


def optical_length(geometry) -> float:
    """Optical cavity length: both penetration depths plus air gap and membrane path.

    ``geometry`` needs ``L_pen_fib, L_air, L_mem, n_mem, L_pen_sc`` attributes.
    """
    parts = [geometry.L_pen_fib, geometry.L_air, geometry.L_mem, geometry.L_pen_sc]
    if any(p < 0 for p in parts):
        raise ValueError("optical length summands must be non-negative")
    return geometry.L_pen_fib + geometry.L_air + geometry.L_mem * geometry.n_mem + geometry.L_pen_sc
