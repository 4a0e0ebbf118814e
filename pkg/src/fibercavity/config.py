"""Run-configuration files: cavity, emitter and budget descriptions with units.

Every loader returns domain objects plus an ``echo`` dictionary of the parsed
inputs (SI value and unit) for reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .efficiency import (
    PROVENANCE_KINDS,
    EfficiencyChain,
    fiber_mode_match,
    mirror_outcoupling,
    mode_fraction,
)
from .io import ConfigError, Field, load_yaml, parse_quantity, read_section
from .metrics import CavityGeometry, MirrorLoss, mode_waist
from .purcell import CavityParams, EmitterParams

__all__ = [
    "SI_UNITS",
    "BudgetConfig",
    "CavityConfig",
    "load_budget_config",
    "load_cavity_config",
    "load_points_config",
    "load_table_config",
]

SI_UNITS = {"length": "m", "frequency": "Hz", "time": "s", "fraction": "1", "number": "1"}

_GEOMETRY = {
    "L_air": Field("length"),
    "L_mem": Field("length"),
    "n_mem": Field("number"),
    "RC_fiber": Field("length"),
    "wavelength": Field("length"),
    "L_pen_fib": Field("length", False, 0.0),
    "L_pen_sc": Field("length", False, 0.0),
    "L_eff": Field("length", False, 0.0),
}
_MIRROR = {
    "transmission": Field("fraction"),
    "scattering": Field("fraction", False, 0.0),
    "absorption": Field("fraction", False, 0.0),
}
_ROUGHNESS = {"S_q": Field("length"), "wavelength": Field("length")}
_EMITTER = {
    "lifetime": Field("time", False),
    "gamma0": Field("frequency", False),
    "linewidth": Field("frequency"),
    "wavelength": Field("length"),
    "eta_QE": Field("fraction", False, 1.0),
    "xi": Field("fraction", False, 1.0),
    "field_factor": Field("fraction", False, 1.0),
}
_CAVITY = {
    "finesse": Field("number"),
    "L_eff": Field("length"),
    "w0": Field("length", False),
    "n_mem": Field("number", False),
}
_JITTER = {"sigma": Field("length")}
_CURVE = {
    "finesse_min": Field("number"),
    "finesse_max": Field("number"),
    "points": Field("number"),
}
_SECTIONS = ("geometry", "losses", "roughness", "emitter", "cavity", "jitter", "curve")


def _echo(values: dict, schema: dict, prefix: str) -> dict:
    out = {}
    for key, value in values.items():
        if value is None or schema[key].dimension in ("text", "path"):
            continue
        out[f"{prefix}.{key}"] = {"value": value, "unit": SI_UNITS[schema[key].dimension], "source": "input"}
    return out


def _check_top(data, allowed, path):
    lines = getattr(data, "lines", {})
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown top-level key {key!r}; allowed: {', '.join(sorted(allowed))}", path,
                              lines.get(key))


@dataclass
class CavityConfig:
    path: Path
    sections: dict
    echo: dict = field(default_factory=dict)

    def require(self, name):
        if name not in self.sections:
            raise ConfigError(f"this command needs a {name!r} section", self.path)
        return self.sections[name]

    def geometry(self) -> CavityGeometry:
        g = self.require("geometry")
        try:
            return CavityGeometry(**g)
        except ValueError as exc:
            raise ConfigError(f"geometry: {exc}", self.path) from exc

    def mirror_losses(self):
        losses = self.require("losses")
        return losses["semiconductor"], losses["fiber"]

    def emitter(self) -> EmitterParams:
        e = dict(self.require("emitter"))
        lifetime, gamma0 = e.pop("lifetime"), e.pop("gamma0")
        if (lifetime is None) == (gamma0 is None):
            raise ConfigError("emitter: give exactly one of 'lifetime' or 'gamma0'", self.path)
        try:
            if lifetime is not None:
                return EmitterParams.from_lifetime(lifetime, **e)
            return EmitterParams(gamma0=gamma0, **e)
        except ValueError as exc:
            raise ConfigError(f"emitter: {exc}", self.path) from exc

    def cavity(self) -> tuple[CavityParams, str]:
        """Cavity parameters and the source of the waist (``input`` or derived)."""
        c = dict(self.require("cavity"))
        source = "input"
        if c["n_mem"] is None:
            c["n_mem"] = self.geometry().n_mem
        if c["w0"] is None:
            c["w0"] = mode_waist(self.geometry())
            source = "relation:mode_waist"
        try:
            return CavityParams(**c), source
        except ValueError as exc:
            raise ConfigError(f"cavity: {exc}", self.path) from exc

    def jitter_sigmas(self):
        sigma = self.require("jitter")["sigma"]
        return sigma if isinstance(sigma, list) else [sigma]

    def finesse_grid(self):
        import numpy as np

        c = self.require("curve")
        n = int(c["points"])
        if n < 2 or n != c["points"] or not 1 < c["finesse_min"] < c["finesse_max"]:
            raise ConfigError("curve: need integer points >= 2 and 1 < finesse_min < finesse_max", self.path)
        return np.geomspace(c["finesse_min"], c["finesse_max"], n)


def load_cavity_config(path) -> CavityConfig:
    path = Path(path)
    data = load_yaml(path)
    _check_top(data, {"name", "description", *_SECTIONS}, path)
    sections, echo = {}, {}
    schemas = {"geometry": _GEOMETRY, "roughness": _ROUGHNESS, "emitter": _EMITTER, "cavity": _CAVITY,
               "jitter": _JITTER, "curve": _CURVE}
    for name, schema in schemas.items():
        if name in data:
            sections[name] = read_section(data[name], schema, path=path, name=name)
            echo.update(_echo(sections[name], schema, name))
    if "losses" in data:
        losses = data["losses"]
        if not isinstance(losses, dict):
            raise ConfigError("section 'losses' must be a mapping", path)
        _check_top(losses, {"semiconductor", "fiber", "reference_finesse"}, path)
        parsed = {}
        for mirror in ("semiconductor", "fiber"):
            if mirror not in losses:
                raise ConfigError(f"losses: missing {mirror!r} mirror", path, getattr(losses, "line", None))
            values = read_section(losses[mirror], _MIRROR, path=path, name=f"losses.{mirror}")
            echo.update(_echo(values, _MIRROR, f"losses.{mirror}"))
            try:
                parsed[mirror] = MirrorLoss(**values)
            except ValueError as exc:
                raise ConfigError(f"losses.{mirror}: {exc}", path) from exc
        ref = losses.get("reference_finesse")
        if ref is not None:
            ref = parse_quantity(ref, "number", "losses.reference_finesse", path=path,
                                 line=losses.lines.get("reference_finesse"))
            echo["losses.reference_finesse"] = {"value": ref, "unit": "1", "source": "input"}
        parsed["reference_finesse"] = ref
        sections["losses"] = parsed
    return CavityConfig(path, sections, echo)


@dataclass
class BudgetConfig:
    chain: EfficiencyChain
    sources: dict
    excitation: dict | None
    echo: dict


_FACTOR_FORMS = {
    "value": ({"value": Field("fraction"), "provenance": Field("text")}, None),
    "purcell": ({"purcell": Field("number"), "provenance": Field("text", False, "calculated")},
                lambda v: mode_fraction(v["purcell"])),
    "transmission": ({"transmission": Field("fraction"), "total_loss": Field("fraction"),
                      "provenance": Field("text", False, "calculated")},
                     lambda v: mirror_outcoupling(v["transmission"], v["total_loss"])),
    "w_f": ({"w_f": Field("length"), "w_m": Field("length"), "n_f": Field("number"),
             "wavelength": Field("length"), "RC": Field("length"), "provenance": Field("text", False, "calculated")},
            lambda v: fiber_mode_match(v["w_f"], v["w_m"], v["n_f"], v["wavelength"], v["RC"])),
}
_FACTOR_RELATION = {"purcell": "relation:mode_fraction", "transmission": "relation:mirror_outcoupling",
                    "w_f": "relation:fiber_mode_match", "value": "input"}
_CHAIN_KEYS = ("eta_exc", "eta_QE", "eta_mode", "eta_trans", "eta_fib", "eta_setup", "eta_det")


def load_budget_config(path) -> BudgetConfig:
    """Chain factors given directly (``value`` + ``provenance``) or derived.

    Derived forms: ``{purcell}`` for the mode fraction, ``{transmission,
    total_loss}`` for mirror outcoupling and ``{w_f, w_m, n_f, wavelength, RC}``
    for fiber mode matching.
    """
    path = Path(path)
    data = load_yaml(path)
    _check_top(data, {"name", "description", "chain", "excitation"}, path)
    if "chain" not in data or not isinstance(data["chain"], dict):
        raise ConfigError("missing 'chain' section", path)
    chain = data["chain"]
    _check_top(chain, set(_CHAIN_KEYS), path)
    values, provenance, sources, echo = {}, {}, {}, {}
    for name in _CHAIN_KEYS:
        if name not in chain:
            if name == "eta_exc":
                continue
            raise ConfigError(f"chain: missing factor {name!r}", path, getattr(chain, "line", None))
        spec = chain[name]
        line = chain.lines.get(name)
        if not isinstance(spec, dict):
            raise ConfigError(f"chain.{name}: expected a mapping such as {{value: 0.5, provenance: measured}}",
                              path, line)
        form = next((k for k in _FACTOR_FORMS if k in spec), None)
        if form is None:
            raise ConfigError(f"chain.{name}: expected one of the keys {', '.join(_FACTOR_FORMS)}", path, line)
        schema, derive = _FACTOR_FORMS[form]
        parsed = read_section(spec, schema, path=path, name=f"chain.{name}")
        echo.update(_echo(parsed, schema, f"chain.{name}"))
        try:
            value = parsed["value"] if derive is None else derive(parsed)
        except ValueError as exc:
            raise ConfigError(f"chain.{name}: {exc}", path, line) from exc
        if parsed["provenance"] not in PROVENANCE_KINDS:
            raise ConfigError(f"chain.{name}: provenance must be one of {', '.join(PROVENANCE_KINDS)}", path, line)
        values[name] = value
        provenance[name] = parsed["provenance"]
        sources[name] = _FACTOR_RELATION[form]
    try:
        ec = EfficiencyChain(**values, provenance=provenance)
    except ValueError as exc:
        raise ConfigError(f"chain: {exc}", path) from exc
    excitation = None
    if "excitation" in data:
        schema = {"measured_rate": Field("frequency"), "rep_rate": Field("frequency")}
        excitation = read_section(data["excitation"], schema, path=path, name="excitation")
        echo.update(_echo(excitation, schema, "excitation"))
        if "eta_exc" in values:
            raise ConfigError("give either chain.eta_exc or an 'excitation' section, not both", path)
    return BudgetConfig(ec, sources, excitation, echo)


def load_table_config(path):
    """Decay-table description: ``eta_QE`` plus rows of reference/cavity histograms."""
    path = Path(path)
    data = load_yaml(path)
    _check_top(data, {"name", "description", "eta_QE", "rows"}, path)
    eta = parse_quantity(data.get("eta_QE", 1.0), "fraction", "eta_QE", path=path)
    rows = data.get("rows")
    if not isinstance(rows, list) or not rows:
        raise ConfigError("'rows' must be a non-empty list", path)
    schema = {"label": Field("text"), "wavelength": Field("length"), "reference": Field("path"),
              "cavity": Field("path")}
    parsed = [read_section(r, schema, path=path, name=f"rows[{i}]") for i, r in enumerate(rows)]
    return eta, parsed


def load_points_config(path):
    """Measured (finesse, Purcell) points and the finesse assigned to table rows."""
    path = Path(path)
    data = load_yaml(path)
    _check_top(data, {"name", "description", "table_finesse", "table_finesse_err", "points"}, path)
    schema = {"label": Field("text"), "finesse": Field("number"), "finesse_err": Field("number"),
              "purcell": Field("number"), "purcell_err": Field("number")}
    points = [read_section(p, schema, path=path, name=f"points[{i}]") for i, p in enumerate(data.get("points", []))]
    f = parse_quantity(data.get("table_finesse"), "number", "table_finesse", path=path)
    ferr = parse_quantity(data.get("table_finesse_err", 0.0), "number", "table_finesse_err", path=path)
    return f, ferr, points
