"""Config and stack-file loading with explicit units and line-precise errors."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any

import yaml

from .layers import Layer, LayerStack

__all__ = [
    "DATA_DIR",
    "ConfigError",
    "Field",
    "UnitError",
    "bundled",
    "file_sha256",
    "load_stack",
    "load_yaml",
    "parse_quantity",
    "read_section",
    "stack_from_mapping",
]

DATA_DIR = Path(__file__).parent / "data"


def bundled(*parts) -> Path:
    """Path of a file shipped in the package data directory."""
    return DATA_DIR.joinpath(*parts)


class ConfigError(ValueError):
    """Malformed input file; carries an optional ``path:line`` location."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class UnitError(ConfigError):
    pass


_UNITS = {
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9, "pm": 1e-12},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "fraction": {"": 1.0, "ppm": 1e-6, "%": 1e-2},
}
_UNIT_DIMENSION = {u: dim for dim, table in _UNITS.items() for u in table if u}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*?)?\s*$")


def parse_quantity(value, dimension: str, key: str = "value", *, path=None, line=None) -> float:
    """Convert ``"5.24 um"``-style text to an SI float.

    ``dimension`` is one of ``length``, ``frequency``, ``time``, ``fraction``
    or ``number``.  Dimensioned quantities must carry a unit; fractions may be
    bare numbers or use ``ppm``/``%``.
    """
    if dimension == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a plain number, got {value!r}", path, line)
        return float(value)
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a quantity, got {value!r}", path, line)
    if isinstance(value, (int, float)):
        if dimension == "fraction":
            return float(value)
        examples = ", ".join(list(_UNITS[dimension])[:3])
        raise UnitError(f"{key}: missing unit; expected a {dimension} unit such as {examples}", path, line)
    m = _QUANTITY.match(str(value))
    if not m:
        raise ConfigError(f"{key}: cannot parse quantity {value!r}", path, line)
    number, unit = m.group(1), (m.group(2) or "")
    table = _UNITS[dimension]
    if unit in table:
        # decimal product so that "2.28 um" is the float nearest to 2.28e-6
        return float(Decimal(number) * Decimal(repr(table[unit])))
    got = _UNIT_DIMENSION.get(unit)
    expected = "/".join(u for u in table if u) or "dimensionless"
    if got is None:
        raise UnitError(f"{key}: unknown unit {unit!r}; expected {dimension} ({expected})", path, line)
    raise UnitError(
        f"{key}: unit mismatch, expected {dimension} ({expected}) but got {unit!r} ({got})", path, line
    )


class _Node(dict):
    """dict that remembers the source line of each key."""

    lines: dict


def _construct(node):
    if isinstance(node, yaml.MappingNode):
        out = _Node()
        out.lines = {}
        for key_node, value_node in node.value:
            key = key_node.value
            out[key] = _construct(value_node)
            out.lines[key] = key_node.start_mark.line + 1
        out.line = node.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v) for v in node.value]
    return _scalar(node)


def _scalar(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def load_yaml(path) -> _Node:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", path) from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"malformed YAML: {problem}", path, line) from exc
    if node is None:
        raise ConfigError("file is empty", path)
    data = _construct(node)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", path, 1)
    return data


@dataclass(frozen=True)
class Field:
    dimension: str
    required: bool = True
    default: Any = None


def read_section(section, schema: dict, *, path=None, name="config") -> dict:
    """Validate ``section`` against ``schema`` ({key: Field}) and convert units.

    Unknown keys are rejected; list values are converted element-wise.
    """
    if not isinstance(section, dict):
        raise ConfigError(f"section {name!r} must be a mapping", path, getattr(section, "line", None))
    lines = getattr(section, "lines", {})
    unknown = [k for k in section if k not in schema]
    if unknown:
        k = unknown[0]
        raise ConfigError(
            f"unknown key {k!r} in section {name!r}; allowed: {', '.join(sorted(schema))}",
            path,
            lines.get(k),
        )
    out = {}
    for key, spec in schema.items():
        if key not in section:
            if spec.required:
                raise ConfigError(f"missing required key {key!r} in section {name!r}", path,
                                  getattr(section, "line", None))
            out[key] = spec.default
            continue
        value = section[key]
        line = lines.get(key)
        if spec.dimension == "text":
            out[key] = str(value)
        elif spec.dimension == "path":
            p = Path(str(value))
            if path is not None and not p.is_absolute():
                p = Path(path).parent / p
            out[key] = p
        elif isinstance(value, list):
            out[key] = [parse_quantity(v, spec.dimension, f"{name}.{key}", path=path, line=line) for v in value]
        else:
            out[key] = parse_quantity(value, spec.dimension, f"{name}.{key}", path=path, line=line)
    return out


def _medium(value, key, path, line):
    if isinstance(value, dict):
        section = read_section(value, {"n_real": Field("number"), "n_imag": Field("number", False, 0.0)},
                               path=path, name=key)
        return complex(section["n_real"], section["n_imag"])
    return complex(parse_quantity(value, "number", key, path=path, line=line))


_LAYER_SCHEMA = {
    "label": Field("text"),
    "thickness_nm": Field("number"),
    "n_real": Field("number"),
    "n_imag": Field("number", False, 0.0),
}


def _expand_layers(items, path, where="layers"):
    layers = []
    if not isinstance(items, list) or not items:
        raise ConfigError(f"{where!r} must be a non-empty list", path)
    for i, item in enumerate(items):
        line = getattr(item, "line", None)
        if not isinstance(item, dict):
            raise ConfigError(f"{where}[{i}] must be a mapping", path)
        if "repeat" in item:
            extra = set(item) - {"repeat", "layers"}
            if extra:
                raise ConfigError(f"unknown key {min(extra)!r} in repeat group", path, line)
            count = item["repeat"]
            if isinstance(count, bool) or not isinstance(count, int) or count < 1:
                raise ConfigError(f"repeat count must be a positive integer, got {count!r}", path, line)
            group = _expand_layers(item.get("layers"), path, f"{where}[{i}].layers")
            layers.extend(group * count)
        else:
            spec = read_section(item, _LAYER_SCHEMA, path=path, name=f"{where}[{i}]")
            try:
                layers.append(Layer(spec["label"], spec["thickness_nm"] * 1e-9,
                                    complex(spec["n_real"], spec["n_imag"])))
            except ValueError as exc:
                raise ConfigError(str(exc), path, line) from exc
    return layers


def stack_from_mapping(data, path=None) -> LayerStack:
    allowed = {"name", "provenance", "incident_medium", "exit_medium", "layers"}
    lines = getattr(data, "lines", {})
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in stack file", path, lines.get(key))
    for key in ("incident_medium", "exit_medium", "layers"):
        if key not in data:
            raise ConfigError(f"stack file is missing {key!r}", path)
    layers = _expand_layers(data["layers"], path)
    return LayerStack(
        incident_medium=_medium(data["incident_medium"], "incident_medium", path, lines.get("incident_medium")),
        layers=tuple(layers),
        exit_medium=_medium(data["exit_medium"], "exit_medium", path, lines.get("exit_medium")),
        name=str(data.get("name", "")),
        provenance=str(data.get("provenance", "")),
    )


def load_stack(path) -> LayerStack:
    """Read a YAML stack-definition file (repeat groups are expanded)."""
    path = Path(path)
    if not path.exists() and bundled("stacks", str(path)).exists():
        path = bundled("stacks", str(path))
    return stack_from_mapping(load_yaml(path), path)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
