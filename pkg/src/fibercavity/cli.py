"""Command-line entry point: ``fibercavity <command> <subcommand> [options]``.

Exit status: 0 success, 2 usage error, 3 data or configuration error,
4 numerical failure.  Reports are JSON (or flat CSV) and carry the tool
version, SHA-256 hashes of all input files and a source tag for every number.
Set ``FIBERCAVITY_OUTPUT_DIR`` to write outputs into a directory instead of
standard output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from ._validation import NumericalError
from .analysis import (
    decay_fit,
    dispersion_analyze,
    g2_raw,
    generate,
    noise_spectrum,
    read_record,
    resonance_fit,
    write_record,
)
from .analysis.records import record_csv
from .analysis.synth import DEFAULTS as SYNTH_DEFAULTS
from .config import (
    load_budget_config,
    load_cavity_config,
    load_points_config,
    load_table_config,
)
from .dipole import DipoleConfig, DipoleRates, enhancement_curve, pec_enhancement
from .efficiency import chain_total, infer_excitation, mode_fraction
from .io import DATA_DIR, ConfigError, bundled, file_sha256, load_stack, parse_quantity
from .layers import (
    effective_length,
    field_profile,
    optical_length,
    penetration_depth,
    solve_stack,
)
from .metrics import (
    cavity_linewidth,
    finesse_from_losses,
    free_spectral_range,
    impedance_contrast,
    mode_radius_on_fiber,
    mode_waist,
    scattering_loss,
    total_loss_from_finesse,
)
from .purcell import (
    JitterModel,
    coupling_rate_g0,
    effective_rate,
    effective_rate_limits,
    effective_rate_R0,
    purcell_curve,
    purcell_from_decay,
    purcell_ideal,
    purcell_jittered,
    purcell_prefactor,
    regime,
)

ENV_OUTPUT_DIR = "FIBERCAVITY_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
SCHEMA_PATH = bundled("schemas", "report.schema.json")


# ---------------------------------------------------------------- reports

def _clean(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    return value


def _label(path) -> str:
    path = Path(path)
    try:
        return "bundled:" + path.resolve().relative_to(DATA_DIR.resolve()).as_posix()
    except ValueError:
        return str(path)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return f"{float(v):.12g}"


def csv_text(columns: dict) -> str:
    """Columns of equal length as CSV with 12 significant digits."""
    names = list(columns)
    data = [list(np.asarray(columns[k]).tolist()) if not isinstance(columns[k], list) else columns[k]
            for k in names]
    n = len(data[0]) if data else 0
    if any(len(col) != n for col in data):
        raise ValueError("CSV columns differ in length")
    lines = [",".join(names)]
    lines.extend(",".join(_fmt(col[i]) for col in data) for i in range(n))
    return "\n".join(lines) + "\n"


class Report:
    """Collects inputs, results and tables of one command run."""

    def __init__(self, command: str):
        self.command = command
        self.files = {}
        self.parameters = {}
        self.results = {}
        self.tables = {}
        self.primary = None
        self.warnings = []

    def file(self, path):
        self.files[_label(path)] = file_sha256(path)

    def param(self, name, value, unit, source="input"):
        self.parameters[name] = {"value": _clean(value), "unit": unit, "source": source}

    def params(self, echo: dict):
        for k, v in echo.items():
            self.parameters[k] = _clean(v)

    def result(self, name, value, unit, source, uncertainty=None):
        entry = {"value": _clean(value), "unit": unit, "source": source}
        if uncertainty is not None:
            entry["uncertainty"] = _clean(uncertainty)
        self.results[name] = entry

    def table(self, name, columns: dict, source, primary=False):
        self.tables[name] = (columns, source)
        if primary or self.primary is None:
            self.primary = name

    def to_dict(self):
        out = {
            "tool": "fibercavity",
            "version": __version__,
            "command": self.command,
            "inputs": {"files": self.files, "parameters": self.parameters},
            "results": self.results,
        }
        if self.tables:
            tables = {}
            for name, (cols, source) in self.tables.items():
                keys = list(cols)
                rows = [list(r) for r in zip(*[_clean(list(np.asarray(cols[k]).tolist()) if not isinstance(cols[k], list)
                                                          else cols[k]) for k in keys])]
                tables[name] = {"columns": keys, "rows": rows, "source": source}
            out["tables"] = tables
        out["warnings"] = list(dict.fromkeys(self.warnings))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        if self.primary is not None:
            return csv_text(self.tables[self.primary][0])
        names = list(self.results)
        return csv_text({
            "quantity": names,
            "value": [_scalar_text(self.results[k]["value"]) for k in names],
            "uncertainty": [_fmt(self.results[k]["uncertainty"]) if "uncertainty" in self.results[k] else ""
                            for k in names],
            "unit": [self.results[k]["unit"] for k in names],
            "source": [self.results[k]["source"] for k in names],
        })


def _scalar_text(v):
    if isinstance(v, list):
        return ";".join(_fmt(x) for x in v)
    return v


# ---------------------------------------------------------------- arguments

def _quantity(dimension):
    def parse(text):
        try:
            return parse_quantity(text.replace(" ", ""), dimension, "argument")
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc).replace("argument: ", "")) from exc

    parse.__name__ = f"{dimension} quantity"
    return parse


LENGTH, TIME, FRACTION = (_quantity(d) for d in ("length", "time", "fraction"))


def _output_dir(args):
    d = getattr(args, "output_dir", None) or os.environ.get(ENV_OUTPUT_DIR)
    return Path(d) if d else None


def _write(text: str, target: Path):
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text)


def _emit(args, report: Report, default_name: str, default_format="json"):
    fmt = args.format or default_format
    text = report.to_json() if fmt == "json" else report.to_csv()
    if args.output:
        _write(text, Path(args.output))
    elif _output_dir(args) is not None:
        _write(text, _output_dir(args) / f"{default_name}.{fmt}")
    else:
        sys.stdout.write(text)


def _emit_text(args, text, default_name):
    if args.output:
        _write(text, Path(args.output))
    elif _output_dir(args) is not None:
        _write(text, _output_dir(args) / default_name)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- tmm

def _stack(report, path):
    stack = load_stack(path)
    report.file(_resolve_stack_path(path))
    if stack.provenance:
        report.param("stack.provenance", stack.provenance, "", "input")
    return stack


def _resolve_stack_path(path):
    p = Path(path)
    return p if p.exists() else bundled("stacks", str(path))


def cmd_tmm_spectrum(args):
    r = Report("tmm spectrum")
    stack = _stack(r, args.stack)
    if not 0 < args.start < args.stop or args.points < 2:
        raise ValueError("need 0 < start < stop and at least 2 points")
    lam = np.linspace(args.start, args.stop, args.points)
    resp = [solve_stack(stack, w) for w in lam]
    R = np.array([x.R for x in resp])
    r.param("start", args.start, "m")
    r.param("stop", args.stop, "m")
    r.param("points", args.points, "1")
    r.table("spectrum", {"wavelength_nm": lam * 1e9, "R": R, "T": [x.T for x in resp], "A": [x.A for x in resp]},
            "relation:transfer_matrix")
    i = int(np.argmax(R))
    r.result("R_max", R[i], "1", "relation:transfer_matrix")
    r.result("wavelength_at_R_max", lam[i], "m", "relation:transfer_matrix")
    _emit(args, r, "tmm_spectrum", "csv")


def _profile(args, r, stack):
    step = args.step or args.wavelength / 40.0 / max(stack.indices.real.max(), 1.0)
    r.param("wavelength", args.wavelength, "m")
    r.param("grid_step", step, "m")
    prof = field_profile(stack, args.wavelength, step, reference=args.reference, padding=args.padding or 0.0)
    return prof, step


def cmd_tmm_field(args):
    r = Report("tmm field")
    stack = _stack(r, args.stack)
    prof, _ = _profile(args, r, stack)
    r.table("field", {"z_nm": prof.z * 1e9, "intensity": prof.intensity, "n_real": prof.index},
            "relation:transfer_matrix")
    r.result("L_eff", effective_length(prof), "m", "relation:effective_length")
    r.result("reference_layer", prof.reference_label, "", "input" if args.reference else "rule:max_energy_density")
    _emit(args, r, "tmm_field", "csv")


def cmd_tmm_leff(args):
    r = Report("tmm leff")
    stack = _stack(r, args.stack)
    prof, step = _profile(args, r, stack)
    L = effective_length(prof)
    L_half = effective_length(field_profile(stack, args.wavelength, step / 2, reference=args.reference,
                                            padding=args.padding or 0.0))
    change = abs(L_half - L) / abs(L_half)
    r.result("L_eff", L_half, "m", "relation:effective_length")
    r.result("L_eff_coarse", L, "m", "relation:effective_length")
    r.result("grid_refinement_change", change, "1", "check:grid_halving")
    r.result("converged", bool(change < 1e-3), "", "check:grid_halving")
    r.result("reference_layer", prof.reference_label, "", "input" if args.reference else "rule:max_energy_density")
    if change >= 1e-3:
        r.warnings.append(f"effective length changed by {change:.2e} on halving the grid step")
    _emit(args, r, "tmm_leff")


def cmd_tmm_penetration(args):
    r = Report("tmm penetration")
    stack = _stack(r, args.stack)
    if args.reverse:
        stack = stack.reversed()
    r.param("wavelength", args.wavelength, "m")
    r.param("reversed", bool(args.reverse), "", "input")
    pen = penetration_depth(stack, args.wavelength)
    r.result("L_pen", pen.length, "m", "relation:penetration_depth")
    r.result("group_delay", pen.group_delay, "s", "relation:reflection_group_delay")
    r.result("R", pen.reflectance, "1", "relation:transfer_matrix")
    r.warnings.extend(pen.warnings)
    _emit(args, r, "tmm_penetration")


# ---------------------------------------------------------------- metrics

def _cavity_config(r, path):
    cfg = load_cavity_config(path)
    r.file(path)
    r.params(cfg.echo)
    return cfg


def cmd_metrics_finesse(args):
    r = Report("metrics finesse")
    cfg = _cavity_config(r, args.config)
    sc, fib = cfg.mirror_losses()
    r.result("loss_total_semiconductor", sc.total, "1", "relation:mirror_loss_sum")
    r.result("loss_total_fiber", fib.total, "1", "relation:mirror_loss_sum")
    r.result("finesse", finesse_from_losses(sc, fib), "1", "relation:finesse_from_losses")
    ref = cfg.sections["losses"]["reference_finesse"]
    if ref is not None:
        r.result("loss_total_from_reference_finesse", total_loss_from_finesse(ref), "1",
                 "relation:finesse_from_losses_inverted_symmetric")
    _emit(args, r, "metrics_finesse")


def cmd_metrics_contrast(args):
    r = Report("metrics contrast")
    cfg = _cavity_config(r, args.config)
    sc, fib = cfg.mirror_losses()
    r.result("impedance_contrast", impedance_contrast(fib.transmission, fib.total, sc.total), "1",
             "relation:impedance_contrast")
    r.result("matched", bool(math.isclose(2 * fib.transmission, fib.total + sc.total)), "",
             "relation:impedance_matching")
    _emit(args, r, "metrics_contrast")


def cmd_metrics_scatter(args):
    r = Report("metrics scatter")
    if args.config:
        cfg = _cavity_config(r, args.config)
        rough = cfg.require("roughness")
        S_q, lam = rough["S_q"], rough["wavelength"]
    else:
        if args.sq is None or args.wavelength is None:
            raise ConfigError("give --config or both --sq and --wavelength")
        S_q, lam = args.sq, args.wavelength
        r.param("S_q", S_q, "m")
        r.param("wavelength", lam, "m")
    r.result("scattering_loss", scattering_loss(S_q, lam), "1", "relation:scattering_loss")
    _emit(args, r, "metrics_scatter")


def cmd_metrics_geometry(args):
    r = Report("metrics geometry")
    cfg = _cavity_config(r, args.config)
    g = cfg.geometry()
    w0 = mode_waist(g)
    r.result("geometric_length", g.geometric_length, "m", "relation:geometric_length")
    r.result("w0", w0, "m", "relation:mode_waist")
    r.result("w_m", mode_radius_on_fiber(g), "m", "relation:gaussian_beam_propagation")
    r.result("rayleigh_range", math.pi * w0**2 / g.wavelength, "m", "relation:gaussian_beam_propagation")
    L_opt = optical_length(g)
    r.result("L_opt", L_opt, "m", "relation:optical_length")
    r.result("free_spectral_range", free_spectral_range(L_opt), "Hz", "relation:free_spectral_range")
    if "cavity" in cfg.sections and g.L_eff > 0:
        F = cfg.sections["cavity"]["finesse"]
        r.result("linewidth_cav", cavity_linewidth(F, g.L_eff), "Hz", "relation:cavity_linewidth")
    _emit(args, r, "metrics_geometry")


# ---------------------------------------------------------------- purcell

def _purcell_inputs(r, path):
    cfg = _cavity_config(r, path)
    em = cfg.emitter()
    cav, w0_source = cfg.cavity()
    r.param("emitter.gamma0", em.gamma0, "Hz", "relation:lifetime_to_rate")
    if w0_source != "input":
        r.param("cavity.w0", cav.w0, "m", w0_source)
    return cfg, em, cav


def _purcell_summary(r, em, cav):
    bad_c, bad_e = effective_rate_limits(em, cav)
    r.result("linewidth_cav", cav.linewidth, "Hz", "relation:cavity_linewidth")
    r.result("mode_volume", cav.mode_volume, "m^3", "relation:mode_volume")
    r.result("purcell_prefactor", purcell_prefactor(em, cav), "1", "relation:purcell_prefactor")
    r.result("g0_over_2pi", coupling_rate_g0(em, cav) / (2 * math.pi), "Hz", "relation:coupling_rate_g0")
    r.result("R0", effective_rate_R0(em, cav), "Hz", "relation:effective_rate")
    r.result("R0_bad_cavity_limit", bad_c, "Hz", "relation:effective_rate_bad_cavity")
    r.result("R0_bad_emitter_limit", bad_e, "Hz", "relation:effective_rate_bad_emitter")
    r.result("regime", regime(em, cav), "", "rule:linewidth_ratio_10")
    r.result("F_P_ideal", purcell_ideal(em, cav), "1", "relation:purcell_ideal")


def cmd_purcell_ideal(args):
    r = Report("purcell ideal")
    _, em, cav = _purcell_inputs(r, args.config)
    _purcell_summary(r, em, cav)
    _emit(args, r, "purcell_ideal")


def cmd_purcell_jitter(args):
    r = Report("purcell jitter")
    cfg, em, cav = _purcell_inputs(r, args.config)
    sigmas = cfg.jitter_sigmas()
    _purcell_summary(r, em, cav)
    models = [JitterModel.for_cavity(s, cav, em) for s in sigmas]
    values = [purcell_jittered(em, cav, m) for m in models]
    r.table("jitter", {
        "sigma_pm": [s * 1e12 for s in sigmas],
        "sigma_nu_GHz": [m.sigma_nu / 1e9 for m in models],
        "R_sigma_GHz": [effective_rate(em, cav, m) / 1e9 for m in models],
        "F_P_eff": values,
    }, "relation:purcell_jittered")
    r.result("F_P_eff_min", min(values), "1", "relation:purcell_jittered")
    r.result("F_P_eff_max", max(values), "1", "relation:purcell_jittered")
    _emit(args, r, "purcell_jitter")


def cmd_purcell_curve(args):
    r = Report("purcell curve")
    cfg, em, cav = _purcell_inputs(r, args.config)
    curve = purcell_curve(em, cav, cfg.jitter_sigmas(), cfg.finesse_grid())
    r.table("curve", curve.columns(), "relation:purcell_ideal+purcell_jittered")
    for k, v in curve.annotations.items():
        unit = "Hz" if k.endswith("_Hz") else "1"
        r.result(k, v, unit, "relation:cavity_linewidth_crossover")
    _emit(args, r, "purcell_curve", "csv")


def cmd_purcell_from_decay(args):
    r = Report("purcell from-decay")
    r.param("tau_ref", args.tau_ref, "s")
    r.param("tau_cav", args.tau_cav, "s")
    r.param("eta_QE", args.eta_qe, "1")
    F = purcell_from_decay(args.tau_ref, args.tau_cav, args.eta_qe)
    r.result("lifetime_ratio", args.tau_ref / args.tau_cav, "1", "relation:lifetime_ratio")
    r.result("F_P_eff", F, "1", "relation:purcell_from_decay")
    r.result("suppressed", bool(F < 0), "", "relation:purcell_from_decay")
    if F >= 0:
        r.result("eta_mode", mode_fraction(F), "1", "relation:mode_fraction")
    else:
        r.warnings.append("in-cavity decay is slower than the reference: emission is suppressed")
    _emit(args, r, "purcell_from_decay")


# ---------------------------------------------------------------- budget

def cmd_budget(args):
    r = Report("budget")
    cfg = load_budget_config(args.config)
    r.file(args.config)
    r.params(cfg.echo)
    chain = cfg.chain
    for name, value in chain.factors().items():
        r.result(name, value, "1", cfg.sources[name])
    total = chain_total(chain, include_excitation=False)
    r.result("eta_tot_without_excitation", total, "1", "relation:chain_product")
    exc = chain.eta_exc
    exc_source = cfg.sources.get("eta_exc", "input")
    if cfg.excitation is not None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            exc = infer_excitation(cfg.excitation["measured_rate"], cfg.excitation["rep_rate"], total)
        r.warnings.extend(str(w.message) for w in caught)
        exc_source = "relation:infer_excitation"
        r.result("eta_tot_measured", cfg.excitation["measured_rate"] / cfg.excitation["rep_rate"], "1",
                 "relation:count_rate_ratio")
        r.result("eta_exc", exc, "1", exc_source)
    if exc is not None:
        r.result("eta_tot", total * exc, "1", "relation:chain_product")
    names = list(chain.factors())
    values = list(chain.factors().values())
    prov = [chain.provenance.get(k, "") for k in names]
    srcs = [cfg.sources[k] for k in names]
    if cfg.excitation is not None:
        names.append("eta_exc")
        values.append(exc)
        prov.append("inferred")
        srcs.append(exc_source)
    names.append("eta_tot_without_excitation")
    values.append(total)
    prov.append("calculated")
    srcs.append("relation:chain_product")
    r.table("budget", {"factor": names, "value": values, "provenance": prov, "source": srcs},
            "relation:chain_product")
    _emit(args, r, "budget")


# ---------------------------------------------------------------- analyze

def _record(r, path, kind, **meta):
    rec = read_record(path, kind, **meta)
    r.file(path)
    return rec


def cmd_analyze_noise(args):
    r = Report("analyze noise")
    trace = _record(r, args.input, "trace", flank_slope=args.flank_slope)
    r.param("flank_slope", args.flank_slope, "1/m")
    kw = {"window": args.window}
    if args.band:
        kw["band"] = tuple(args.band)
        r.param("band", list(args.band), "Hz")
    if args.baseline:
        kw["baseline"] = _record(r, args.baseline, "trace", flank_slope=args.flank_slope)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ns = noise_spectrum(trace, **kw)
    r.warnings.extend(str(w.message) for w in caught)
    r.table("cumulative_rms", {"frequency_Hz": ns.frequencies_, "cumulative_rms_m": ns.cumulative_rms_},
            "fit:periodogram_cumulative_rms")
    r.result("sigma", ns.sigma_, "m", "fit:periodogram_cumulative_rms")
    r.result("sigma_time_domain", float(np.std(trace.samples) / args.flank_slope), "m", "relation:flank_linear")
    _emit(args, r, "analyze_noise")


def cmd_analyze_scan(args):
    r = Report("analyze scan")
    spec = _record(r, args.input, "spectrum")
    r.param("prominence", args.prominence, "1")
    fit = resonance_fit(spec, dips=not args.peaks, prominence=args.prominence)
    res = fit.resonances_
    r.table("resonances", {
        "center_nm": [x.center * 1e9 for x in res],
        "center_err_nm": [x.center_err * 1e9 for x in res],
        "fwhm_nm": [x.fwhm * 1e9 for x in res],
        "fwhm_err_nm": [x.fwhm_err * 1e9 for x in res],
        "amplitude": [x.amplitude for x in res],
        "amplitude_err": [x.amplitude_err for x in res],
    }, "fit:lorentzian_least_squares")
    r.result("offset", fit.offset_, "counts", "fit:lorentzian_least_squares")
    r.result("n_resonances", len(res), "1", "fit:peak_detection")
    if fit.finesse_ is not None:
        r.result("spacing", fit.spacing_, "m", "fit:lorentzian_least_squares")
        r.result("finesse", fit.finesse_, "1", "relation:finesse_spacing_over_fwhm")
    else:
        r.warnings.append("only one resonance found; finesse needs two")
    r.result("contrast", fit.contrast_, "1", "relation:dip_depth_over_offset")
    r.result("residual_norm", fit.residual_norm_, "counts", "fit:lorentzian_least_squares")
    _emit(args, r, "analyze_scan")


def cmd_analyze_dispersion(args):
    r = Report("analyze dispersion")
    scan = _record(r, args.input, "dispersion")
    r.param("prominence", args.prominence, "1")
    r.param("n_sigma", args.n_sigma, "1")
    r.param("min_run", args.min_run, "1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = dispersion_analyze(scan, prominence=args.prominence, n_sigma=args.n_sigma, min_run=args.min_run)
    r.warnings.extend(str(w.message) for w in caught)
    r.table("lengths", {
        "z_set_nm": scan.z_set * 1e9,
        "L_opt_um": d.L_opt_ * 1e6,
        "n_modes": [m.size for m in d.mode_wavelengths_],
    }, "relation:optical_length_from_resonances")
    r.result("partial", bool(d.partial_), "", "fit:mode_detection")
    c = d.contact_
    r.result("contact_detected", bool(c.detected), "", "rule:linear_residual_run")
    if c.detected:
        r.result("contact_index", c.index, "1", "rule:linear_residual_run")
        r.result("z_contact", c.z_set, "m", "rule:linear_residual_run")
        r.result("L_contact", c.L_contact, "m", "relation:optical_length_from_resonances")
    r.result("residual_sigma", c.residual_sigma, "m", "fit:linear_length_calibration")
    if d.z_to_length_ is not None:
        r.result("length_per_setpoint", d.z_to_length_[0], "1", "fit:linear_length_calibration")
        r.result("length_at_zero_setpoint", d.z_to_length_[1], "m", "fit:linear_length_calibration")
    if args.summed:
        write_record(d.summed_spectrum_, args.summed)
        r.file(args.summed)
    _emit(args, r, "analyze_dispersion")


def cmd_analyze_decay(args):
    r = Report("analyze decay")
    hist = _record(r, args.input, "decay")
    kw = {"use_irf": not args.no_irf}
    if args.start is not None:
        kw["start"] = args.start
        r.param("start", args.start, "s")
    if args.stop is not None:
        kw["stop"] = args.stop
        r.param("stop", args.stop, "s")
    fit = decay_fit(hist, **kw)
    src = "fit:poisson_likelihood" + ("_irf_convolved" if fit.used_irf_ else "")
    r.result("tau", fit.tau_, "s", src, fit.tau_err_)
    r.result("amplitude", fit.amplitude_, "counts/s", src, fit.amplitude_err_)
    r.result("background", fit.background_, "counts", src, fit.background_err_)
    r.result("deviance", fit.deviance_, "1", src)
    r.result("window_start_bin", fit.window_[0], "1", "rule:peak_plus_two_irf_fwhm" if args.start is None else "input")
    r.result("window_stop_bin", fit.window_[1], "1", "input" if args.stop is not None else "rule:last_bin")
    r.result("tau_at_bound", fit.at_bound_, "", src)
    if fit.at_bound_:
        r.warnings.append("decay time ended at a bound of the allowed range")
    _emit(args, r, "analyze_decay")


def cmd_analyze_g2(args):
    r = Report("analyze g2")
    hist = _record(r, args.input, "g2", rep_period=args.rep_period)
    r.param("rep_period", args.rep_period, "s")
    r.param("n_side_peaks", args.side_peaks, "1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        a = g2_raw(hist, n_side_peaks=args.side_peaks, window=args.window)
    r.warnings.extend(str(w.message) for w in caught)
    r.result("g2_raw", a.g2_raw_, "1", "relation:central_over_side_area", a.g2_raw_err_)
    r.result("central_area", a.central_area_, "counts", "fit:window_sum")
    r.result("side_mean", a.side_mean_, "counts", "fit:window_sum")
    r.result("peak_fwhm", a.peak_fwhm_, "s", "fit:folded_comb_width")
    if a.on_fraction_ is not None:
        r.result("on_fraction", a.on_fraction_, "1", "fit:bunching_envelope")
        r.result("bunching_time", a.bunching_time_, "s", "fit:bunching_envelope")
    r.table("peaks", {"delay_ns": a.peak_delays_ * 1e9, "area": a.peak_areas_, "normalized": a.normalized_areas_},
            "fit:window_sum")
    _emit(args, r, "analyze_g2")


# ---------------------------------------------------------------- synth

def _synth_params(kind, items):
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        if key not in SYNTH_DEFAULTS[kind]:
            raise ConfigError(f"unknown {kind} parameter {key!r}; allowed: {', '.join(SYNTH_DEFAULTS[kind])}")
        value = yaml.safe_load(text)
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        params[key] = value
    return params


def cmd_synth(args):
    params = _synth_params(args.kind, args.set)
    text = record_csv(generate(args.kind, params, args.seed))
    if args.format == "json":
        r = Report(f"synth {args.kind}")
        r.param("seed", args.seed, "1")
        for k, v in params.items():
            r.param(f"{args.kind}.{k}", list(np.ravel(v)) if isinstance(v, tuple) else v, "SI")
        r.result("record_sha256", hashlib.sha256(text.encode()).hexdigest(), "", "relation:generator")
        r.result("record_header", text.split("\n", 1)[0], "", "relation:generator")
        r.result("record_rows", text.count("\n") - 1, "1", "relation:generator")
        _emit(args, r, f"synth_{args.kind}")
    else:
        _emit_text(args, text, f"synth_{args.kind}.csv")


# ---------------------------------------------------------------- dipole

def _distances(args):
    if args.points < 2 or not 0 <= args.start < args.stop:
        raise ValueError("need 0 <= start < stop and at least 2 points")
    return np.linspace(args.start, args.stop, args.points)


def _dipole_table(r, rates, source):
    r.table("rates", {
        "distance_nm": rates.distance * 1e9,
        "parallel": rates.parallel,
        "perpendicular": rates.perpendicular,
        "average": rates.isotropic,
    }, source)
    r.result("average_max", float(np.max(rates.isotropic)), "1", source)
    r.result("average_min", float(np.min(rates.isotropic)), "1", source)


def cmd_dipole_pec(args):
    r = Report("dipole pec")
    d = _distances(args)
    r.param("wavelength", args.wavelength, "m")
    r.param("host_index", args.host_index, "1")
    par = np.array([pec_enhancement(DipoleConfig(x, args.wavelength, args.host_index, "parallel")) for x in d])
    perp = np.array([pec_enhancement(DipoleConfig(x, args.wavelength, args.host_index, "perpendicular")) for x in d])
    _dipole_table(r, DipoleRates(d, par, perp), "relation:image_dipole_closed_form")
    _emit(args, r, "dipole_pec", "csv")


def cmd_dipole_dbr(args):
    r = Report("dipole dbr")
    stack = _stack(r, args.stack)
    d = _distances(args)
    r.param("wavelength", args.wavelength, "m")
    r.param("u_max", args.u_max, "1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rates = enhancement_curve(d, args.wavelength, stack, u_max=args.u_max)
        if args.qd_distance is not None:
            at = enhancement_curve([args.qd_distance], args.wavelength, stack, u_max=args.u_max)
    r.warnings.extend(str(w.message) for w in caught)
    _dipole_table(r, rates, "relation:angular_spectrum")
    if args.qd_distance is not None:
        r.param("qd_distance", args.qd_distance, "m")
        r.result("average_at_qd", float(at.isotropic[0]), "1", "relation:angular_spectrum")
    _emit(args, r, "dipole_dbr", "csv")


# ---------------------------------------------------------------- reproduce

def _out(args):
    return _output_dir(args) or Path("fibercavity_output")


def _save(directory, name, report, csv=True):
    _write(report.to_json(), directory / f"{name}.json")
    if csv and report.primary is not None:
        _write(report.to_csv(), directory / f"{name}.csv")


def _table1(r):
    path = bundled("configs", "table1_decays.yaml")
    eta, rows = load_table_config(path)
    r.file(path)
    r.param("eta_QE", eta, "1")
    cols = {k: [] for k in ("label", "wavelength_nm", "tau_ref_ns", "tau_ref_err_ns", "tau_cav_ns",
                            "tau_cav_err_ns", "lifetime_ratio", "lifetime_ratio_err", "F_P_eff", "F_P_eff_err")}
    for row in rows:
        fits = []
        for key in ("reference", "cavity"):
            fits.append(decay_fit(_record(r, row[key], "decay")))
        ref, cav = fits
        ratio = ref.tau_ / cav.tau_
        ratio_err = ratio * math.hypot(ref.tau_err_ / ref.tau_, cav.tau_err_ / cav.tau_)
        cols["label"].append(row["label"])
        cols["wavelength_nm"].append(row["wavelength"] * 1e9)
        cols["tau_ref_ns"].append(ref.tau_ * 1e9)
        cols["tau_ref_err_ns"].append(ref.tau_err_ * 1e9)
        cols["tau_cav_ns"].append(cav.tau_ * 1e9)
        cols["tau_cav_err_ns"].append(cav.tau_err_ * 1e9)
        cols["lifetime_ratio"].append(ratio)
        cols["lifetime_ratio_err"].append(ratio_err)
        cols["F_P_eff"].append(purcell_from_decay(ref.tau_, cav.tau_, eta))
        cols["F_P_eff_err"].append(ratio_err / eta)
    return cols


def reproduce_table1(args, directory):
    r = Report("reproduce table1")
    cols = _table1(r)
    r.table("table1", cols, "fit:poisson_likelihood_irf_convolved+relation:purcell_from_decay")
    for label, F, err in zip(cols["label"], cols["F_P_eff"], cols["F_P_eff_err"]):
        r.result(f"F_P_eff[{label}]", F, "1", "relation:purcell_from_decay", err)
    _save(directory, "table1", r)


def reproduce_fig5(args, directory):
    r = Report("reproduce fig5")
    cfg_path = bundled("configs", "paper_cavity.yaml")
    cfg, em, cav = _purcell_inputs(r, cfg_path)
    curve = purcell_curve(em, cav, cfg.jitter_sigmas(), cfg.finesse_grid())
    r.table("curve", curve.columns(), "relation:purcell_ideal+purcell_jittered", primary=True)
    for k, v in curve.annotations.items():
        r.result(k, v, "Hz" if k.endswith("_Hz") else "1", "relation:cavity_linewidth_crossover")
    pts_path = bundled("configs", "fig5_points.yaml")
    F_table, F_table_err, points = load_points_config(pts_path)
    r.file(pts_path)
    table = _table1(r)
    labels = [p["label"] for p in points] + [f"table {x}" for x in table["label"]]
    r.table("points", {
        "label": labels,
        "finesse": [p["finesse"] for p in points] + [F_table] * len(table["label"]),
        "finesse_err": [p["finesse_err"] for p in points] + [F_table_err] * len(table["label"]),
        "F_P_eff": [p["purcell"] for p in points] + table["F_P_eff"],
        "F_P_eff_err": [p["purcell_err"] for p in points] + table["F_P_eff_err"],
    }, "input+relation:purcell_from_decay")
    sigmas = cfg.jitter_sigmas()
    for F in (1788.0, 3062.0):
        c = cav.with_finesse(F)
        band = [purcell_jittered(em, c, s) for s in (min(sigmas), max(sigmas))]
        r.result(f"band_low[F={F:g}]", min(band), "1", "relation:purcell_jittered")
        r.result(f"band_high[F={F:g}]", max(band), "1", "relation:purcell_jittered")
        r.result(f"F_P_ideal[F={F:g}]", purcell_ideal(em, c), "1", "relation:purcell_ideal")
    _save(directory, "fig5", r)
    _write(csv_text(r.tables["points"][0]), directory / "fig5_points.csv")


def reproduce_table2(args, directory):
    path = bundled("configs", "table2_budget.yaml")
    r = Report("reproduce table2")
    cfg = load_budget_config(path)
    r.file(path)
    r.params(cfg.echo)
    total = chain_total(cfg.chain, include_excitation=False)
    for name, value in cfg.chain.factors().items():
        r.result(name, value, "1", cfg.sources[name])
    r.result("eta_tot_without_excitation", total, "1", "relation:chain_product")
    exc = infer_excitation(cfg.excitation["measured_rate"], cfg.excitation["rep_rate"], total)
    r.result("eta_exc", exc, "1", "relation:infer_excitation")
    names = list(cfg.chain.factors()) + ["eta_tot_without_excitation", "eta_exc"]
    values = list(cfg.chain.factors().values()) + [total, exc]
    prov = [cfg.chain.provenance.get(k, "") for k in cfg.chain.factors()] + ["calculated", "inferred"]
    r.table("table2", {"factor": names, "value": values, "provenance": prov}, "relation:chain_product")
    _save(directory, "table2", r)


def reproduce_fig2a(args, directory):
    r = Report("reproduce fig2a")
    stack = _stack(r, "paper_cavity.yaml")
    lam = 1310e-9
    step = lam / 40.0 / 3.41
    r.param("wavelength", lam, "m")
    r.param("grid_step", step, "m")
    prof = field_profile(stack, lam, step, reference="gaas_qd")
    L = effective_length(prof)
    L_half = effective_length(field_profile(stack, lam, step / 2, reference="gaas_qd"))
    r.table("field", {"z_nm": prof.z * 1e9, "intensity": prof.intensity, "n_real": prof.index},
            "relation:transfer_matrix")
    r.result("L_eff", L_half, "m", "relation:effective_length")
    r.result("grid_refinement_change", abs(L - L_half) / L_half, "1", "check:grid_halving")
    sc = _stack(r, "semiconductor_dbr.yaml")
    fib = _stack(r, "fiber_coating.yaml").reversed()
    pen_sc = penetration_depth(sc, lam)
    pen_fib = penetration_depth(fib, lam)
    r.result("L_pen_sc", pen_sc.length, "m", "relation:penetration_depth")
    r.result("L_pen_fib_model", pen_fib.length, "m", "relation:penetration_depth(model_coating)")
    membrane = sum(x.thickness for x in stack.layers if x.label.startswith("gaas_"))
    air = sum(x.thickness for x in stack.layers if x.label == "air_gap")
    r.result("L_mem_optical", membrane * 3.41, "m", "relation:optical_length")
    r.result("L_opt", pen_fib.length + air + membrane * 3.41 + pen_sc.length, "m", "relation:optical_length")
    _save(directory, "fig2a", r)


def reproduce_dipole(args, directory):
    r = Report("reproduce dipole")
    stack = _stack(r, "dbr_10_layers.yaml")
    lam = 1310e-9
    qd = 192.0821e-9
    d = np.linspace(0.0, 1000e-9, 101)
    rates = enhancement_curve(d, lam, stack)
    at = enhancement_curve([qd], lam, stack)
    r.param("wavelength", lam, "m")
    r.param("qd_distance", qd, "m")
    _dipole_table(r, rates, "relation:angular_spectrum")
    r.result("average_at_qd", float(at.isotropic[0]), "1", "relation:angular_spectrum")
    _save(directory, "dipole", r)


REPRODUCE = {
    "fig2a": reproduce_fig2a,
    "fig5": reproduce_fig5,
    "table1": reproduce_table1,
    "table2": reproduce_table2,
    "dipole": reproduce_dipole,
}


def cmd_reproduce(args):
    directory = _out(args)
    directory.mkdir(parents=True, exist_ok=True)
    targets = list(REPRODUCE) if args.target == "all" else [args.target]
    for t in targets:
        REPRODUCE[t](args, directory)
        print(f"{t}: written to {directory}", file=sys.stderr)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", help="output file (default: standard output or the output directory)")
    common.add_argument("--format", choices=("json", "csv"), help="report format")
    common.add_argument("--output-dir", help=f"output directory (default: ${ENV_OUTPUT_DIR})")

    p = argparse.ArgumentParser(prog="fibercavity", description="Open fiber-cavity modelling and analysis toolkit.")
    p.add_argument("--version", action="version", version=f"fibercavity {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")

    def group(name, help_text):
        g = sub.add_parser(name, help=help_text)
        return g, g.add_subparsers(dest="subcommand", metavar="subcommand", required=True)

    # tmm
    _, tmm = group("tmm", "transfer-matrix calculations on stack files")
    s = tmm.add_parser("spectrum", parents=[common], help="R, T, A versus wavelength (CSV)")
    s.add_argument("--stack", required=True)
    s.add_argument("--start", type=LENGTH, required=True)
    s.add_argument("--stop", type=LENGTH, required=True)
    s.add_argument("--points", type=int, default=401)
    s.set_defaults(func=cmd_tmm_spectrum)
    for name, func, help_text in (("field", cmd_tmm_field, "standing-wave intensity profile (CSV)"),
                                  ("leff", cmd_tmm_leff, "effective energy-distribution length")):
        s = tmm.add_parser(name, parents=[common], help=help_text)
        s.add_argument("--stack", required=True)
        s.add_argument("--wavelength", type=LENGTH, required=True)
        s.add_argument("--step", type=LENGTH, help="grid step (default wavelength/40/max n)")
        s.add_argument("--padding", type=LENGTH, help="ambient length on both sides")
        s.add_argument("--reference", help="label of the normalisation layer")
        s.set_defaults(func=func)
    s = tmm.add_parser("penetration", parents=[common], help="group-delay penetration depth")
    s.add_argument("--stack", required=True)
    s.add_argument("--wavelength", type=LENGTH, required=True)
    s.add_argument("--reverse", action="store_true", help="illuminate from the exit medium")
    s.set_defaults(func=cmd_tmm_penetration)

    # metrics
    _, met = group("metrics", "cavity figures of merit from a cavity config")
    for name, func in (("finesse", cmd_metrics_finesse), ("contrast", cmd_metrics_contrast),
                       ("geometry", cmd_metrics_geometry)):
        s = met.add_parser(name, parents=[common])
        s.add_argument("--config", required=True)
        s.set_defaults(func=func)
    s = met.add_parser("scatter", parents=[common])
    s.add_argument("--config")
    s.add_argument("--sq", type=LENGTH, help="rms roughness")
    s.add_argument("--wavelength", type=LENGTH)
    s.set_defaults(func=cmd_metrics_scatter)

    # purcell
    _, pur = group("purcell", "Purcell factors")
    for name, func in (("ideal", cmd_purcell_ideal), ("jitter", cmd_purcell_jitter), ("curve", cmd_purcell_curve)):
        s = pur.add_parser(name, parents=[common])
        s.add_argument("--config", required=True)
        s.set_defaults(func=func)
    s = pur.add_parser("from-decay", parents=[common], help="effective Purcell factor from two lifetimes")
    s.add_argument("--tau-ref", type=TIME, required=True)
    s.add_argument("--tau-cav", type=TIME, required=True)
    s.add_argument("--eta-qe", type=FRACTION, default=1.0)
    s.set_defaults(func=cmd_purcell_from_decay)

    # budget
    s = sub.add_parser("budget", parents=[common], help="photon-efficiency chain")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_budget)

    # analyze
    _, ana = group("analyze", "measurement-record analysis")
    s = ana.add_parser("noise", parents=[common], help="cumulative rms displacement of a flank trace")
    s.add_argument("--input", required=True)
    s.add_argument("--flank-slope", type=float, required=True, help="intensity per metre")
    s.add_argument("--band", type=float, nargs=2, metavar=("LO_HZ", "HI_HZ"))
    s.add_argument("--baseline", help="noise-floor trace with the same sampling")
    s.add_argument("--window", default="hann")
    s.set_defaults(func=cmd_analyze_noise)
    s = ana.add_parser("scan", parents=[common], help="Lorentzian fit of a cavity scan")
    s.add_argument("--input", required=True)
    s.add_argument("--prominence", type=float, default=0.2)
    s.add_argument("--peaks", action="store_true", help="fit peaks instead of dips")
    s.set_defaults(func=cmd_analyze_scan)
    s = ana.add_parser("dispersion", parents=[common], help="length calibration and contact detection")
    s.add_argument("--input", required=True)
    s.add_argument("--prominence", type=float, default=0.2)
    s.add_argument("--n-sigma", type=float, default=3.0)
    s.add_argument("--min-run", type=int, default=3)
    s.add_argument("--summed", help="write the summed spectrum to this CSV")
    s.set_defaults(func=cmd_analyze_dispersion)
    s = ana.add_parser("decay", parents=[common], help="mono-exponential decay fit")
    s.add_argument("--input", required=True)
    s.add_argument("--no-irf", action="store_true")
    s.add_argument("--start", type=TIME)
    s.add_argument("--stop", type=TIME)
    s.set_defaults(func=cmd_analyze_decay)
    s = ana.add_parser("g2", parents=[common], help="raw g2 from peak areas")
    s.add_argument("--input", required=True)
    s.add_argument("--rep-period", type=TIME, required=True)
    s.add_argument("--side-peaks", type=int, default=10)
    s.add_argument("--window", type=TIME, help="integration half-window (default rep_period/4)")
    s.set_defaults(func=cmd_analyze_g2)

    # synth
    s = sub.add_parser("synth", parents=[common], help="seeded synthetic record")
    s.add_argument("kind", choices=tuple(SYNTH_DEFAULTS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="generator parameter in SI units")
    s.set_defaults(func=cmd_synth)

    # dipole
    _, dip = group("dipole", "emission rate of a dipole near a mirror")
    for name, func in (("pec", cmd_dipole_pec), ("dbr", cmd_dipole_dbr)):
        s = dip.add_parser(name, parents=[common])
        s.add_argument("--wavelength", type=LENGTH, required=True)
        s.add_argument("--start", type=LENGTH, default=0.0)
        s.add_argument("--stop", type=LENGTH, required=True)
        s.add_argument("--points", type=int, default=101)
        s.set_defaults(func=func)
        if name == "pec":
            s.add_argument("--host-index", type=float, default=1.0)
        else:
            s.add_argument("--stack", required=True)
            s.add_argument("--qd-distance", type=LENGTH)
            s.add_argument("--u-max", type=float, default=5.0)

    # reproduce
    s = sub.add_parser("reproduce", help="regenerate a figure or table from bundled inputs")
    s.add_argument("target", choices=(*REPRODUCE, "all"))
    s.add_argument("--output-dir", help=f"output directory (default: ${ENV_OUTPUT_DIR} or ./fibercavity_output)")
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"fibercavity: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"fibercavity: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
