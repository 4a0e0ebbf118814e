import json
import subprocess
import sys

import jsonschema
import pytest

from fibercavity.analysis import generate, write_record
from fibercavity.analysis.synth import FIXTURES
from fibercavity.cli import ENV_OUTPUT_DIR, REPRODUCE, SCHEMA_PATH, main
from fibercavity.io import bundled

SCHEMA = json.loads(SCHEMA_PATH.read_text())
CAVITY = str(bundled("configs", "paper_cavity.yaml"))


@pytest.fixture(scope="module")
def records(tmp_path_factory):
    d = tmp_path_factory.mktemp("records")
    out = {kind: write_record(generate(kind, seed=1), d / f"{kind}.csv") for kind in ("noise", "resonance", "g2")}
    out["dispersion"] = write_record(generate("dispersion", {"L_start": 10.2e-6}, seed=1), d / "dispersion.csv")
    out["decay"] = bundled("fixtures", next(iter(FIXTURES)))
    return out


def commands(records):
    return {
        "tmm_spectrum": ["tmm", "spectrum", "--stack", "fiber_coating.yaml", "--start", "1200 nm",
                         "--stop", "1400 nm", "--points", "11"],
        "tmm_leff": ["tmm", "leff", "--stack", "paper_cavity.yaml", "--wavelength", "1310 nm",
                     "--reference", "gaas_qd"],
        "tmm_penetration": ["tmm", "penetration", "--stack", "semiconductor_dbr.yaml", "--wavelength", "1310 nm"],
        "metrics_finesse": ["metrics", "finesse", "--config", CAVITY],
        "metrics_contrast": ["metrics", "contrast", "--config", CAVITY],
        "metrics_geometry": ["metrics", "geometry", "--config", CAVITY],
        "metrics_scatter": ["metrics", "scatter", "--sq", "0.3 nm", "--wavelength", "1310 nm"],
        "purcell_ideal": ["purcell", "ideal", "--config", CAVITY],
        "purcell_jitter": ["purcell", "jitter", "--config", CAVITY],
        "purcell_curve": ["purcell", "curve", "--config", CAVITY],
        "purcell_from_decay": ["purcell", "from-decay", "--tau-ref", "1.007 ns", "--tau-cav", "0.409 ns"],
        "budget": ["budget", "--config", str(bundled("configs", "table2_budget.yaml"))],
        "analyze_noise": ["analyze", "noise", "--input", str(records["noise"]), "--flank-slope", "1e9",
                          "--band", "10", "200"],
        "analyze_scan": ["analyze", "scan", "--input", str(records["resonance"])],
        "analyze_dispersion": ["analyze", "dispersion", "--input", str(records["dispersion"])],
        "analyze_decay": ["analyze", "decay", "--input", str(records["decay"])],
        "analyze_g2": ["analyze", "g2", "--input", str(records["g2"]), "--rep-period", "13.1578947368 ns"],
        "synth": ["synth", "decay", "--seed", "3", "--set", "tau=0.5e-9"],
        "dipole_pec": ["dipole", "pec", "--wavelength", "1310 nm", "--stop", "500 nm", "--points", "6"],
        "dipole_dbr": ["dipole", "dbr", "--stack", "dbr_10_layers.yaml", "--wavelength", "1310 nm",
                       "--stop", "500 nm", "--points", "6", "--qd-distance", "192 nm"],
    }


COMMANDS = list(commands({k: "" for k in ("noise", "resonance", "g2", "dispersion", "decay")}))


@pytest.mark.parametrize("name", COMMANDS)
def test_json_report_matches_schema(name, records, capsys):
    argv = commands(records)[name]
    assert main([*argv, "--format", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    jsonschema.validate(report, SCHEMA)
    assert report["tool"] == "fibercavity"


@pytest.mark.parametrize("name", COMMANDS)
def test_csv_output_has_header_and_rows(name, records, capsys):
    assert main([*commands(records)[name], "--format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 2
    width = lines[0].count(",")
    assert all(line.count(",") == width for line in lines[1:] if '"' not in line)


def test_report_values(records, capsys):
    assert main(["purcell", "from-decay", "--tau-ref", "1.007 ns", "--tau-cav", "0.409 ns"]) == 0
    report = json.loads(capsys.readouterr().out)
    (value,) = [v["value"] for k, v in report["results"].items() if k.startswith("F_P")]
    assert value == pytest.approx(1.007 / 0.409 - 1, rel=1e-12)
    assert main(["analyze", "decay", "--input", str(records["decay"])]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["inputs"]["files"]
    assert all(len(h) == 64 for h in report["inputs"]["files"].values())


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["tmm"],
    ["metrics", "finesse"],
    ["nonsense"],
    ["synth", "decay", "--seed", "x"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


@pytest.mark.parametrize("argv", [
    ["tmm", "penetration", "--stack", "semiconductor_dbr.yaml", "--wavelength", "1310 ns"],
    ["purcell", "from-decay", "--tau-ref", "1 m", "--tau-cav", "1 ns"],
])
def test_unit_mismatch_is_rejected(argv, capsys):
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert "unit mismatch" in err and "length" in err and "time" in err


def test_bad_config_is_data_error(tmp_path, capsys):
    bad = tmp_path / "cavity.yaml"
    bad.write_text("wavelength: 1310 nm\n")
    assert main(["metrics", "finesse", "--config", str(bad)]) == 3
    assert "cavity.yaml:1:" in capsys.readouterr().err


def test_unit_mismatch_in_config_names_both_units(tmp_path, capsys):
    text = bundled("configs", "paper_cavity.yaml").read_text()
    bad = tmp_path / "cavity.yaml"
    bad.write_text(text.replace("RC_fiber: 34.3 um", "RC_fiber: 34.3 ns"))
    line = text.splitlines().index("  RC_fiber: 34.3 um") + 1
    assert main(["metrics", "geometry", "--config", str(bad)]) == 3
    err = capsys.readouterr().err
    assert f"cavity.yaml:{line}:" in err
    assert "length" in err and "time" in err


def test_missing_input_is_data_error(tmp_path, capsys):
    assert main(["analyze", "decay", "--input", str(tmp_path / "absent.csv")]) == 3
    assert main(["synth", "decay", "--set", "taus=1"]) == 3


def test_wrong_record_header_is_data_error(tmp_path, records, capsys):
    assert main(["analyze", "decay", "--input", str(records["g2"])]) == 3
    assert "unexpected CSV header" in capsys.readouterr().err


def test_environment_output_directory(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path))
    assert main(["metrics", "finesse", "--config", CAVITY]) == 0
    assert capsys.readouterr().out == ""
    written = list(tmp_path.iterdir())
    assert len(written) == 1 and written[0].suffix == ".json"
    jsonschema.validate(json.loads(written[0].read_text()), SCHEMA)


def test_explicit_output_beats_directory(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "dir"))
    target = tmp_path / "finesse.csv"
    assert main(["metrics", "finesse", "--config", CAVITY, "-o", str(target), "--format", "csv"]) == 0
    assert target.read_text().startswith("quantity,value")
    assert not (tmp_path / "dir").exists()


def test_synth_csv_round_trips_through_analysis(tmp_path, capsys):
    target = tmp_path / "decay.csv"
    assert main(["synth", "decay", "--set", "tau=0.5e-9", "-o", str(target)]) == 0
    assert main(["analyze", "decay", "--input", str(target)]) == 0
    report = json.loads(capsys.readouterr().out)
    tau = report["results"]["tau"]
    assert abs(tau["value"] - 0.5e-9) < 4 * tau["uncertainty"]


@pytest.mark.parametrize("target", list(REPRODUCE))
def test_reproduce_outputs_match_schema(target, tmp_path):
    assert main(["reproduce", target, "--output-dir", str(tmp_path)]) == 0
    outputs = list(tmp_path.rglob("*"))
    assert outputs
    for path in tmp_path.rglob("*.json"):
        jsonschema.validate(json.loads(path.read_text()), SCHEMA)


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "fibercavity.cli", "--version"], capture_output=True, text=True, check=False)
    assert out.returncode == 0 and out.stdout.startswith("fibercavity ")
