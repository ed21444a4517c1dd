"""CLI contract tests: parsing, exit codes, determinism, provenance."""

import hashlib
import json
import os

import numpy as np
import pytest

from rydberg_transistor import cli, models
from rydberg_transistor.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    main,
    parse_and_validate,
    read_record,
    read_table,
)
from rydberg_transistor.detection import CountHistogram
from rydberg_transistor.errors import ConfigError, FitConvergenceError
from rydberg_transistor.fitting import DataSet

SMALL_CFG = """
[simulation]
runs = 120
seed = 11
source_rate = 0.69
t_int = 30
retention_tau = inf

[scan]
gate_values = 0.5 1.0 2.0
source_values = 40 120 240
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CFG, encoding="utf-8")
    return str(path)


def read_bytes_map(directory, skip_provenance=True):
    out = {}
    for name in sorted(os.listdir(directory)):
        if skip_provenance and name.endswith("provenance.json"):
            continue
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = fh.read()
    return out


# ---------------------------------------------------------------------------
# parsing and validation


def test_parse_same_argv_gives_identical_manifest(small_cfg, tmp_path):
    argv = ["simulate", "--seed", "42", "--runs", "250", "--config", small_cfg,
            "--output", str(tmp_path / "o")]
    m1 = parse_and_validate(argv)
    m2 = parse_and_validate(argv)
    assert m1 == m2
    assert m1.seed == 42
    assert m1.runs == 250
    assert m1.command == "simulate"


def test_parse_flags_override_config(small_cfg):
    m = parse_and_validate(["simulate", "--config", small_cfg])
    assert m.seed == 11 and m.runs == 120  # from file
    m = parse_and_validate(["simulate", "--config", small_cfg, "--seed", "3", "--runs", "7"])
    assert m.seed == 3 and m.runs == 7  # flags win


def test_parse_runs_zero_names_invariant(small_cfg):
    with pytest.raises(ConfigError) as err:
        parse_and_validate(["simulate", "--config", small_cfg, "--runs", "0"])
    assert any("runs >= 1" in v for v in err.value.violations)
    assert main(["simulate", "--config", small_cfg, "--runs", "0"]) == EXIT_CONFIG


def test_parse_lists_every_violation(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(
        "[transistor]\nod_sp = -1\neta_det = 0\n[simulation]\nt_int = 0\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError) as err:
        parse_and_validate(["simulate", "--config", str(cfg)])
    joined = " ".join(err.value.violations)
    assert "od_sp" in joined and "eta_det" in joined and "t_int" in joined


def test_unknown_flag_usage_error():
    assert main(["simulate", "--bogus"]) == EXIT_USAGE
    assert main(["not-a-command"]) == EXIT_USAGE


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "weird.cfg"
    cfg.write_text("[simulation]\nwarp_factor = 9\n", encoding="utf-8")
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG


def test_missing_config_file_rejected():
    assert main(["simulate", "--config", "/nonexistent/nope.cfg"]) == EXIT_CONFIG


def test_builtin_configs_load():
    for name in ("paper30us", "paper90us"):
        m = parse_and_validate(["simulate", "--config", name])
        assert m.resolved["transistor"]["cap"] == 3
    m30 = parse_and_validate(["simulate", "--config", "paper30us"])
    m90 = parse_and_validate(["simulate", "--config", "paper90us"])
    assert m30.resolved["transistor"]["od_sp"] == 0.75
    assert m30.resolved["transistor"]["od_st"] == 2.2
    assert m90.resolved["transistor"]["od_sp"] == 0.45
    assert m90.resolved["transistor"]["od_st"] == 0.94
    assert m90.resolved["simulation"]["t_int"] == 90.0
    assert m90.resolved["saturation"] == {"a": 46.0, "b": 70.0}


# ---------------------------------------------------------------------------
# simulate + determinism + provenance


def test_simulate_writes_outputs_and_sidecar(small_cfg, tmp_path):
    out = tmp_path / "run1"
    assert main(["simulate", "--config", small_cfg, "--output", str(out)]) == EXIT_OK
    hist = CountHistogram.from_csv(out / "histogram.csv")
    assert hist.total == 120
    record = read_record(out / "simulate_summary.csv")
    assert float(record["mean_source_detected"]) == pytest.approx(hist.mean())
    side = json.loads((out / "simulate.provenance.json").read_text(encoding="utf-8"))
    assert side["command"] == "simulate"
    for name, digest in side["outputs"].items():
        with open(out / name, "rb") as fh:
            assert hashlib.sha256(fh.read()).hexdigest() == digest


def test_simulate_byte_identical_across_runs_and_threads(small_cfg, tmp_path):
    outs = []
    for label, threads in (("a", "1"), ("b", "4"), ("c", "0")):
        out = tmp_path / label
        code = main(["simulate", "--config", small_cfg, "--output", str(out),
                     "--threads", threads])
        assert code == EXIT_OK
        outs.append(read_bytes_map(out))
    assert outs[0] == outs[1] == outs[2]


def test_no_silent_overwrite(small_cfg, tmp_path):
    out = tmp_path / "once"
    assert main(["simulate", "--config", small_cfg, "--output", str(out)]) == EXIT_OK
    before = read_bytes_map(out)
    assert main(["simulate", "--config", small_cfg, "--output", str(out)]) == EXIT_IO
    assert read_bytes_map(out) == before
    assert main(["simulate", "--config", small_cfg, "--output", str(out),
                 "--force"]) == EXIT_OK


def test_output_path_collision_is_io_error(small_cfg, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    assert main(["simulate", "--config", small_cfg, "--output", str(blocker)]) == EXIT_IO


def test_simulate_builtin_config_with_self_blockade(tmp_path):
    out = tmp_path / "p90"
    assert main(["simulate", "--config", "paper90us", "--runs", "200",
                 "--output", str(out)]) == EXIT_OK
    hist = CountHistogram.from_csv(out / "histogram.csv")
    # 62 photons in, self-blockade thinning + eta 0.31: means far below 62*0.31
    assert hist.total == 200
    assert hist.mean() < 62.0 * 0.31 * 0.7


def test_simulate_json_format(small_cfg, tmp_path):
    out = tmp_path / "json"
    assert main(["simulate", "--config", small_cfg, "--output", str(out),
                 "--format", "json"]) == EXIT_OK
    hist = CountHistogram.from_json(out / "histogram.json")
    assert hist.total == 120
    summary = json.loads((out / "simulate_summary.json").read_text(encoding="utf-8"))
    assert summary["n_runs"] == 120


# ---------------------------------------------------------------------------
# scans


def test_contrast_scan_matches_model_curve(small_cfg, tmp_path):
    out = tmp_path / "scan"
    code = main(["contrast-scan", "--config", small_cfg, "--runs", "2000",
                 "--output", str(out)])
    assert code == EXIT_OK
    header, rows = read_table(out / "contrast_scan.csv")
    assert header == ["n_gate_in", "contrast", "sigma"]
    assert [r[0] for r in rows] == [0.5, 1.0, 2.0]
    for x, contrast, sigma in rows:
        model = models.expected_contrast_incoming(x, 0.75, 3)
        assert abs(contrast - model) <= 4 * sigma


def test_contrast_scan_round_trips_into_fit_od(small_cfg, tmp_path):
    out = tmp_path / "roundtrip"
    # exact synthetic data through the CLI fit recovers od to 1e-6
    x = np.arange(0.25, 3.51, 0.25)
    ds = DataSet(x=x, y=models.contrast_curve(x, 0.75, 3), sigma=np.full_like(x, 0.04))
    data_path = tmp_path / "exact.csv"
    ds.to_csv(data_path)
    code = main(["fit-od", "--input", str(data_path), "--mode", "incoming",
                 "--output", str(out)])
    assert code == EXIT_OK
    record = read_record(out / "fit_od.csv")
    assert float(record["od_sp"]) == pytest.approx(0.75, abs=1e-6)
    assert record["mode"] == "incoming"

    # simulated scan output feeds the fitter directly (statistical agreement)
    scan_out = tmp_path / "scan2"
    assert main(["contrast-scan", "--config", small_cfg, "--runs", "3000",
                 "--output", str(scan_out)]) == EXIT_OK
    fit_out = tmp_path / "fit2"
    assert main(["fit-od", "--input", str(scan_out / "contrast_scan.csv"),
                 "--output", str(fit_out)]) == EXIT_OK
    record = read_record(fit_out / "fit_od.csv")
    assert abs(float(record["od_sp"]) - 0.75) < 0.12


def test_gain_scan_closed_form(small_cfg, tmp_path):
    out = tmp_path / "gain"
    assert main(["gain-scan", "--config", small_cfg, "--output", str(out)]) == EXIT_OK
    header, rows = read_table(out / "gain_scan.csv")
    sat = models.SaturationParams(46.0, 70.0)
    for row in rows:
        vals = dict(zip(header, row))
        assert vals["no_gate_out"] == pytest.approx(
            models.transfer(vals["n_source_in"], sat), rel=1e-12
        )
        assert vals["gain_coherent"] == pytest.approx(
            vals["no_gate_out"] - vals["with_gate_out"], abs=1e-9
        )


def test_transfer_scan_runs(small_cfg, tmp_path):
    out = tmp_path / "transfer"
    code = main(["transfer-scan", "--config", small_cfg, "--runs", "400",
                 "--output", str(out)])
    assert code == EXIT_OK
    header, rows = read_table(out / "transfer_scan.csv")
    assert header[:2] == ["n_source_in", "no_gate_out"]
    assert len(rows) == 3
    sat = models.SaturationParams(46.0, 70.0)
    for row in rows:
        vals = dict(zip(header, row))
        assert abs(vals["no_gate_out"] - models.transfer(vals["n_source_in"], sat)) <= (
            5 * vals["no_gate_sigma"]
        )


# ---------------------------------------------------------------------------
# fits and detect


def test_fit_saturation_cli_round_trip(tmp_path):
    x = np.linspace(25, 250, 10)
    ds = DataSet(x=x, y=46.0 * -np.expm1(-x / 70.0), sigma=np.ones_like(x))
    data_path = tmp_path / "sat.csv"
    ds.to_csv(data_path)
    out = tmp_path / "fit"
    assert main(["fit-saturation", "--input", str(data_path),
                 "--output", str(out)]) == EXIT_OK
    record = read_record(out / "fit_saturation.csv")
    assert float(record["a"]) == pytest.approx(46.0, rel=1e-4)
    assert float(record["b"]) == pytest.approx(70.0, rel=1e-4)


def test_fit_od_missing_input_is_config_error(tmp_path):
    assert main(["fit-od", "--input", str(tmp_path / "missing.csv"),
                 "--output", str(tmp_path / "o")]) == EXIT_CONFIG


def test_fit_od_malformed_input_is_config_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,sigma\n1.0,0.5,0.0\n2.0,0.6,0.1\n", encoding="utf-8")
    assert main(["fit-od", "--input", str(bad), "--output", str(tmp_path / "o")]) == EXIT_CONFIG


def test_fit_od_two_column_input_defaults_sigma(tmp_path):
    x = np.arange(0.25, 3.51, 0.25)
    y = models.contrast_curve(x, 0.94, 3)
    path = tmp_path / "two.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,y\n")
        for xi, yi in zip(x, y):
            fh.write(f"{float(xi)!r},{float(yi)!r}\n")
    out = tmp_path / "fit"
    assert main(["fit-od", "--input", str(path), "--output", str(out)]) == EXIT_OK
    record = read_record(out / "fit_od.csv")
    assert float(record["od_sp"]) == pytest.approx(0.94, abs=1e-6)


def test_numerical_failure_exit_code(monkeypatch, tmp_path):
    def explode(*args, **kwargs):
        raise FitConvergenceError("simplex collapsed", diagnostics={"sse": 1.0})

    monkeypatch.setattr(cli, "fit_saturation", explode)
    data = tmp_path / "d.csv"
    DataSet(x=[1.0, 2.0, 3.0], y=[1.0, 2.0, 3.0], sigma=[1.0, 1.0, 1.0]).to_csv(data)
    out = tmp_path / "o"
    assert main(["fit-saturation", "--input", str(data), "--output", str(out)]) == EXIT_NUMERIC
    diag = json.loads((out / "fit-saturation.diagnostics.json").read_text(encoding="utf-8"))
    assert diag["diagnostics"]["sse"] == 1.0


def test_detect_single_mu0(small_cfg, tmp_path):
    out = tmp_path / "detect"
    code = main(["detect", "--config", small_cfg, "--mu0", "15", "--runs", "300",
                 "--output", str(out)])
    assert code == EXIT_OK
    record = read_record(out / "detect_report.csv")
    assert 0.0 <= float(record["fidelity"]) <= 1.0
    assert float(record["tau"]) >= 0
    header, rows = read_table(out / "fidelity_sweep.csv")
    assert len(rows) == 1
    assert rows[0][header.index("mu0")] == 15.0
    deco_header, _ = read_table(out / "decomposition.csv")
    assert deco_header == ["events", "observed", "model_total", "model_gated",
                           "model_ungated"]
    assert CountHistogram.from_csv(out / "gated_histogram.csv").total == 300


def test_detect_sweep_deterministic(small_cfg, tmp_path):
    argv_base = ["detect", "--config", small_cfg, "--runs", "200"]
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    assert main(argv_base + ["--output", str(out1)]) == EXIT_OK
    assert main(argv_base + ["--output", str(out2), "--threads", "3"]) == EXIT_OK
    assert read_bytes_map(out1) == read_bytes_map(out2)
    _, rows = read_table(out1 / "fidelity_sweep.csv")
    assert len(rows) == 7  # default mu0 sweep 10..40


# ---------------------------------------------------------------------------
# emitted CSVs round-trip through the package's own readers


def test_all_emitted_csvs_round_trip(small_cfg, tmp_path):
    out = tmp_path / "all"
    assert main(["contrast-scan", "--config", small_cfg, "--runs", "200",
                 "--output", str(out)]) == EXIT_OK
    header, rows = read_table(out / "contrast_scan.csv")
    # rewrite from parsed values and compare bytes: repr round-trip is lossless
    path2 = tmp_path / "rewrite.csv"
    with open(path2, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) for v in row) + "\n")
    assert path2.read_bytes() == (out / "contrast_scan.csv").read_bytes()
