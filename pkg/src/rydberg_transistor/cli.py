"""Command-line front end.

Subcommands: contrast-scan, gain-scan, transfer-scan, simulate, fit-od,
fit-saturation, detect.  Behavior is driven by an INI config file (merged
with flag overrides, flags win) and a master seed; result files are
byte-identical for identical manifests at any --threads setting.  Every
execution writes a provenance sidecar with the resolved config and content
hashes of the outputs.

Exit codes: 0 ok, 2 usage error, 3 config validation failure, 4 numerical
failure, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources

from . import __version__, experiments, models, montecarlo
from .detection import CountHistogram
from .errors import ConfigError, FitConvergenceError, TransistorError
from .fitting import DataSet, fit_od, fit_saturation

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

BUILTIN_CONFIGS = ("paper30us", "paper90us")

DEFAULT_CONFIG = "paper30us"


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines one CLI execution."""

    command: str
    config_path: str
    seed: int
    runs: int
    output_dir: str
    format: str
    force: bool
    threads: int
    options: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydberg-transistor",
        description="Photon-transistor simulation and analysis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None,
                       help=f"config file path or builtin name {BUILTIN_CONFIGS}")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--runs", type=int, default=None, help="runs per ensemble")
        p.add_argument("--output", default="out", help="output directory")
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--force", action="store_true",
                       help="overwrite existing output files")
        p.add_argument("--threads", type=int, default=1,
                       help="simulation threads, 0 = auto (result-invariant)")

    p = sub.add_parser("contrast-scan", help="simulated contrast vs gate photons")
    add_common(p)
    p.add_argument("--mode", choices=["incoming", "stored"], default="incoming")

    add_common(sub.add_parser("gain-scan", help="closed-form gain vs source input"))
    add_common(sub.add_parser("transfer-scan",
                              help="simulated transfer curve with/without gate"))
    add_common(sub.add_parser("simulate", help="one ensemble, histogram + summary"))

    p = sub.add_parser("fit-od", help="fit the contrast model to a CSV dataset")
    add_common(p)
    p.add_argument("--input", required=True, help="CSV with columns x,y,sigma")
    p.add_argument("--mode", choices=["incoming", "stored"], default="incoming")
    p.add_argument("--cap", type=int, default=None, help="blockade cap override")

    p = sub.add_parser("fit-saturation", help="fit the transfer curve to a CSV dataset")
    add_common(p)
    p.add_argument("--input", required=True, help="CSV with columns x,y,sigma")

    p = sub.add_parser("detect", help="single-shot detection fidelity pipeline")
    add_common(p)
    p.add_argument("--mu0", type=float, default=None,
                   help="single no-gate mean instead of the configured sweep")
    return parser


# Section -> key -> (parser, default).  The shipped configs override these.
_F, _I, _B, _LIST = "float", "int", "bool", "floatlist"

CONFIG_SCHEMA = {
    "transistor": {
        "od_sp": (_F, 0.75),
        "od_st": (_F, 2.2),
        "cap": (_I, 3),
        "a_ge": (_F, 0.15),
        "eta_det": (_F, 0.31),
    },
    "saturation": {
        "a": (_F, 46.0),
        "b": (_F, 70.0),
    },
    "simulation": {
        "n_gate_in": (_F, 0.75),
        "p_store": (_F, montecarlo.DEFAULT_P_STORE),
        "source_rate": (_F, 0.69),
        "t_int": (_F, 30.0),
        "retention_tau": (_F, math.inf),
        "self_blockade": (_B, False),
        "runs": (_I, 250),
        "seed": (_I, 20140721),
    },
    "scan": {
        "gate_values": (_LIST, [0.25 * k for k in range(1, 15)]),
        "source_values": (_LIST, [25.0 * k for k in range(1, 11)]),
    },
    "detection": {
        "n_stored": (_F, 0.61),
        "od_st_model": (_F, 0.94),
        "od_st_instant": (_F, 2.2),
        "mu0_values": (_LIST, [10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]),
    },
}


def _parse_value(kind: str, raw: str):
    if kind == _F:
        return float(raw)
    if kind == _I:
        return int(raw)
    if kind == _B:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _resolve_config_source(name: str | None):
    """Return (display_name, text) of the selected config file."""
    if name is None:
        name = DEFAULT_CONFIG
    if os.path.exists(name):
        with open(name, "r", encoding="utf-8") as fh:
            return name, fh.read()
    if name in BUILTIN_CONFIGS:
        ref = resources.files("rydberg_transistor").joinpath(f"configs/{name}.cfg")
        return name, ref.read_text(encoding="utf-8")
    raise ConfigError([f"config {name!r} is neither a file nor one of {BUILTIN_CONFIGS}"])


def load_config(name: str | None) -> tuple[str, dict]:
    """Resolve and parse a config file against the schema, defaults filled in."""
    display, text = _resolve_config_source(name)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"config {display}: {exc}"]) from exc

    violations = []
    resolved = {}
    for section, keys in CONFIG_SCHEMA.items():
        resolved[section] = {}
        for key, (kind, default) in keys.items():
            if cp.has_option(section, key):
                try:
                    resolved[section][key] = _parse_value(kind, cp.get(section, key))
                except ValueError as exc:
                    violations.append(f"{section}.{key}: {exc}")
            else:
                resolved[section][key] = default
    for section in cp.sections():
        if section not in CONFIG_SCHEMA:
            violations.append(f"unknown config section [{section}]")
        else:
            for key in cp.options(section):
                if key not in CONFIG_SCHEMA[section]:
                    violations.append(f"unknown config key {section}.{key}")
    if violations:
        raise ConfigError(violations)
    return display, resolved


def _validate(resolved: dict, seed: int, runs: int, threads: int) -> list[str]:
    t = resolved["transistor"]
    s = resolved["saturation"]
    sim = resolved["simulation"]
    det = resolved["detection"]
    checks = [
        ("transistor.od_sp >= 0", t["od_sp"] >= 0),
        ("transistor.od_st >= 0", t["od_st"] >= 0),
        ("transistor.cap >= 1", t["cap"] >= 1),
        ("transistor.a_ge in [0, 1)", 0 <= t["a_ge"] < 1),
        ("transistor.eta_det in (0, 1]", 0 < t["eta_det"] <= 1),
        ("saturation.a >= 0", s["a"] >= 0),
        ("saturation.b > 0", s["b"] > 0),
        ("simulation.n_gate_in >= 0", sim["n_gate_in"] >= 0),
        ("simulation.p_store in [0, 1]", 0 <= sim["p_store"] <= 1),
        ("simulation.source_rate >= 0", sim["source_rate"] >= 0),
        ("simulation.t_int > 0", sim["t_int"] > 0),
        ("simulation.retention_tau > 0", sim["retention_tau"] > 0),
        ("detection.n_stored >= 0", det["n_stored"] >= 0),
        ("detection.od_st_model > 0", det["od_st_model"] > 0),
        ("detection.od_st_instant >= od_st_model",
         det["od_st_instant"] >= det["od_st_model"]),
        ("detection.mu0_values all > 0", all(v > 0 for v in det["mu0_values"])),
        ("scan.gate_values all > 0", all(v > 0 for v in resolved["scan"]["gate_values"])),
        ("scan.source_values all > 0",
         all(v > 0 for v in resolved["scan"]["source_values"])),
        ("runs >= 1", runs >= 1),
        ("seed is an unsigned 64-bit integer", 0 <= seed < 2**64),
        ("threads >= 0", threads >= 0),
    ]
    return [name for name, ok in checks if not ok]


def parse_and_validate(argv) -> RunManifest:
    """Strict argv parsing + config resolution; raises ConfigError on bad values."""
    args = _build_parser().parse_args(argv)
    config_path, resolved = load_config(args.config)

    seed = args.seed if args.seed is not None else resolved["simulation"]["seed"]
    runs = args.runs if args.runs is not None else resolved["simulation"]["runs"]
    resolved["simulation"]["seed"] = seed
    resolved["simulation"]["runs"] = runs

    options = {}
    if args.command in ("contrast-scan", "fit-od"):
        options["mode"] = args.mode
    if args.command in ("fit-od", "fit-saturation"):
        options["input"] = args.input
    if args.command == "fit-od" and args.cap is not None:
        options["cap"] = args.cap
    if args.command == "detect" and args.mu0 is not None:
        options["mu0"] = args.mu0

    violations = _validate(resolved, seed, runs, args.threads)
    if args.command == "fit-od" and options.get("cap", 1) < 1:
        violations.append("fit-od --cap >= 1")
    if args.command == "detect" and options.get("mu0", 1.0) <= 0:
        violations.append("detect --mu0 > 0")
    if violations:
        raise ConfigError(violations)

    return RunManifest(
        command=args.command,
        config_path=config_path,
        seed=seed,
        runs=runs,
        output_dir=args.output,
        format=args.format,
        force=args.force,
        threads=args.threads,
        options=options,
        resolved=resolved,
    )


def _fmt_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):  # numpy scalar: canonical Python repr
        return _fmt_cell(v.item())
    return str(v)


class OutputWriter:
    """Deterministic result-file writer that records content hashes."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self.written: dict[str, str] = {}

    def path(self, name: str) -> str:
        return os.path.join(self.manifest.output_dir, name)

    def register(self, name: str) -> None:
        with open(self.path(name), "rb") as fh:
            self.written[name] = hashlib.sha256(fh.read()).hexdigest()

    def table(self, stem: str, header: list[str], rows: list[list]) -> str:
        name = f"{stem}.{self.manifest.format}"
        if self.manifest.format == "csv":
            with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_fmt_cell(v) for v in row])
        else:
            payload = [dict(zip(header, row)) for row in rows]
            self._json(name, payload)
            return name
        self.register(name)
        return name

    def record(self, stem: str, record: dict) -> str:
        name = f"{stem}.{self.manifest.format}"
        if self.manifest.format == "csv":
            with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["key", "value"])
                for key in sorted(record):
                    writer.writerow([key, _fmt_cell(record[key])])
            self.register(name)
        else:
            self._json(name, record)
        return name

    def histogram(self, stem: str, hist: CountHistogram) -> str:
        name = f"{stem}.{self.manifest.format}"
        if self.manifest.format == "csv":
            hist.to_csv(self.path(name))
        else:
            hist.to_json(self.path(name))
        self.register(name)
        return name

    def _json(self, name: str, payload) -> None:
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        self.register(name)

    def sidecar(self) -> str:
        name = f"{self.manifest.command}.provenance.json"
        payload = {
            "command": self.manifest.command,
            "tool_version": __version__,
            "seed": self.manifest.seed,
            "runs": self.manifest.runs,
            "threads": self.manifest.threads,
            "format": self.manifest.format,
            "config_path": self.manifest.config_path,
            "options": self.manifest.options,
            "resolved_config": self.manifest.resolved,
            "outputs": self.written,
            "created_utc": datetime.now(timezone.utc).isoformat(),
        }
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return name


def read_table(path) -> tuple[list[str], list[list[float]]]:
    """Read a CSV table written by this tool: header row + float cells."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError([f"{path}: empty CSV"])
        try:
            [float(cell) for cell in header]
        except ValueError:
            pass
        else:
            raise ConfigError([f"{path}: missing header row"])
        rows = [[float(cell) for cell in row] for row in reader if row]
    return header, rows


def read_record(path) -> dict[str, str]:
    """Read a key/value CSV record written by this tool; values stay strings."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["key", "value"]:
            raise ConfigError([f"{path}: expected header 'key,value'"])
        return {row[0]: row[1] for row in reader if row}


def _load_dataset(path: str) -> DataSet:
    """Dataset loader tolerant of domain-named columns (first three are x,y,sigma).

    Two-column files are accepted with the default uncertainty sigma = 1.
    """
    try:
        header, rows = read_table(path)
        if len(header) < 2:
            raise ConfigError([f"{path}: need at least 2 columns, got {header}"])
        points = [row[:3] if len(row) >= 3 else [row[0], row[1], 1.0] for row in rows]
        return DataSet.from_points(points, label=os.path.basename(path))
    except OSError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    except (ValueError, TransistorError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([f"{path}: {exc}"]) from exc


def _sim_objects(resolved: dict):
    t = resolved["transistor"]
    s = resolved["saturation"]
    sim = resolved["simulation"]
    params = models.TransistorParams(
        od_sp=t["od_sp"], od_st=t["od_st"], cap=t["cap"],
        a_ge=t["a_ge"], eta_det=t["eta_det"],
    )
    sat = models.SaturationParams(a=s["a"], b=s["b"])
    config = montecarlo.SimConfig(
        n_gate_in=sim["n_gate_in"],
        p_store=sim["p_store"],
        params=params,
        sat=sat if sim["self_blockade"] else None,
        source_rate=sim["source_rate"],
        t_int=sim["t_int"],
        retention_tau=sim["retention_tau"],
        seed=sim["seed"],
    )
    return params, sat, config


def _cmd_contrast_scan(manifest: RunManifest, out: OutputWriter) -> None:
    _, _, base = _sim_objects(manifest.resolved)
    if manifest.options["mode"] == "incoming":
        base = experiments.incoming_scan_config(base)
    configs = montecarlo.scan_configs(base, manifest.resolved["scan"]["gate_values"])
    ds = montecarlo.contrast_scan(configs, manifest.runs, threads=manifest.threads)
    out.table(
        "contrast_scan",
        ["n_gate_in", "contrast", "sigma"],
        [[x, y, s] for x, y, s in ds.points],
    )


def _cmd_gain_scan(manifest: RunManifest, out: OutputWriter) -> None:
    params, sat, config = _sim_objects(manifest.resolved)
    rows = experiments.gain_scan_rows(
        params, sat, config.n_gate_in, manifest.resolved["scan"]["source_values"]
    )
    header = list(rows[0].keys())
    out.table("gain_scan", header, [[r[k] for k in header] for r in rows])


def _cmd_transfer_scan(manifest: RunManifest, out: OutputWriter) -> None:
    _, sat, base = _sim_objects(manifest.resolved)
    if base.sat is None:
        base = replace(base, sat=sat)  # the scan measures the transfer curve itself
    points = experiments.transfer_scan(
        base, manifest.resolved["scan"]["source_values"], manifest.runs,
        threads=manifest.threads,
    )
    out.table(
        "transfer_scan",
        ["n_source_in", "no_gate_out", "no_gate_sigma",
         "with_gate_out", "with_gate_sigma"],
        [[p.n_source_in, p.no_gate_out, p.no_gate_sigma,
          p.with_gate_out, p.with_gate_sigma] for p in points],
    )


def _cmd_simulate(manifest: RunManifest, out: OutputWriter) -> None:
    _, _, config = _sim_objects(manifest.resolved)
    result = montecarlo.simulate_ensemble(config, manifest.runs, threads=manifest.threads)
    out.histogram("histogram", result.histogram)
    out.record(
        "simulate_summary",
        {
            "n_runs": result.n_runs,
            "mean_source_detected": result.mean_source_detected,
            "mean_stored": result.mean_stored,
            "mean_gate_detected": result.mean_gate_detected,
            "seed": config.seed,
        },
    )


def _fit_record(result) -> dict:
    record = {
        "sse": result.sse,
        "n_boot": result.n_boot,
        "converged": result.converged,
        "flags": ",".join(result.flags),
    }
    for name, value in result.params.items():
        lo, hi = result.ci_68[name]
        record[name] = value
        record[f"{name}_ci16"] = lo
        record[f"{name}_ci84"] = hi
    return record


def _cmd_fit_od(manifest: RunManifest, out: OutputWriter) -> None:
    ds = _load_dataset(manifest.options["input"])
    cap = manifest.options.get("cap", manifest.resolved["transistor"]["cap"])
    result = fit_od(ds, cap=cap, mode=manifest.options["mode"], seed=manifest.seed)
    record = _fit_record(result)
    record["mode"] = manifest.options["mode"]
    record["cap"] = cap
    out.record("fit_od", record)


def _cmd_fit_saturation(manifest: RunManifest, out: OutputWriter) -> None:
    ds = _load_dataset(manifest.options["input"])
    result = fit_saturation(ds, seed=manifest.seed)
    out.record("fit_saturation", _fit_record(result))


def _cmd_detect(manifest: RunManifest, out: OutputWriter) -> None:
    det = manifest.resolved["detection"]
    sim = manifest.resolved["simulation"]
    eta = manifest.resolved["transistor"]["eta_det"]
    mu0_values = [manifest.options["mu0"]] if "mu0" in manifest.options else det["mu0_values"]
    reports = experiments.fidelity_sweep(
        mu0_values,
        n_runs=manifest.runs,
        seed=manifest.seed,
        threads=manifest.threads,
        n_stored=det["n_stored"],
        cap=manifest.resolved["transistor"]["cap"],
        od_st_model=det["od_st_model"],
        od_st_instant=det["od_st_instant"],
        t_int=sim["t_int"],
        eta_det=eta,
    )
    out.table(
        "fidelity_sweep",
        ["mu0", "tau", "fidelity", "fidelity_balanced", "model_fidelity",
         "p_detect_given_gated", "p_reject_given_ungated",
         "decomposition_p", "reference_poissonness_p", "mean_stored"],
        [
            [r.mu0, r.tau, r.fidelity, r.fidelity_balanced, r.threshold.fidelity,
             r.threshold.p_detect_given_gated, r.threshold.p_reject_given_ungated,
             r.decomposition.p_value, r.reference_poissonness_p, r.mean_stored]
            for r in reports
        ],
    )
    best = max(reports, key=lambda r: r.fidelity)
    out.record(
        "detect_report",
        {
            "mu0": best.mu0,
            "tau": best.tau,
            "fidelity": best.fidelity,
            "fidelity_balanced": best.fidelity_balanced,
            "model_fidelity": best.threshold.fidelity,
            "non_discriminating": best.threshold.non_discriminating,
            "mean_stored": best.mean_stored,
            "decomposition_p": best.decomposition.p_value,
            "reference_poissonness_p": best.reference_poissonness_p,
        },
    )
    out.histogram("gated_histogram", best.gated_hist)
    out.histogram("reference_histogram", best.reference_hist)
    deco_name = "decomposition.csv"
    best.decomposition.to_csv(out.path(deco_name))
    out.register(deco_name)


_DISPATCH = {
    "contrast-scan": (_cmd_contrast_scan,
                      lambda m: [f"contrast_scan.{m.format}"]),
    "gain-scan": (_cmd_gain_scan, lambda m: [f"gain_scan.{m.format}"]),
    "transfer-scan": (_cmd_transfer_scan, lambda m: [f"transfer_scan.{m.format}"]),
    "simulate": (_cmd_simulate,
                 lambda m: [f"histogram.{m.format}", f"simulate_summary.{m.format}"]),
    "fit-od": (_cmd_fit_od, lambda m: [f"fit_od.{m.format}"]),
    "fit-saturation": (_cmd_fit_saturation, lambda m: [f"fit_saturation.{m.format}"]),
    "detect": (_cmd_detect,
               lambda m: [f"fidelity_sweep.{m.format}", f"detect_report.{m.format}",
                          f"gated_histogram.{m.format}", f"reference_histogram.{m.format}",
                          "decomposition.csv"]),
}


def execute(manifest: RunManifest) -> int:
    """Run the selected pipeline; writes results plus a provenance sidecar."""
    runner, planned = _DISPATCH[manifest.command]
    try:
        os.makedirs(manifest.output_dir, exist_ok=True)
        if not manifest.force:
            existing = [
                name for name in planned(manifest)
                if os.path.exists(os.path.join(manifest.output_dir, name))
            ]
            if existing:
                print(
                    f"refusing to overwrite {existing} (pass --force)", file=sys.stderr
                )
                return EXIT_IO
        out = OutputWriter(manifest)
        runner(manifest, out)
        out.sidecar()
    except FitConvergenceError as exc:
        _write_diagnostics(manifest, exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _write_diagnostics(manifest: RunManifest, exc: FitConvergenceError) -> None:
    try:
        path = os.path.join(manifest.output_dir, f"{manifest.command}.diagnostics.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {"error": str(exc), "diagnostics": exc.diagnostics,
                 "manifest": {**asdict(manifest)}},
                fh, sort_keys=True, indent=2, default=str,
            )
            fh.write("\n")
    except OSError:
        pass


def _print_violations(exc: ConfigError) -> None:
    print("config validation failed:", file=sys.stderr)
    for violation in exc.violations:
        print(f"  - {violation}", file=sys.stderr)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        manifest = parse_and_validate(argv)
    except ConfigError as exc:
        _print_violations(exc)
        return EXIT_CONFIG
    except SystemExit as exc:
        # argparse exits 2 on usage errors; propagate its code
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return execute(manifest)
    except ConfigError as exc:
        _print_violations(exc)
        return EXIT_CONFIG
    except TransistorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
