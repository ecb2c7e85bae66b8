"""Command-line front end.

    sivsim <experiment> --config PATH [--out PATH] [--format csv|json] [--seed N]
    sivsim fit <form> --in CSV --out JSON
    sivsim repro --emit DIR
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import experiments as ex
from . import fitting
from .config import EXPERIMENTS, SWEEP_VARIABLES, RunConfig, load_config, parse_config
from .errors import ConfigError, SivError
from .model import SivParameters, nuclear_preserving_lines, spectrum_for

CONFIG_PREFIX = "# config: "


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, fitting.FitResult):
        return _jsonable(obj.to_dict())
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


# --------------------------------------------------------------------------
# running experiments


def resolve_parameters(cfg: RunConfig):
    params = cfg.base_parameters()
    cal = cfg.effective_calibration()
    if cal is not None:
        params = ex.calibrate(params, cfg.field, cal, cfg.protocol)
    return params


def _sweep_spec(cfg: RunConfig, params) -> ex.SweepSpec:
    s = cfg.sweep
    start, stop = s.start, s.stop
    if cfg.kind == "odmr" and s.relative:
        lines = [l.frequency for l in nuclear_preserving_lines(spectrum_for(params, cfg.field))]
        mid = 0.5 * (lines[0] + lines[1])
        start, stop = mid + start, mid + stop
    return ex.SweepSpec(
        SWEEP_VARIABLES[cfg.kind], start, stop, s.count, params=params, field=cfg.field,
        temperature=cfg.temperature, protocol=cfg.protocol, workers=s.workers,
    )


def _refit(kind: str, result: ex.SweepResult):
    x, y = result.abscissa, result.columns["peak_ratio"]
    if kind == "t1":
        return {"exp_recovery": fitting.fit_exp_recovery(x, y)}
    if kind == "odmr":
        try:
            return {"lorentzian_peaks": fitting.fit_lorentzian_peaks(x, y, 2)}
        except SivError:
            return {}
    if kind == "rabi":
        return {"rabi_trace": fitting.fit_rabi_trace(x, y)}
    if kind == "ramsey":
        name = next(iter(result.fits))
        n = 1 if name == "damped_cosine" else 2
        return {name: fitting.fit_drifting_oscillation(x, y, n, "saturating")}
    return result.fits


def run_experiment(cfg: RunConfig) -> ex.SweepResult:
    params = resolve_parameters(cfg)
    spec = _sweep_spec(cfg, params)
    kind = cfg.kind
    if kind == "t1":
        result = ex.t1_recovery_scan(spec)
    elif kind == "odmr":
        result = ex.odmr_scan(spec)
    elif kind == "odmr-vs-field":
        result = ex.odmr_vs_field(spec)
    elif kind.startswith("rabi"):
        result = ex.rabi_scan(spec, cfg.variant)
    elif kind == "ramsey":
        result = ex.ramsey_scan(spec)
    elif kind == "tempsweep":
        result = ex.temperature_sweep(spec)
    elif kind == "fidelity":
        result = ex.fidelity_scan(spec)
        result.metadata["fidelity_at_protocol"] = ex.fidelity_details(spec)
    else:
        raise ConfigError(f"experiment {kind!r} cannot be run from a config")
    if cfg.noise.enabled and "peak_ratio" in result.columns:
        rng = np.random.default_rng(cfg.noise.seed)
        y = result.columns["peak_ratio"]
        result.columns["peak_ratio"] = y + rng.normal(0.0, cfg.noise.sigma, size=y.shape)
        result.fits = _refit(kind.split(":")[0], result)
    result.metadata["resolved_params"] = params.as_dict()
    return result


def _fmt(v: float) -> str:
    return repr(float(v))


def render_csv(result: ex.SweepResult, echo: dict) -> str:
    buf = io.StringIO()
    buf.write(CONFIG_PREFIX + dumps(echo) + "\n")
    names = result.names
    buf.write(",".join(names) + "\n")
    cols = [result.columns[n] for n in names]
    for row in zip(*cols):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def render_json(result: ex.SweepResult, echo: dict) -> str:
    doc = {
        "config": echo,
        "columns": {k: v for k, v in result.columns.items()},
        "column_order": result.names,
        "fits": {k: v for k, v in result.fits.items()},
        "metadata": result.metadata,
    }
    return json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n"


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run(cfg: RunConfig, out: str | None = None, fmt: str | None = None) -> int:
    """Run a configured experiment and write the result; returns an exit status."""
    fmt = fmt or cfg.output_format
    result = run_experiment(cfg)
    echo = cfg.echo() | {"resolved_params": result.metadata["resolved_params"], "output_format": fmt}
    text = render_csv(result, echo) if fmt == "csv" else render_json(result, echo)
    _write(out if out is not None else cfg.output_path, text)
    return 0


# --------------------------------------------------------------------------
# fitting stored data


def read_csv(path: str):
    """Return (config echo or None, column names, data array)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    echo = None
    body = []
    for line in lines:
        if line.startswith(CONFIG_PREFIX):
            echo = json.loads(line[len(CONFIG_PREFIX):])
        elif line.startswith("#") or not line.strip():
            continue
        else:
            body.append(line)
    if not body:
        raise ConfigError(f"{path}: no header row")
    reader = csv.reader(body)
    header = next(reader)
    rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return echo, header, np.array(rows)


FIT_COLUMNS = {
    "exp_recovery": 1,
    "lorentzian_peaks": 1,
    "damped_cosine": 1,
    "double_damped_cosine": 1,
    "rabi_trace": 1,
    "generalized_rabi": 1,
    "linear": 1,
}


def fit_file(form: str, in_path: str, x_col: str | None = None, y_col: str | None = None,
             n_peaks: int = 2) -> dict:
    echo, header, data = read_csv(in_path)

    def col(name, default_idx):
        if name is None:
            return data[:, default_idx]
        if name not in header:
            raise ConfigError(f"column {name!r} not in {header}")
        return data[:, header.index(name)]

    x = col(x_col, 0)
    if form == "a_parallel":
        freqs = np.stack([data[:, 1], data[:, 2]], axis=1)
        geometry = (math.radians(109.0), 0.0)
        prior = None
        if echo is not None:
            f = echo.get("field", {})
            geometry = (f.get("polar_angle", geometry[0]), f.get("azimuth", 0.0))
            if "resolved_params" in echo:
                prior = SivParameters(**echo["resolved_params"])
        res = fitting.fit_a_parallel(x, freqs, geometry, prior)
    else:
        y = col(y_col, FIT_COLUMNS[form])
        if form == "exp_recovery":
            res = fitting.fit_exp_recovery(x, y)
        elif form == "lorentzian_peaks":
            res = fitting.fit_lorentzian_peaks(x, y, n_peaks)
        elif form == "damped_cosine":
            res = fitting.fit_damped_cosine(x, y)
        elif form == "double_damped_cosine":
            res = fitting.fit_double_damped_cosine(x, y)
        elif form == "rabi_trace":
            res = fitting.fit_rabi_trace(x, y)
        elif form == "generalized_rabi":
            res = fitting.fit_generalized_rabi(x, y)
        else:
            res = fitting.fit_linear(x, y)
    expression = fitting.FIT_FORMS.get(form, "damped cosine on a relaxing baseline")
    return {
        "form": form,
        "expression": expression,
        "input": os.path.basename(in_path),
        "source_config": echo,
        "result": res.to_dict(),
    }


# --------------------------------------------------------------------------
# reproduction suite

_COMMON = """[field]
magnitude = 0.3 T
angle = 109 deg
[model]
lambda_so = 50 GHz
a_par = 70 MHz
a_perp = 0 MHz
"""

_CAL_SHARED = """[calibration]
line_separation = 54 MHz
orbital_two_t1 = 133 ns
t2star = 115 ns
reference_temperature = 3.6 K
"""

_CAL_T1 = """[calibration]
spin_t1 = 350 ns
spin_t1_temperature = 3.5 K
orbital_two_t1 = 133 ns
t2star = 115 ns
reference_temperature = 3.6 K
"""

SUITE = {
    "1c": ("fig1c_t1.conf", "spin T1 recovery (pump-wait-pump)", "t1",
           "[bath]\ntemperature = 3.5 K\n" + _CAL_T1 + "[sweep]\nstart = 0 ns\nstop = 3500 ns\ncount = 36\n"),
    "2c": ("fig2c_odmr.conf", "ODMR spectrum with two hyperfine lines", "odmr",
           "[bath]\ntemperature = 3.6 K\n" + _CAL_SHARED
           + "[sweep]\nstart = -80 MHz\nstop = 80 MHz\ncount = 161\nrelative = true\n"),
    "2d": ("fig2d_odmr_vs_field.conf", "resonance frequencies vs field magnitude", "odmr-vs-field",
           _CAL_SHARED + "[sweep]\nstart = 0.1 T\nstop = 1.0 T\ncount = 10\n"),
    "3b": ("fig3b_rabi.conf", "Rabi oscillation vs pulse duration", "rabi",
           "variant = duration\n[bath]\ntemperature = 3.6 K\n" + _CAL_SHARED
           + "[protocol]\nrabi_amplitude = 15 MHz\ngap = 210 ns\n[sweep]\nstart = 0 ns\nstop = 300 ns\ncount = 151\n"),
    "3c": ("fig3c_rabi_power.conf", "Rabi frequency vs microwave power", "rabi",
           "variant = power\n" + _CAL_SHARED
           + "[protocol]\npower_scale = 15 MHz\n[sweep]\nstart = 0.25\nstop = 4\ncount = 6\n"),
    "3d": ("fig3d_rabi_detuning.conf", "effective Rabi frequency vs detuning", "rabi",
           "variant = detuning\n" + _CAL_SHARED
           + "[protocol]\nrabi_amplitude = 15 MHz\n[sweep]\nstart = 0 MHz\nstop = 30 MHz\ncount = 7\n"),
    "4b": ("fig4b_ramsey.conf", "Ramsey fringes, carrier midway between the lines", "ramsey",
           _CAL_SHARED + "[protocol]\nramsey_mode = symmetric\n[sweep]\nstart = 0 ns\nstop = 300 ns\ncount = 151\n"),
    "4c": ("fig4c_ramsey_asym.conf", "Ramsey beating, carrier at 36/18 MHz detuning", "ramsey",
           _CAL_SHARED + "[protocol]\nramsey_mode = asymmetric\n[sweep]\nstart = 0 ns\nstop = 300 ns\ncount = 151\n"),
    "5a": ("fig5a_tempsweep.conf", "dephasing and orbital rates vs temperature", "tempsweep",
           _CAL_SHARED + "[sweep]\nstart = 3 K\nstop = 10 K\ncount = 8\n"),
    "5b": ("fig5b_tempsweep_spin.conf", "spin relaxation rate vs temperature", "tempsweep",
           _CAL_T1 + "[sweep]\nstart = 3 K\nstop = 10 K\ncount = 8\n"),
}


def suite_texts() -> dict:
    out = {}
    for fig, (fname, desc, exp, body) in SUITE.items():
        # top-level keys must precede the first section header
        head, _, rest = body.partition("[")
        rest = "[" + rest if rest else ""
        text = (f"# figure {fig}: {desc}\nexperiment = {exp}\n" + head + _COMMON + rest
                + "[noise]\nenabled = false\nseed = 1\n")
        out[fig] = (fname, desc, text)
    return out


def emit_reproduction_suite(directory: str) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    index = {}
    written = []
    for fig, (fname, desc, text) in suite_texts().items():
        parse_config(text)  # never ship a config that does not parse
        path = os.path.join(directory, fname)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        index[fig] = {"config": fname, "description": desc}
        written.append(path)
    with open(os.path.join(directory, "index.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(index, sort_keys=True, indent=1) + "\n")
    return written


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sivsim", description="SiV- ground-state spin simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        if name == "fit":
            continue
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seed", type=int)
    p = sub.add_parser("fit", help="fit a stored CSV")
    p.add_argument("form", choices=sorted(fitting.FIT_FORMS))
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--peaks", type=int, default=2)
    p = sub.add_parser("repro", help="write the bundled per-figure configs")
    p.add_argument("--emit", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "repro":
            for path in emit_reproduction_suite(args.emit):
                print(path)
            return 0
        if args.command == "fit":
            doc = fit_file(args.form, args.inp, args.x, args.y, args.peaks)
            _write(args.out, json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n")
            return 1 if not doc["result"]["converged"] else 0
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, noise=replace(cfg.noise, seed=args.seed))
        return run(cfg, args.out, args.format)
    except (SivError, OSError, ValueError) as exc:
        print(f"sivsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
