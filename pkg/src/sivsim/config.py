"""Run configuration: a small sectioned ``key = value unit`` format.

Example::

    experiment = ramsey
    [field]
    magnitude = 0.3 T
    angle = 109 deg
    [model]
    a_par = 70 MHz

Every dimensioned quantity must carry a unit; values are stored in SI.
Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, replace

from .errors import ConfigError
from .experiments import Calibration, Protocol
from .model import MagneticField, SivParameters

UNITS = {
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "field": {"T": 1.0, "mT": 1e-3},
    "temperature": {"K": 1.0},
    "angle": {"deg": math.pi / 180, "rad": 1.0},
    "rate": {"1/s": 1.0, "/s": 1.0},
    "gyro": {"Hz/T": 1.0, "MHz/T": 1e6, "GHz/T": 1e9},
    "dimensionless": {"": 1.0},
}

EXPERIMENTS = ("t1", "odmr", "odmr-vs-field", "rabi", "ramsey", "tempsweep", "fidelity", "fit")

# section -> key -> (kind, detail); kind is "q" (quantity with dimension),
# "int", "bool" or "str" (with allowed choices, None = free text)
SCHEMA = {
    "": {
        "experiment": ("str", EXPERIMENTS),
        "variant": ("str", ("duration", "power", "detuning")),
    },
    "model": {
        "lambda_so": ("q", "frequency"),
        "a_par": ("q", "frequency"),
        "a_perp": ("q", "frequency"),
        "gamma_s": ("q", "gyro"),
        "gamma_l": ("q", "gyro"),
        "orbital_quench_f": ("q", "dimensionless"),
        "gamma_n": ("q", "gyro"),
        "strain_alpha": ("q", "frequency"),
        "strain_beta": ("q", "frequency"),
        "gamma0_orbital": ("q", "rate"),
        "gamma_phi_extra": ("q", "rate"),
    },
    "field": {
        "magnitude": ("q", "field"),
        "angle": ("q", "angle"),
        "azimuth": ("q", "angle"),
    },
    "bath": {"temperature": ("q", "temperature")},
    "protocol": {
        "pump_rate": ("q", "rate"),
        "pump_duration": ("q", "time"),
        "readout_duration": ("q", "time"),
        "rabi_amplitude": ("q", "frequency"),
        "line": ("int", None),
        "detuning": ("q", "frequency"),
        "gap": ("q", "time"),
        "mw_duration": ("q", "time"),
        "ramsey_mode": ("str", ("symmetric", "asymmetric")),
        "ramsey_readout": ("str", ("immediate", "fixed")),
        "ramsey_gap": ("q", "time"),
        "power_scale": ("q", "frequency"),
    },
    "sweep": {
        "start": ("q", None),  # dimension depends on the experiment
        "stop": ("q", None),
        "count": ("int", None),
        "relative": ("bool", None),
        "workers": ("int", None),
    },
    "calibration": {
        "enabled": ("bool", None),
        "line_separation": ("q", "frequency"),
        "orbital_two_t1": ("q", "time"),
        "t2star": ("q", "time"),
        "spin_t1": ("q", "time"),
        "reference_temperature": ("q", "temperature"),
        "spin_t1_temperature": ("q", "temperature"),
    },
    "noise": {
        "enabled": ("bool", None),
        "sigma": ("q", "dimensionless"),
        "seed": ("int", None),
    },
    "output": {
        "path": ("str", None),
        "format": ("str", ("csv", "json")),
    },
}

# default sweep (dimension, start, stop, count) per experiment / variant
SWEEP_DEFAULTS = {
    "t1": ("time", 0.0, 3.5e-6, 36),
    "odmr": ("frequency", -80e6, 80e6, 161),
    "odmr-vs-field": ("field", 0.1, 1.0, 10),
    "rabi": ("time", 0.0, 300e-9, 151),
    "rabi:power": ("dimensionless", 0.25, 4.0, 6),
    "rabi:detuning": ("frequency", 0.0, 30e6, 7),
    "ramsey": ("time", 0.0, 300e-9, 151),
    "tempsweep": ("temperature", 3.0, 10.0, 8),
    "fidelity": ("time", 0.0, 500e-9, 26),
    "fit": ("dimensionless", 0.0, 1.0, 2),
}

SWEEP_VARIABLES = {
    "t1": "wait",
    "odmr": "carrier",
    "odmr-vs-field": "field",
    "rabi": "duration",
    "rabi:power": "power",
    "rabi:detuning": "detuning",
    "ramsey": "delay",
    "tempsweep": "temperature",
    "fidelity": "pump_duration",
    "fit": "none",
}

DEFAULT_FIELD = MagneticField.from_degrees(0.3, 109.0)
DEFAULT_TEMPERATURE = 3.6
# transverse hyperfine off by default so that the aligned-field spin-flip
# channel closes exactly
DEFAULT_MODEL = {"a_perp": 0.0}
DEFAULT_CALIBRATION = Calibration(line_separation=54e6, orbital_two_t1=133e-9, t2star=115e-9)


@dataclass(frozen=True)
class SweepSettings:
    start: float
    stop: float
    count: int
    relative: bool = False
    workers: int = 1


@dataclass(frozen=True)
class NoiseSettings:
    enabled: bool = False
    sigma: float = 0.0
    seed: int | None = None


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    variant: str
    model_overrides: dict
    field: MagneticField
    temperature: float
    protocol: Protocol
    sweep: SweepSettings
    calibration: Calibration | None
    noise: NoiseSettings
    output_path: str | None = None
    output_format: str = "csv"

    @property
    def kind(self) -> str:
        if self.experiment == "rabi" and self.variant != "duration":
            return f"rabi:{self.variant}"
        return self.experiment

    def base_parameters(self) -> SivParameters:
        values = dict(DEFAULT_MODEL)
        values.update(self.model_overrides)
        return SivParameters(**values)

    def effective_calibration(self) -> Calibration | None:
        """Calibration targets minus those pinned by explicit model values."""
        cal = self.calibration
        if cal is None:
            return None
        ov = self.model_overrides
        if "strain_alpha" in ov:
            cal = replace(cal, line_separation=None, spin_t1=None)
        if "gamma0_orbital" in ov:
            cal = replace(cal, orbital_two_t1=None, spin_t1=None)
        if "gamma_phi_extra" in ov:
            cal = replace(cal, t2star=None)
        return cal

    def echo(self) -> dict:
        cal = self.effective_calibration()
        return {
            "experiment": self.experiment,
            "variant": self.variant,
            "model_overrides": dict(sorted(self.model_overrides.items())),
            "field": asdict(self.field),
            "temperature": self.temperature,
            "protocol": asdict(self.protocol),
            "sweep": asdict(self.sweep),
            "calibration": None if cal is None else asdict(cal),
            "noise": asdict(self.noise),
            "output_format": self.output_format,
        }


_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")
_SECTION = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_-]*)\]$")
_QUANTITY = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)$")


def _unit_dimension(unit: str):
    for dim, table in UNITS.items():
        if unit in table:
            return dim, table[unit]
    return None, None


def _parse_value(raw: str, kind: str, detail, line: int, key: str):
    if kind == "str":
        text = raw[1:-1] if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'" else raw
        if not text:
            raise ConfigError(f"{key}: empty value", line)
        if detail is not None and text not in detail:
            raise ConfigError(f"{key}: expected one of {', '.join(detail)}, got {text!r}", line)
        return text
    if kind == "bool":
        if raw.lower() in ("true", "yes", "on"):
            return True
        if raw.lower() in ("false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected true or false, got {raw!r}", line)
    if kind == "int":
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}", line) from None
        return value
    m = _QUANTITY.match(raw)
    if not m:
        raise ConfigError(f"{key}: cannot read a number from {raw!r}", line)
    number, unit = float(m.group(1)), m.group(2)
    dim, factor = _unit_dimension(unit)
    if dim is None:
        raise ConfigError(f"{key}: unknown unit {unit!r}", line)
    if detail is not None and dim != detail:
        hint = "missing unit" if unit == "" else f"unit {unit!r} is a {dim}"
        raise ConfigError(f"{key}: expected a {detail} ({hint})", line)
    value = number * factor
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value is not finite", line)
    return (value, dim) if detail is None else value


def _read(text: str) -> dict:
    """Raw parse into {section: {key: (value, line)}}."""
    out: dict = {"": {}}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            m = _SECTION.match(line)
            if not m:
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = m.group(1)
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            if section in out and out[section]:
                raise ConfigError(f"section [{section}] appears twice", lineno)
            out.setdefault(section, {})
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, raw_value = m.group(1), m.group(2)
        # strip trailing comments
        if " #" in raw_value:
            raw_value = raw_value.split(" #", 1)[0].rstrip()
        schema = SCHEMA[section]
        if key not in schema:
            where = f"[{section}]" if section else "top level"
            raise ConfigError(f"unknown key {key!r} in {where}", lineno)
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        kind, detail = schema[key]
        out[section][key] = (_parse_value(raw_value, kind, detail, lineno, key), lineno)
    return out


def parse_config(text: str, experiment: str | None = None) -> RunConfig:
    """Parse configuration text; ``experiment`` may supply or confirm the kind."""
    raw = _read(text)
    top = raw.get("", {})
    get = lambda sec, key, default=None: raw.get(sec, {}).get(key, (default, None))[0]

    exp = get("", "experiment")
    if experiment is not None:
        if exp is not None and exp != experiment:
            raise ConfigError(
                f"config names experiment {exp!r} but {experiment!r} was requested",
                top["experiment"][1],
            )
        exp = experiment
    if exp is None:
        raise ConfigError("missing required key 'experiment'")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}")
    variant = get("", "variant", "duration")
    if variant != "duration" and exp != "rabi":
        raise ConfigError("'variant' applies only to the rabi experiment", top["variant"][1])

    overrides = {k: v for k, (v, _) in raw.get("model", {}).items()}
    try:
        SivParameters(**(DEFAULT_MODEL | overrides))
    except Exception as exc:
        raise ConfigError(f"[model]: {exc}") from None

    try:
        fld = MagneticField(
            get("field", "magnitude", DEFAULT_FIELD.magnitude),
            get("field", "angle", DEFAULT_FIELD.polar_angle),
            get("field", "azimuth", DEFAULT_FIELD.azimuth),
        )
    except Exception as exc:
        raise ConfigError(f"[field]: {exc}") from None

    temperature = get("bath", "temperature", DEFAULT_TEMPERATURE)
    if not temperature > 0:
        raise ConfigError("temperature must be positive", raw["bath"]["temperature"][1])

    try:
        protocol = Protocol(**{k: v for k, (v, _) in raw.get("protocol", {}).items()})
    except Exception as exc:
        raise ConfigError(f"[protocol]: {exc}") from None

    kind = f"rabi:{variant}" if exp == "rabi" and variant != "duration" else exp
    dim, start, stop, count = SWEEP_DEFAULTS[kind]
    sw = raw.get("sweep", {})
    for key in ("start", "stop"):
        if key in sw:
            (value, vdim), line = sw[key]
            if vdim != dim:
                raise ConfigError(f"sweep {key} must be a {dim} for {kind}, got a {vdim}", line)
    start = sw["start"][0][0] if "start" in sw else start
    stop = sw["stop"][0][0] if "stop" in sw else stop
    count = get("sweep", "count", count)
    if count < 2:
        raise ConfigError("sweep count must be >= 2", sw.get("count", (0, None))[1])
    if not start < stop:
        raise ConfigError("sweep start must be below stop", sw.get("stop", (0, None))[1])
    workers = get("sweep", "workers", 1)
    if workers < 1:
        raise ConfigError("workers must be >= 1", sw["workers"][1])
    relative = get("sweep", "relative", exp == "odmr")
    sweep = SweepSettings(start, stop, count, relative, workers)

    cal_raw = {k: v for k, (v, _) in raw.get("calibration", {}).items()}
    enabled = cal_raw.pop("enabled", True)
    calibration = replace(DEFAULT_CALIBRATION, **cal_raw) if enabled else None
    if calibration is not None and calibration.spin_t1 is not None and "line_separation" not in cal_raw:
        calibration = replace(calibration, line_separation=None)
    if calibration is not None and calibration.line_separation is not None and calibration.spin_t1 is not None:
        raise ConfigError("calibration: line_separation and spin_t1 both fix the strain; set one")

    noise = NoiseSettings(
        get("noise", "enabled", False), get("noise", "sigma", 0.0), get("noise", "seed")
    )
    if noise.enabled and noise.seed is None:
        raise ConfigError("noise is enabled but no seed is given")
    if noise.sigma < 0:
        raise ConfigError("noise sigma must be >= 0", raw["noise"]["sigma"][1])
    if noise.seed is not None and not 0 <= noise.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", raw["noise"]["seed"][1])

    return RunConfig(
        experiment=exp,
        variant=variant,
        model_overrides=overrides,
        field=fld,
        temperature=temperature,
        protocol=protocol,
        sweep=sweep,
        calibration=calibration,
        noise=noise,
        output_path=get("output", "path"),
        output_format=get("output", "format", "csv"),
    )


def load_config(path: str, experiment: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, experiment)
