"""Scenario files: one protocol, an optional one-parameter sweep, CSV/JSON output."""
from __future__ import annotations

import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from .catalog import VALUE_MODES, Catalog, load_catalog
from .energy import energy_for_target, setup_power, setup_startup_energy
from .errors import InfeasibleTargetError, ValidationError
from .protocols import ProtocolSpec, build, spec_from_mapping
from .svg import Axes, Series, emit_svg

SWEEP_PARAMS = ("distance_km", "n_parties", "qber", "tau_dsp", "v_a")
COLUMNS = (
    "status",
    "raw_per_use",
    "secret_bps",
    "power_W",
    "startup_J",
    "runtime_s",
    "running_J",
    "dsp_J",
    "total_J",
    "ee_bits_per_J",
)


@dataclass(frozen=True)
class Sweep:
    parameter: str
    start: float
    stop: float
    steps: int
    scale: str = "linear"

    def values(self) -> list[float]:
        if self.scale == "log":
            return [float(v) for v in np.geomspace(self.start, self.stop, self.steps)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class Scenario:
    protocol: ProtocolSpec
    target_bits: float = 1e9
    value_mode: str = "datasheet"
    sweep: Sweep | None = None
    output_format: str = "csv"
    svg: str | None = None


@dataclass(frozen=True)
class SweepRow:
    value: float
    status: str
    raw_per_use: float
    secret_bps: float
    power_W: float
    startup_J: float
    runtime_s: float = math.nan
    running_J: float = math.nan
    dsp_J: float = math.nan
    total_J: float = math.nan
    ee_bits_per_J: float = math.nan

    @property
    def feasible(self) -> bool:
        return self.status == "ok"


# --- parsing -----------------------------------------------------------------


def _line_of(text: str, key: str, section: str | None = None) -> int | None:
    """1-based line of ``key = ...`` (inside ``[section]`` when given)."""
    current = None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        head = re.match(r"^\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            if section is None and key == current:
                return i
            continue
        if pat.match(line) and (section is None or current == section):
            return i
    return None


def _err(text: str, msg: str, key: str, section: str | None = None) -> ValidationError:
    line = _line_of(text, key, section)
    where = f"line {line}: " if line else ""
    return ValidationError(f"{where}{msg}")


def parse_scenario(text: str) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"scenario is not valid TOML: {exc}") from None
    allowed = {"protocol", "sweep", "target_bits", "value_mode", "output"}
    for key in sorted(set(data) - allowed):
        raise _err(text, f"unknown top-level key {key!r}", key)
    if "protocol" not in data:
        raise ValidationError("scenario needs a [protocol] table")
    try:
        spec = spec_from_mapping(data["protocol"])
    except (ValidationError, TypeError, ValueError) as exc:
        raise _err(text, f"invalid protocol: {exc}", "protocol") from None

    target = data.get("target_bits", 1e9)
    if not isinstance(target, (int, float)) or not target >= 0:
        raise _err(text, "target_bits must be a non-negative number", "target_bits")
    mode = data.get("value_mode", "datasheet")
    if mode not in VALUE_MODES:
        raise _err(text, f"value_mode must be one of {VALUE_MODES}", "value_mode")

    sweep = None
    if "sweep" in data:
        sweep = _parse_sweep(text, data["sweep"])

    out = data.get("output", {})
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise _err(text, "output.format must be csv or json", "format", "output")
    svg = out.get("svg")
    return Scenario(spec, float(target), mode, sweep, fmt, None if svg is None else str(svg))


def _parse_sweep(text: str, s: Mapping[str, Any]) -> Sweep:
    for key in ("parameter", "from", "to", "steps"):
        if key not in s:
            raise _err(text, f"sweep.{key} is required", "sweep")
    param = s["parameter"]
    if param not in SWEEP_PARAMS:
        raise _err(text, f"sweep.parameter must be one of {SWEEP_PARAMS}", "parameter", "sweep")
    steps = s["steps"]
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 2:
        raise _err(text, "sweep.steps must be an integer >= 2", "steps", "sweep")
    lo, hi = s["from"], s["to"]
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in (lo, hi)):
        raise _err(text, "sweep bounds must be finite numbers", "from", "sweep")
    scale = s.get("scale", "linear")
    if scale not in ("linear", "log"):
        raise _err(text, "sweep.scale must be linear or log", "scale", "sweep")
    if scale == "log" and not (lo > 0 and hi > 0):
        raise _err(text, "log sweeps need positive bounds", "from", "sweep")
    if lo < 0 and param != "v_a":
        raise _err(text, f"{param} cannot be negative", "from", "sweep")
    return Sweep(param, float(lo), float(hi), steps, scale)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


# --- evaluation ----------------------------------------------------------------


def apply_parameter(spec: ProtocolSpec, name: str, value: float) -> ProtocolSpec:
    if name == "distance_km":
        return replace(spec, distance_km=value)
    if name == "n_parties":
        return replace(spec, n_parties=int(round(value)))
    if name not in SWEEP_PARAMS:
        raise ValidationError(f"cannot sweep {name!r}")
    return replace(spec, overrides={**spec.overrides, name: value})


def evaluate(spec: ProtocolSpec, cat: Catalog, target_bits: float, value: float = math.nan) -> SweepRow:
    setup = build(spec, cat)
    setup.validate(cat)
    rate = setup.rate()
    try:
        rep = energy_for_target(setup, cat, target_bits, rate)
    except InfeasibleTargetError:
        return SweepRow(
            value,
            "infeasible",
            rate.raw_per_use,
            rate.secret_bps,
            setup_power(setup, cat),
            setup_startup_energy(setup, cat),
        )
    return SweepRow(
        value,
        "ok",
        rate.raw_per_use,
        rep.secret_bps,
        rep.power_W,
        rep.startup_J,
        rep.runtime_s,
        rep.running_J,
        rep.dsp_J,
        rep.total_J,
        rep.ee_bits_per_J,
    )


def run(scenario: Scenario, cat: Catalog | None = None) -> list[SweepRow]:
    cat = (cat or load_catalog()).with_mode(scenario.value_mode)
    sw = scenario.sweep
    if sw is None:
        return [evaluate(scenario.protocol, cat, scenario.target_bits, scenario.protocol.distance_km)]
    return [
        evaluate(apply_parameter(scenario.protocol, sw.parameter, v), cat, scenario.target_bits, v)
        for v in sw.values()
    ]


def run_scenario(path: str | Path, cat: Catalog | None = None) -> list[SweepRow]:
    return run(load_scenario(path), cat)


# --- output ----------------------------------------------------------------------


def fmt_number(x: float) -> str:
    """Diff-stable number formatting: scientific outside [1e-3, 1e6)."""
    if isinstance(x, str):
        return x
    if math.isnan(x):
        return ""
    if x == 0:
        return "0"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if abs(x) >= 1e6 or abs(x) < 1e-3:
        return format(x, ".9e")
    return format(x, ".9g")


def to_csv(rows: Sequence[SweepRow], parameter: str = "distance_km") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((parameter,) + COLUMNS)
    for r in rows:
        w.writerow([fmt_number(r.value)] + [fmt_number(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def to_json(rows: Sequence[SweepRow], parameter: str = "distance_km") -> str:
    def clean(x: Any) -> Any:
        return None if isinstance(x, float) and not math.isfinite(x) else x

    out = [{parameter: clean(r.value), **{c: clean(getattr(r, c)) for c in COLUMNS}} for r in rows]
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def rows_svg(rows: Sequence[SweepRow], parameter: str, name: str, y: str = "total_J") -> str:
    ok = [r for r in rows if r.feasible]
    return emit_svg(
        [Series(name, [r.value for r in ok], [getattr(r, y) for r in ok])],
        Axes(x_label=parameter, y_label=y, y_log=True),
    )
