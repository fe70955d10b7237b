"""Hardware component registry.

A catalog maps component ids to their electrical footprint (rated power and
one-off startup energy) plus the fiber loss coefficient per wavelength. Each
component may carry a second, lab-measured column; the catalog's value mode
decides which column the energy engine reads.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import CatalogError, UnknownComponentError, ValidationError

CATEGORIES = frozenset(
    {
        "laser",
        "detector",
        "modulator_am",
        "modulator_iq",
        "oven",
        "waveplates",
        "interferometry",
        "polarization_controller",
        "powermeter",
        "optical_switch",
        "adc",
        "dac",
        "computer",
        "time_tagger",
        "bhd",
        "photodiode",
        "custom",
    }
)
DETECTING_CATEGORIES = frozenset({"detector", "bhd"})
VALUE_MODES = ("datasheet", "measured_preferred")

BUILTIN = "builtin"
ENV_VAR = "QNET_CATALOG"

_KJ = 1000.0


def _kj_to_j(value: float) -> float:
    # rounding keeps kJ -> J -> kJ round trips exact for tabulated decimals
    return round(float(value) * _KJ, 6)


@dataclass(frozen=True)
class ComponentSpec:
    id: str
    category: str
    power_W: float = 0.0
    startup_energy_J: float = 0.0
    wavelength_nm: float | None = None
    measured_power_W: float | None = None
    measured_startup_J: float | None = None
    detection_efficiency: float | None = None
    name: str = ""
    startup_integrated: bool = False
    assumed: bool = False

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("component id must be non-empty")
        if self.category not in CATEGORIES:
            raise ValidationError(f"{self.id}: unknown category {self.category!r}")
        for label in ("power_W", "startup_energy_J", "measured_power_W", "measured_startup_J"):
            value = getattr(self, label)
            if value is not None and not value >= 0:
                raise ValidationError(f"{self.id}: {label} must be non-negative, got {value}")
        if self.wavelength_nm is not None and not self.wavelength_nm > 0:
            raise ValidationError(f"{self.id}: wavelength_nm must be positive")
        detecting = self.category in DETECTING_CATEGORIES
        if detecting and self.detection_efficiency is None:
            raise ValidationError(f"{self.id}: detectors need a detection_efficiency")
        if not detecting and self.detection_efficiency is not None:
            raise ValidationError(f"{self.id}: only detectors carry a detection_efficiency")
        if self.detection_efficiency is not None and not 0 <= self.detection_efficiency <= 1:
            raise ValidationError(f"{self.id}: detection_efficiency must lie in [0, 1]")


def effective_power(component: ComponentSpec, mode: str = "datasheet") -> float:
    """Power draw in W under the given value mode."""
    _check_mode(mode)
    if mode == "measured_preferred" and component.measured_power_W is not None:
        return component.measured_power_W
    return component.power_W


def effective_startup_energy(component: ComponentSpec, mode: str = "datasheet") -> float:
    """One-off startup energy in J under the given value mode."""
    _check_mode(mode)
    if mode == "measured_preferred" and component.measured_startup_J is not None:
        return component.measured_startup_J
    return component.startup_energy_J


def _check_mode(mode: str) -> None:
    if mode not in VALUE_MODES:
        raise ValidationError(f"value mode must be one of {VALUE_MODES}, got {mode!r}")


@dataclass(frozen=True)
class Catalog:
    components: Mapping[str, ComponentSpec]
    fibers: Mapping[float, float]
    value_mode: str = "datasheet"
    source: str = field(default=BUILTIN, compare=False)

    def __post_init__(self) -> None:
        _check_mode(self.value_mode)
        for key, spec in self.components.items():
            if key != spec.id:
                raise ValidationError(f"catalog key {key!r} does not match component id {spec.id!r}")
        for wavelength, coeff in self.fibers.items():
            if not coeff > 0:
                raise ValidationError(f"fiber loss at {wavelength} nm must be positive")
        # freeze the mappings so a loaded catalog cannot be mutated in place
        object.__setattr__(self, "components", MappingProxyType(dict(self.components)))
        object.__setattr__(self, "fibers", MappingProxyType({float(k): float(v) for k, v in self.fibers.items()}))

    def __getitem__(self, component_id: str) -> ComponentSpec:
        try:
            return self.components[component_id]
        except KeyError:
            raise UnknownComponentError(component_id) from None

    def __contains__(self, component_id: object) -> bool:
        return component_id in self.components

    def __iter__(self):
        return iter(self.components.values())

    def __len__(self) -> int:
        return len(self.components)

    def power(self, component_id: str) -> float:
        return effective_power(self[component_id], self.value_mode)

    def startup_energy(self, component_id: str) -> float:
        return effective_startup_energy(self[component_id], self.value_mode)

    def detection_efficiency(self, component_id: str) -> float:
        eff = self[component_id].detection_efficiency
        if eff is None:
            raise CatalogError(f"{component_id!r} is not a detector")
        return eff

    def fiber_loss(self, wavelength_nm: float) -> float:
        """Loss coefficient in dB/km for the given wavelength."""
        try:
            return self.fibers[float(wavelength_nm)]
        except KeyError:
            raise CatalogError(f"no fiber loss coefficient for {wavelength_nm} nm") from None

    def with_mode(self, mode: str) -> Catalog:
        return replace(self, value_mode=mode)

    def __hash__(self) -> int:
        return hash((tuple(sorted(self.components)), self.value_mode))


def _component_from_table(cid: str, table: Mapping[str, Any]) -> ComponentSpec:
    known = {
        "category",
        "name",
        "wavelength_nm",
        "startup_energy_kJ",
        "power_W",
        "measured_power_W",
        "measured_startup_kJ",
        "detection_efficiency",
        "assumed",
        "startup_integrated",
    }
    extra = set(table) - known
    if extra:
        raise ValidationError(f"component {cid!r}: unknown keys {sorted(extra)}")
    if "category" not in table:
        raise ValidationError(f"component {cid!r}: missing category")

    def opt(key: str) -> float | None:
        return None if key not in table else float(table[key])

    measured_startup = opt("measured_startup_kJ")
    return ComponentSpec(
        id=cid,
        category=str(table["category"]),
        name=str(table.get("name", "")),
        wavelength_nm=opt("wavelength_nm"),
        startup_energy_J=_kj_to_j(table.get("startup_energy_kJ", 0.0)),
        power_W=float(table.get("power_W", 0.0)),
        measured_power_W=opt("measured_power_W"),
        measured_startup_J=None if measured_startup is None else _kj_to_j(measured_startup),
        detection_efficiency=opt("detection_efficiency"),
        assumed=bool(table.get("assumed", False)),
        startup_integrated=bool(table.get("startup_integrated", False)),
    )


def parse_catalog(text: str, source: str = "<string>") -> Catalog:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise CatalogError(f"{source}: {exc}") from exc

    unknown = set(doc) - {"component", "fiber", "value_mode"}
    if unknown:
        raise ValidationError(f"{source}: unknown top-level keys {sorted(unknown)}")
    components: dict[str, ComponentSpec] = {}
    for cid, table in doc.get("component", {}).items():
        if not isinstance(table, dict):
            raise ValidationError(f"{source}: component.{cid} must be a table")
        # TOML already rejects duplicate tables; this guards programmatic merges
        if cid in components:
            raise ValidationError(f"{source}: duplicate component id {cid!r}")
        components[cid] = _component_from_table(cid, table)
    fibers: dict[float, float] = {}
    for key, coeff in doc.get("fiber", {}).items():
        try:
            fibers[float(key)] = float(coeff)
        except (TypeError, ValueError):
            raise ValidationError(f"{source}: bad fiber entry {key!r} = {coeff!r}") from None
    return Catalog(
        components=components,
        fibers=fibers,
        value_mode=doc.get("value_mode", "datasheet"),
        source=source,
    )


def load_catalog(path: str | os.PathLike[str] = BUILTIN) -> Catalog:
    """Load and validate a catalog file, or the packaged one for ``"builtin"``."""
    if str(path) == BUILTIN:
        text = resources.files("qnet_energy").joinpath("data/catalog.toml").read_text(encoding="utf-8")
        return parse_catalog(text, source=BUILTIN)
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise CatalogError(f"cannot read catalog {p}: {exc}") from exc
    return parse_catalog(text, source=str(p))


def default_catalog_path() -> str:
    return os.environ.get(ENV_VAR) or BUILTIN


def _fmt_wavelength(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def catalog_to_dict(catalog: Catalog) -> dict[str, Any]:
    comps: dict[str, Any] = {}
    for spec in catalog.components.values():
        table: dict[str, Any] = {"category": spec.category}
        if spec.name:
            table["name"] = spec.name
        if spec.wavelength_nm is not None:
            table["wavelength_nm"] = spec.wavelength_nm
        table["startup_energy_kJ"] = spec.startup_energy_J / _KJ
        table["power_W"] = spec.power_W
        if spec.measured_power_W is not None:
            table["measured_power_W"] = spec.measured_power_W
        if spec.measured_startup_J is not None:
            table["measured_startup_kJ"] = spec.measured_startup_J / _KJ
        if spec.detection_efficiency is not None:
            table["detection_efficiency"] = spec.detection_efficiency
        if spec.assumed:
            table["assumed"] = True
        if spec.startup_integrated:
            table["startup_integrated"] = True
        comps[spec.id] = table
    return {
        "value_mode": catalog.value_mode,
        "fiber": {_fmt_wavelength(k): v for k, v in sorted(catalog.fibers.items())},
        "component": comps,
    }


def dump_catalog(catalog: Catalog) -> str:
    """Serialize to the TOML schema read by :func:`load_catalog`."""
    return tomli_w.dumps(catalog_to_dict(catalog))
