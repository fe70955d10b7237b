"""Energy accounting for a protocol run.

A run costs a one-off startup energy plus constant power for as long as it
takes to distil the target number of secret bits. Continuous-variable runs
may add a per-symbol digital signal processing cost.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

from .catalog import Catalog
from .dv import RateResult
from .errors import InfeasibleTargetError, ValidationError

GROUPS = ("source", "manipulation", "detection", "classical")

Group = tuple[tuple[str, int], ...]


def _freeze_group(items: Iterable[tuple[str, int]]) -> Group:
    out = []
    for cid, mult in items:
        if int(mult) != mult or mult < 1:
            raise ValidationError(f"multiplicity of {cid!r} must be a positive integer, got {mult}")
        out.append((str(cid), int(mult)))
    return tuple(out)


@dataclass(frozen=True)
class ClassicalCostParams:
    tau_dsp_J_per_symbol: float = 0.018
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.tau_dsp_J_per_symbol >= 0:
            raise ValidationError("tau_dsp_J_per_symbol must be non-negative")


@dataclass(frozen=True)
class ProtocolSetup:
    name: str
    source_components: Group = ()
    manipulation_components: Group = ()
    detection_components: Group = ()
    classical_components: Group = ()
    rate_model: Callable[[], RateResult] | None = field(default=None, compare=False)
    dsp: ClassicalCostParams | None = None
    # parallel symbol streams that each pay the DSP cost (one per CV receiver)
    dsp_streams: int = 1

    def __post_init__(self) -> None:
        for g in GROUPS:
            attr = f"{g}_components"
            object.__setattr__(self, attr, _freeze_group(getattr(self, attr)))
        if int(self.dsp_streams) != self.dsp_streams or self.dsp_streams < 1:
            raise ValidationError("dsp_streams must be a positive integer")

    def groups(self) -> dict[str, Group]:
        return {g: getattr(self, f"{g}_components") for g in GROUPS}

    def entries(self) -> list[tuple[str, str, int]]:
        """(group, component id, multiplicity) for every line of the setup."""
        return [(g, cid, m) for g, items in self.groups().items() for cid, m in items]

    def count(self, component_id: str) -> int:
        return sum(m for _, cid, m in self.entries() if cid == component_id)

    def validate(self, cat: Catalog) -> None:
        for _, cid, _ in self.entries():
            cat[cid]

    def rate(self) -> RateResult:
        if self.rate_model is None:
            raise ValidationError(f"setup {self.name!r} has no rate model")
        return self.rate_model()


@dataclass(frozen=True)
class BreakdownRow:
    component: str
    multiplicity: int
    watts: float
    joules: float
    share: float
    group: str = ""


@dataclass(frozen=True)
class EnergyReport:
    name: str
    n_target_bits: float
    secret_bps: float
    startup_J: float
    power_W: float
    runtime_s: float
    running_J: float
    dsp_J: float
    total_J: float
    ee_bits_per_J: float
    breakdown: tuple[BreakdownRow, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["breakdown"] = [asdict(r) for r in self.breakdown]
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def setup_power(s: ProtocolSetup, cat: Catalog) -> float:
    return math.fsum(m * cat.power(cid) for _, cid, m in s.entries())


def setup_startup_energy(s: ProtocolSetup, cat: Catalog) -> float:
    return math.fsum(m * cat.startup_energy(cid) for _, cid, m in s.entries())


def runtime_for_target(n_target_bits: float, rate: RateResult) -> float:
    if n_target_bits < 0:
        raise ValidationError("target bit count must be non-negative")
    if n_target_bits == 0:
        return 0.0
    if rate.secret_bps <= 0:
        raise InfeasibleTargetError("secret key rate is zero; target cannot be reached")
    return n_target_bits / rate.secret_bps


def dsp_energy(n_target_bits: float, k_bits_per_symbol: float, c: ClassicalCostParams | None) -> float:
    """Energy to digitally recover every symbol needed for the target key."""
    if c is None or not c.enabled or n_target_bits == 0:
        return 0.0
    if k_bits_per_symbol <= 0:
        raise InfeasibleTargetError("key rate per symbol is zero; DSP cost is unbounded")
    return c.tau_dsp_J_per_symbol * n_target_bits / k_bits_per_symbol


def energy_efficiency(rate: RateResult, power_W: float) -> float:
    """Secret bits per joule of running energy."""
    if power_W <= 0:
        return math.inf if rate.secret_bps > 0 else 0.0
    return rate.secret_bps / power_W


def energy_at_time(s: ProtocolSetup, cat: Catalog, t: float) -> float:
    if not t >= 0:
        raise ValidationError("time must be non-negative")
    return setup_startup_energy(s, cat) + t * setup_power(s, cat)


def energy_for_target(
    s: ProtocolSetup,
    cat: Catalog,
    n_target: float,
    rate: RateResult | None = None,
) -> EnergyReport:
    """Full energy report for distilling ``n_target`` secret bits."""
    s.validate(cat)
    if rate is None:
        rate = s.rate()
    runtime = runtime_for_target(n_target, rate)
    dsp_J = s.dsp_streams * dsp_energy(n_target, rate.secret_per_use, s.dsp)
    power = setup_power(s, cat)
    startup = setup_startup_energy(s, cat)
    running = power * runtime

    rows = []
    for group, cid, m in s.entries():
        watts = m * cat.power(cid)
        rows.append((cid, m, watts, m * cat.startup_energy(cid) + watts * runtime, group))
    if dsp_J > 0:
        rows.append(("dsp", s.dsp_streams, 0.0, dsp_J, "classical"))
    total = startup + running + dsp_J
    breakdown = tuple(
        BreakdownRow(cid, m, w, j, (j / total) if total > 0 else 0.0, g) for cid, m, w, j, g in rows
    )
    return EnergyReport(
        name=s.name,
        n_target_bits=float(n_target),
        secret_bps=rate.secret_bps,
        startup_J=startup,
        power_W=power,
        runtime_s=runtime,
        running_J=running,
        dsp_J=dsp_J,
        total_J=total,
        ee_bits_per_J=energy_efficiency(rate, power),
        breakdown=breakdown,
    )


def power_breakdown(s: ProtocolSetup, cat: Catalog, merge: bool = True) -> list[tuple[str, float]]:
    """Fraction of total power drawn by each component, largest first.

    With ``merge`` the same component id appearing in several groups is
    reported once.
    """
    total = setup_power(s, cat)
    if total <= 0:
        raise ValidationError(f"setup {s.name!r} draws no power")
    acc: dict[str, float] = {}
    for group, cid, m in s.entries():
        key = cid if merge else f"{group}:{cid}"
        acc[key] = acc.get(key, 0.0) + m * cat.power(cid)
    return sorted(((k, w / total) for k, w in acc.items()), key=lambda kv: (-kv[1], kv[0]))


def group_power(s: ProtocolSetup, cat: Catalog) -> dict[str, float]:
    return {g: math.fsum(m * cat.power(cid) for cid, m in items) for g, items in s.groups().items()}


def total_energy_curve(
    s_for: Callable[[float], ProtocolSetup],
    cat: Catalog,
    distances: Sequence[float],
    n_target: float,
) -> list[float]:
    """Energy to target along a distance sweep; infeasible points are NaN."""
    out = []
    for d in distances:
        try:
            out.append(energy_for_target(s_for(d), cat, n_target).total_J)
        except InfeasibleTargetError:
            out.append(math.nan)
    return out
