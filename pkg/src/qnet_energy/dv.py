"""Raw and secret key rates for discrete-variable protocols.

All raw rates are probabilities per channel use (per source pulse). The
secret fraction follows the symmetric-QBER bound ``1 - 2 h(Q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .channel import FiberChannel, transmittance
from .errors import ValidationError

FUSION_MODES = ("as_printed", "with_fusion_probability")

# Root of 1 - 2 h(q); past this QBER no key can be distilled.
QBER_THRESHOLD = 0.11002786443835955


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class DvLinkParams:
    mu: float
    p_coupling: float
    p_det: float
    channel: FiberChannel | tuple[FiberChannel, ...]
    r_source_Hz: float = 80e6
    p_bsm: float = 0.5

    def __post_init__(self) -> None:
        for name in ("mu", "p_coupling", "p_det", "p_bsm"):
            _check_prob(name, getattr(self, name))
        if not self.r_source_Hz > 0:
            raise ValidationError("r_source_Hz must be positive")
        if not isinstance(self.channel, FiberChannel):
            object.__setattr__(self, "channel", tuple(self.channel))

    @property
    def channels(self) -> tuple[FiberChannel, ...]:
        if isinstance(self.channel, FiberChannel):
            return (self.channel,)
        return self.channel

    @property
    def link_transmittance(self) -> float:
        """Product of all segment transmittances (one factor per segment)."""
        return math.prod(transmittance(ch) for ch in self.channels)


@dataclass(frozen=True)
class DvNoise:
    qber: float = 0.01

    def __post_init__(self) -> None:
        if not 0.0 <= self.qber <= 0.5:
            raise ValidationError(f"qber must lie in [0, 0.5], got {self.qber}")


@dataclass(frozen=True)
class RateResult:
    raw_per_use: float
    secret_per_use: float
    secret_bps: float

    def __post_init__(self) -> None:
        if self.secret_per_use < 0 or self.secret_bps < 0:
            raise ValidationError("secret rates cannot be negative")

    @property
    def feasible(self) -> bool:
        return self.secret_bps > 0


def binary_entropy(p: float) -> float:
    """h(p) = -p log2 p - (1-p) log2(1-p), with h(0) = h(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"binary entropy needs p in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def generic_raw_rate(
    sources: Iterable[float] = (),
    efficiencies: Iterable[float] = (),
    channels: Iterable[FiberChannel] = (),
) -> float:
    """Product of emission probabilities, component efficiencies and fiber transmittances."""
    rate = 1.0
    for mu in sources:
        _check_prob("emission probability", mu)
        rate *= mu
    for p in efficiencies:
        _check_prob("efficiency", p)
        rate *= p
    for ch in channels:
        rate *= transmittance(ch)
    return rate


def bb84_raw_rate(p: DvLinkParams) -> float:
    return p.mu * p.p_coupling * p.link_transmittance * p.p_det


def e91_raw_rate(p: DvLinkParams) -> float:
    # both photons of the pair must be coupled and detected
    return p.mu * p.p_coupling**2 * p.link_transmittance * p.p_det**2


def mdi_raw_rate(p: DvLinkParams) -> float:
    return p.mu**2 * p.p_coupling**2 * p.link_transmittance * p.p_bsm * p.p_det**2


def ghz_cka_raw_rate(
    p: DvLinkParams,
    n: int,
    d_km: float,
    fusion_mode: str = "as_printed",
    p_fusion: float = 0.5,
) -> float:
    """Rate of n-party GHZ states reaching all parties, each at ``d_km`` from the source.

    ``mu`` is raised to ceil(n/2) because that many pair sources fire together.
    In ``with_fusion_probability`` mode each of the floor((n-1)/2) fusions
    additionally succeeds with ``p_fusion``.
    """
    if n < 3:
        raise ValidationError(f"GHZ states need at least 3 parties, got {n}")
    if not d_km >= 0:
        raise ValidationError("distance must be non-negative")
    if fusion_mode not in FUSION_MODES:
        raise ValidationError(f"fusion_mode must be one of {FUSION_MODES}")
    _check_prob("p_fusion", p_fusion)
    loss = p.channels[0].loss_coeff_dB_per_km
    arm = transmittance(FiberChannel(d_km, loss))
    rate = p.mu ** math.ceil(n / 2) * p.p_coupling**n * p.p_det**n * arm**n
    if fusion_mode == "with_fusion_probability":
        rate *= p_fusion ** ((n - 1) // 2)
    return rate


def secret_fraction(qber: float) -> float:
    return max(0.0, 1.0 - 2.0 * binary_entropy(qber))


def dv_secret_rate(raw: float, noise: DvNoise, r_source_Hz: float) -> RateResult:
    _check_prob("raw rate", raw)
    if not r_source_Hz > 0:
        raise ValidationError("r_source_Hz must be positive")
    k = raw * secret_fraction(noise.qber)
    return RateResult(raw_per_use=raw, secret_per_use=k, secret_bps=k * r_source_Hz)


def raw_as_result(raw: float, r_source_Hz: float) -> RateResult:
    """Rate for tasks whose output is the raw event itself (e.g. entangled states)."""
    _check_prob("raw rate", raw)
    return RateResult(raw_per_use=raw, secret_per_use=raw, secret_bps=raw * r_source_Hz)


@dataclass(frozen=True)
class DvPreset:
    name: str
    mu: float
    qber: float
    p_coupling: float = 0.9
    p_bsm: float = 0.5
    r_source_Hz: float = 80e6
    # Table-4 style accounting: SPDC sources without waveplates, MDI without classical nodes
    include_source_waveplates: bool = True
    include_mdi_classical: bool = True


PRESETS: dict[str, DvPreset] = {
    "baseline_table2": DvPreset(name="baseline_table2", mu=0.01, qber=0.01),
    "table4_repro": DvPreset(
        name="table4_repro",
        mu=0.1,
        qber=0.01,
        include_source_waveplates=False,
        include_mdi_classical=False,
    ),
}


def preset(name: str) -> DvPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown DV preset {name!r}; choose from {sorted(PRESETS)}") from None


def table4_link(distance_km: float = 40.0, p_det: float = 0.95, loss: float = 0.18) -> DvLinkParams:
    """Link parameters reproducing the 40 km DV comparison."""
    pr = PRESETS["table4_repro"]
    return DvLinkParams(
        mu=pr.mu,
        p_coupling=pr.p_coupling,
        p_det=p_det,
        channel=FiberChannel(distance_km, loss),
        r_source_Hz=pr.r_source_Hz,
        p_bsm=pr.p_bsm,
    )


def channels_for(lengths_km: Sequence[float], loss: float) -> tuple[FiberChannel, ...]:
    return tuple(FiberChannel(length, loss) for length in lengths_km)
