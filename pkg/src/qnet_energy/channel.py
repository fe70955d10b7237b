"""Fiber attenuation."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class FiberChannel:
    length_km: float
    loss_coeff_dB_per_km: float
    wavelength_nm: float = 1550.0

    def __post_init__(self) -> None:
        if not self.loss_coeff_dB_per_km > 0:
            raise ValidationError("loss coefficient must be positive")
        if not self.wavelength_nm > 0:
            raise ValidationError("wavelength must be positive")

    @property
    def loss_dB(self) -> float:
        return self.length_km * self.loss_coeff_dB_per_km


def transmittance(ch: FiberChannel) -> float:
    """Probability that a photon survives the fiber: 10**(-L*alpha/10).

    Loss is always applied as attenuation, whatever sign convention a
    rate formula is written with.
    """
    if not ch.length_km >= 0:
        raise ValidationError(f"fiber length must be non-negative, got {ch.length_km}")
    if math.isinf(ch.length_km):
        return 0.0
    return 10.0 ** (-ch.loss_dB / 10.0)


def fiber_transmittance(length_km: float, loss_coeff_dB_per_km: float) -> float:
    return transmittance(FiberChannel(length_km, loss_coeff_dB_per_km))
