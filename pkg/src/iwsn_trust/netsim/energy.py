"""First-order radio energy model."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RadioModel:
    e_elec: float = 50e-9  # J/bit
    eps_fs: float = 10e-12  # J/bit/m^2
    eps_mp: float = 0.0013e-12  # J/bit/m^4

    @property
    def d0(self) -> float:
        return math.sqrt(self.eps_fs / self.eps_mp)

    def tx(self, bits: int, distance: float) -> float:
        if distance < self.d0:
            return bits * (self.e_elec + self.eps_fs * distance**2)
        return bits * (self.e_elec + self.eps_mp * distance**4)

    def rx(self, bits: int) -> float:
        return bits * self.e_elec
