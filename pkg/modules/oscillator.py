"""
Truncated Fock-space harmonic oscillator.

Operators live on levels 0..N-1; matrix elements touching level N-1 are where
truncation breaks the canonical relations.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from modules import settings
from modules.errors import TruncationError, ValidationError
from modules.spectral_core import HermitianOperator, ThermalState, thermal_state

logger = logging.getLogger(__name__)


def default_levels(beta: float, omega: float, hbar: float = 1.0) -> int:
    """
    Smallest N with exp(-beta hbar omega N) <= 1e-16 that also keeps the top
    level's population ratio below the adequacy bound.
    """
    a = beta * hbar * omega
    tail = math.ceil(-math.log(settings.FOCK_TAIL) / a)
    adequate = math.ceil(-math.log(settings.FOCK_ADEQUACY) / a) + 1
    return max(2, tail, adequate)


@dataclass(frozen=True)
class OscillatorSpec:
    mass: float = 1.0
    omega: float = 1.0
    beta: float = 1.0
    hbar: float = 1.0
    levels: Optional[int] = None

    def __post_init__(self):
        for name in ("mass", "omega", "beta", "hbar"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"oscillator {name} must be positive, got {value}")
        if self.levels is None:
            object.__setattr__(self, "levels", default_levels(self.beta, self.omega, self.hbar))
        elif self.levels < 2:
            raise ValidationError(f"oscillator needs at least 2 levels, got {self.levels}")

    @property
    def alpha(self) -> float:
        """beta hbar omega"""
        return self.beta * self.hbar * self.omega

    def check_truncation(self) -> None:
        ratio = math.exp(-self.alpha * (self.levels - 1))
        if ratio > settings.FOCK_ADEQUACY:
            suggested = default_levels(self.beta, self.omega, self.hbar)
            raise TruncationError(
                f"truncation at N={self.levels} leaves top-level population ratio {ratio:.3e} "
                f"above {settings.FOCK_ADEQUACY:.0e}; use N >= {suggested}",
                suggested_levels=suggested,
            )

    def annihilator(self) -> np.ndarray:
        return np.diag(np.sqrt(np.arange(1, self.levels)), 1).astype(complex)

    def position(self) -> HermitianOperator:
        a = self.annihilator()
        scale = math.sqrt(self.hbar / (2 * self.mass * self.omega))
        return HermitianOperator(scale * (a + a.conj().T), label="x")

    def momentum(self) -> HermitianOperator:
        a = self.annihilator()
        scale = math.sqrt(self.hbar * self.mass * self.omega / 2)
        return HermitianOperator(1j * scale * (a.conj().T - a), label="p")

    def hamiltonian(self) -> HermitianOperator:
        n = np.arange(self.levels)
        return HermitianOperator(np.diag(self.hbar * self.omega * (n + 0.5)).astype(complex), label="H")

    def thermal(self, check: bool = True) -> ThermalState:
        if check:
            self.check_truncation()
        return thermal_state(self.hamiltonian(), self.beta, hbar=self.hbar)


def bulk_mask(levels: int) -> np.ndarray:
    """True for matrix elements not touching the top level."""
    mask = np.ones((levels, levels), dtype=bool)
    mask[-1, :] = False
    mask[:, -1] = False
    return mask
