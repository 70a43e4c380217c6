"""Seeded random operators and states for property batteries and demo runs."""

from typing import Optional, Union

import numpy as np

from modules.errors import ValidationError
from modules.spectral_core import DensityMatrix, HermitianOperator, ThermalState, thermal_state

Seed = Union[int, np.random.Generator, None]


def rng_for(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_hermitian(dim: int, seed: Seed = None, scale: float = 1.0, label: str = "") -> HermitianOperator:
    """GUE-like sample, (G + G^dagger)/2 with complex normal G."""
    if dim < 1:
        raise ValidationError(f"dimension must be >= 1, got {dim}")
    rng = rng_for(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return HermitianOperator(scale * 0.5 * (g + g.conj().T), label=label)


def random_thermal_state(dim: int, beta: float, seed: Seed = None, hbar: float = 1.0) -> ThermalState:
    return thermal_state(random_hermitian(dim, seed, label="H"), beta, hbar=hbar)


def random_density_matrix(dim: int, seed: Seed = None, rank: Optional[int] = None) -> DensityMatrix:
    """Hilbert-Schmidt sample W W^dagger / tr, optionally of reduced rank."""
    rng = rng_for(seed)
    k = dim if rank is None else rank
    if not 1 <= k <= dim:
        raise ValidationError(f"rank must lie in [1, {dim}], got {rank}")
    w = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
    rho = w @ w.conj().T
    return DensityMatrix(rho / np.trace(rho).real)
