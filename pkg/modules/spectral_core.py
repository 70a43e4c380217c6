"""
Hermitian linear-algebra substrate: validated operators, density matrices,
thermal states, spectral decompositions and Bohr-frequency enumeration.

Everything here is immutable once constructed; arrays are stored read-only.
Natural units are used internally (k_B = 1); hbar is carried explicitly where a
frequency appears.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import linalg as sla
from scipy.special import logsumexp

from modules import settings
from modules.errors import NumericalError, PopulationFloorError, ValidationError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, "HermitianOperator", list]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _square(matrix, name: str) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValidationError(f"{name}: expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name}: matrix contains non-finite entries")
    return m


def _check_hermitian(m: np.ndarray, name: str, tol: float) -> None:
    diff = np.abs(m - m.conj().T)
    scale = np.max(np.abs(m))
    worst = float(diff.max())
    if worst > tol * scale:
        row, col = np.unravel_index(int(np.argmax(diff)), diff.shape)
        raise ValidationError(
            f"{name}: not Hermitian, worst violation |M - M^dagger| = {worst:.3e} "
            f"at row {row}, column {col} (tolerance {tol * scale:.3e})"
        )


@dataclass(frozen=True)
class HermitianOperator:
    """A dense Hermitian matrix, symmetrized exactly after validation."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        name = self.label or "operator"
        m = _square(self.matrix, name)
        _check_hermitian(m, name, settings.HERMITICITY_TOL)
        object.__setattr__(self, "matrix", _frozen(0.5 * (m + m.conj().T)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def as_matrix(op: ArrayLike, name: str = "operator") -> np.ndarray:
    """Plain complex ndarray view of an operator argument (no Hermiticity check)."""
    if isinstance(op, HermitianOperator):
        return op.matrix
    if isinstance(op, DensityMatrix):
        return op.matrix
    return _square(op, name)


def as_hermitian(op: ArrayLike, name: str = "operator") -> np.ndarray:
    if isinstance(op, HermitianOperator):
        return op.matrix
    return HermitianOperator(np.asarray(op), label=name).matrix


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: str = ""

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def to_eigenbasis(self, op: ArrayLike) -> np.ndarray:
        v = self.eigenvectors
        return v.conj().T @ as_matrix(op) @ v

    def from_eigenbasis(self, m: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v @ m @ v.conj().T

    def reconstruct(self) -> np.ndarray:
        return self.from_eigenbasis(np.diag(self.eigenvalues).astype(complex))


def decompose(op: ArrayLike, source: str = "") -> SpectralDecomposition:
    """
    Eigendecomposition of a Hermitian operator with residual checks.

    Args:
        op: Hermitian operator (validated if a raw array is given)
        source: label recorded on the decomposition

    Returns:
        SpectralDecomposition with ascending eigenvalues and unitary eigenvectors
    """
    label = source or (op.label if isinstance(op, HermitianOperator) else "")
    m = as_hermitian(op, label or "operator")
    try:
        w, v = sla.eigh(m)
    except (sla.LinAlgError, ValueError) as e:
        raise NumericalError(f"Failed to diagonalize {label or 'operator'}: {str(e)}")

    scale = max(1.0, float(np.max(np.abs(m))))
    residual = float(np.max(np.abs(v @ np.diag(w) @ v.conj().T - m)))
    if residual > settings.DECOMPOSITION_TOL * scale:
        raise NumericalError(
            f"Failed to diagonalize {label or 'operator'}: reconstruction residual {residual:.3e}"
        )
    unitarity = float(np.max(np.abs(v.conj().T @ v - np.eye(len(w)))))
    if unitarity > settings.DECOMPOSITION_TOL:
        raise NumericalError(
            f"Failed to diagonalize {label or 'operator'}: eigenvectors not orthonormal ({unitarity:.3e})"
        )
    return SpectralDecomposition(_frozen(w), _frozen(v), label)


@dataclass(frozen=True)
class DensityMatrix:
    """
    A validated density matrix. Slightly negative eigenvalues (>= -1e-12) are
    clamped to zero; the stored spectrum is the clamped one.
    """

    matrix: np.ndarray
    label: str = ""
    populations: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        name = self.label or "rho"
        m = _square(self.matrix, name)
        _check_hermitian(m, name, settings.HERMITICITY_TOL)
        m = 0.5 * (m + m.conj().T)
        trace = np.trace(m).real
        if abs(trace - 1.0) > settings.TRACE_TOL:
            raise ValidationError(f"{name}: trace is {trace:.15g}, expected 1")
        w, v = sla.eigh(m)
        if w[0] < -settings.NEGATIVE_EIGENVALUE_TOL:
            raise ValidationError(f"{name}: negative eigenvalue {w[0]:.3e}")
        w = np.clip(w, 0.0, None)
        object.__setattr__(self, "populations", _frozen(w))
        object.__setattr__(self, "eigenvectors", _frozen(v))
        object.__setattr__(self, "matrix", _frozen((v * w) @ v.conj().T))

    @classmethod
    def from_spectrum(cls, populations: np.ndarray, eigenvectors: np.ndarray, label: str = "") -> "DensityMatrix":
        return cls((eigenvectors * populations) @ eigenvectors.conj().T, label)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def min_population(self) -> float:
        return float(self.populations.min())


@dataclass(frozen=True)
class ThermalState:
    hamiltonian: HermitianOperator
    beta: float
    populations: np.ndarray
    log_populations: np.ndarray
    free_energy: float
    decomposition: SpectralDecomposition
    density: DensityMatrix
    hbar: float = 1.0
    population_floor: float = settings.POPULATION_FLOOR
    usable_for_inversion: bool = True

    @property
    def dim(self) -> int:
        return self.populations.shape[0]

    @property
    def energies(self) -> np.ndarray:
        return self.decomposition.eigenvalues


def thermal_state(
    h: ArrayLike,
    beta: float,
    hbar: float = 1.0,
    population_floor: float = settings.POPULATION_FLOOR,
) -> ThermalState:
    """
    Canonical state exp(-beta H)/Z built in log-space from the spectrum of H.

    Args:
        h: Hamiltonian
        beta: inverse temperature (> 0)
        hbar: reduced Planck constant used by downstream frequency conversions
        population_floor: smallest population considered usable for K^f inversion

    Returns:
        ThermalState; `usable_for_inversion` is False when a population falls below the floor
    """
    if not np.isfinite(beta) or beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if hbar <= 0:
        raise ValidationError(f"hbar must be positive, got {hbar}")
    op = h if isinstance(h, HermitianOperator) else HermitianOperator(np.asarray(h), label="H")
    sd = decompose(op, source=op.label or "H")
    e = sd.eigenvalues
    e0 = e[0]
    log_w = -beta * (e - e0)
    log_z = float(logsumexp(log_w))
    log_p = log_w - log_z
    p = np.exp(log_p)
    free_energy = float(e0 - log_z / beta)

    usable = bool(p.min() >= population_floor)
    if not usable:
        logger.warning(
            "thermal state at beta=%g has population %.3e below floor %.1e; "
            "superoperator inversion disabled for this state",
            beta, p.min(), population_floor,
        )
    density = DensityMatrix.from_spectrum(p, sd.eigenvectors, label="rho")
    return ThermalState(
        hamiltonian=op,
        beta=float(beta),
        populations=_frozen(p),
        log_populations=_frozen(log_p),
        free_energy=free_energy,
        decomposition=sd,
        density=density,
        hbar=float(hbar),
        population_floor=population_floor,
        usable_for_inversion=usable,
    )


def effective_hamiltonian(
    rho: Union[DensityMatrix, np.ndarray],
    beta: float,
    population_floor: float = settings.POPULATION_FLOOR,
) -> HermitianOperator:
    """H = -(1/beta) log rho, normalized so that the free energy is zero."""
    if beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    dm = rho if isinstance(rho, DensityMatrix) else DensityMatrix(np.asarray(rho))
    if dm.min_population < population_floor:
        raise PopulationFloorError(
            f"state not thermalizable at finite beta: minimum eigenvalue "
            f"{dm.min_population:.3e} below floor {population_floor:.1e}"
        )
    v = dm.eigenvectors
    energies = -np.log(dm.populations) / beta
    return HermitianOperator((v * energies) @ v.conj().T, label="H_eff")


def state_spectrum(state: Union[ThermalState, DensityMatrix]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (eigenvectors, populations, log_populations) of a state.

    Thermal states use their exact log-space populations; density matrices use the
    logarithm of their clamped eigenvalues (-inf for exact zeros).
    """
    if isinstance(state, ThermalState):
        return state.decomposition.eigenvectors, state.populations, state.log_populations
    if isinstance(state, DensityMatrix):
        p = state.populations
        with np.errstate(divide="ignore"):
            log_p = np.log(p)
        return state.eigenvectors, p, log_p
    return state_spectrum(DensityMatrix(np.asarray(state)))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


@dataclass(frozen=True)
class BohrLine:
    omega: float
    pairs: np.ndarray  # shape (m, 2); pair (i, j) sits at (E_i - E_j)/hbar

    @property
    def multiplicity(self) -> int:
        return self.pairs.shape[0]


def default_collapse_tol(sd: SpectralDecomposition, hbar: float = 1.0) -> float:
    scale = float(np.max(np.abs(sd.eigenvalues))) if sd.dim else 0.0
    return settings.COLLAPSE_TOL_FACTOR * (scale if scale > 0 else 1.0) / hbar


def bohr_lines(
    sd: SpectralDecomposition,
    collapse_tol: Optional[float] = None,
    hbar: float = 1.0,
) -> List[BohrLine]:
    """
    Group all ordered level pairs into Bohr-frequency lines.

    Args:
        sd: spectral decomposition of the Hamiltonian
        collapse_tol: frequencies closer than this are merged (default 1e-9 max|E| / hbar)
        hbar: reduced Planck constant

    Returns:
        Lines in ascending frequency; each line keeps its contributing pairs
    """
    if collapse_tol is None:
        collapse_tol = default_collapse_tol(sd, hbar)
    if collapse_tol < 0:
        raise ValidationError(f"collapse_tol must be >= 0, got {collapse_tol}")

    e = sd.eigenvalues
    d = len(e)
    ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    omega = (e[ii] - e[jj]) / hbar
    order = np.argsort(omega, kind="stable")
    omega = omega[order]
    pairs = np.stack([ii[order], jj[order]], axis=1)

    breaks = np.nonzero(np.diff(omega) > collapse_tol)[0] + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [len(omega)]])

    lines = []
    for lo, hi in zip(starts, stops):
        members = pairs[lo:hi]
        # the line holding the diagonal pairs is pinned to exactly zero
        center = 0.0 if np.any(members[:, 0] == members[:, 1]) else float(omega[lo:hi].mean())
        lines.append(BohrLine(center, _frozen(members)))
    return lines
