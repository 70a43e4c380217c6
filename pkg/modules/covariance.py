"""
The superoperator K^f_rho, generalized covariances, logarithmic derivatives and
the QFI matrices built from them.

Convention: in the eigenbasis of rho, <j|K^f(A)|i> = p_i f(p_j / p_i) <j|A|i>.
With this convention f(x) = x gives K(A) = rho A and f(x) = 1 gives K(A) = A rho.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from modules import settings
from modules.errors import (
    DivergenceError,
    NotIdentifiableError,
    NumericalError,
    PopulationFloorError,
    ValidationError,
)
from modules.monotone_functions import KernelFunction, MonotoneFunction, dual, qfi_to_covariance_function
from modules.spectral_core import (
    DensityMatrix,
    ThermalState,
    as_hermitian,
    as_matrix,
    commutator,
    state_spectrum,
)

logger = logging.getLogger(__name__)

State = Union[ThermalState, DensityMatrix, np.ndarray]


def _floor_of(state: State) -> float:
    if isinstance(state, ThermalState):
        return state.population_floor
    return settings.POPULATION_FLOOR


def kernel_table(log_p: np.ndarray, f: KernelFunction) -> np.ndarray:
    """k[j, i] = p_i f(p_j / p_i) from log-populations."""
    diff = log_p[:, None] - log_p[None, :]
    return np.exp(log_p)[None, :] * f.eval_log(diff)


@dataclass(frozen=True)
class SuperoperatorKf:
    vectors: np.ndarray
    populations: np.ndarray
    log_populations: np.ndarray
    f: KernelFunction
    table: np.ndarray = field(repr=False)

    @classmethod
    def from_state(
        cls,
        state: State,
        f: KernelFunction,
        population_floor: Optional[float] = None,
    ) -> "SuperoperatorKf":
        """
        Build the kernel table for a full-rank state.

        Args:
            state: thermal state, density matrix or raw matrix
            f: monotone function (any KernelFunction is accepted)
            population_floor: override of the state's floor

        Returns:
            SuperoperatorKf with its dim x dim kernel table
        """
        v, p, log_p = state_spectrum(state)
        floor = _floor_of(state) if population_floor is None else population_floor
        if p.min() < floor:
            i = int(np.argmin(p))
            raise PopulationFloorError(
                f"population p[{i}] = {p[i]:.3e} is below the floor {floor:.1e}; "
                f"K^f is ill-conditioned here (lower population_floor to opt in)"
            )
        table = kernel_table(log_p, f)
        if not np.all(np.isfinite(table)) or np.any(table <= 0):
            raise NumericalError(f"Failed to build the {f.name} kernel table: non-positive entries")
        return cls(v, p, log_p, f, table)

    @property
    def dim(self) -> int:
        return self.populations.shape[0]

    @property
    def condition_number(self) -> float:
        return float(self.table.max() / self.table.min())

    def to_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ a @ self.vectors

    def from_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        return self.vectors @ a @ self.vectors.conj().T


def _same_dim(k: SuperoperatorKf, a: np.ndarray, name: str) -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != k.dim:
        raise ValidationError(f"{name}: dimension {m.shape[0]} does not match state dimension {k.dim}")
    return m


def apply_kf(k: SuperoperatorKf, a, name: str = "A") -> np.ndarray:
    m = _same_dim(k, a, name)
    return k.from_eigenbasis(k.table * k.to_eigenbasis(m))


def invert_kf(k: SuperoperatorKf, a, name: str = "A") -> np.ndarray:
    """Entrywise division by the kernel table in the eigenbasis of rho."""
    m = _same_dim(k, a, name)
    if k.table.min() < settings.KERNEL_UNDERFLOW:
        j, i = np.unravel_index(int(np.argmin(k.table)), k.table.shape)
        raise NumericalError(
            f"Failed to invert K^{k.f.name}: kernel entry ({j}, {i}) = {k.table[j, i]:.3e} underflows"
        )
    return k.from_eigenbasis(k.to_eigenbasis(m) / k.table)


def _centered(k: SuperoperatorKf, x: np.ndarray) -> np.ndarray:
    mean = np.sum(k.populations * np.diag(k.to_eigenbasis(x)))
    return x - mean * np.eye(x.shape[0])


def covariance_in_eigenbasis(k: SuperoperatorKf, x_eig: np.ndarray, y_eig: np.ndarray) -> complex:
    return complex(np.sum(np.conj(x_eig) * k.table * y_eig))


def generalized_covariance(
    state: State,
    f: KernelFunction,
    x,
    y,
    centered: bool = True,
    population_floor: Optional[float] = None,
) -> complex:
    """
    <X, Y>^f = tr(X^dagger K^f(Y)).

    Args:
        state: full-rank state
        f: monotone function
        x, y: operators (centered on request: X - <X>)
        centered: subtract the means first

    Returns:
        complex covariance; real for Hermitian X = Y and standard f
    """
    k = SuperoperatorKf.from_state(state, f, population_floor)
    xm = _same_dim(k, x, "X")
    ym = _same_dim(k, y, "Y")
    if centered:
        xm = _centered(k, xm)
        ym = _centered(k, ym)
    return covariance_in_eigenbasis(k, k.to_eigenbasis(xm), k.to_eigenbasis(ym))


def dual_covariance_check(state: State, f: MonotoneFunction, x, y) -> Tuple[complex, complex, float]:
    """(<X,Y>^f, <Y,X>^dual(f), |difference|)."""
    left = generalized_covariance(state, f, x, y)
    right = generalized_covariance(state, dual(f), y, x)
    return left, right, abs(left - right)


# ---------------------------------------------------------------------------
# tangent vectors and QFI
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TangentVector:
    drho: np.ndarray
    log_derivative: np.ndarray


def unitary_tangent(state: State, b) -> np.ndarray:
    """d rho / d theta at theta = 0 for rho_theta = exp(-i theta B) rho exp(i theta B)."""
    rho = state.density.matrix if isinstance(state, ThermalState) else as_matrix(state, "rho")
    bm = as_hermitian(b, "B")
    if bm.shape != rho.shape:
        raise ValidationError(f"B: dimension {bm.shape[0]} does not match state dimension {rho.shape[0]}")
    return 1j * commutator(rho, bm)


def _validate_tangent(drho: np.ndarray, index: int) -> np.ndarray:
    name = f"drho[{index}]"
    m = as_hermitian(drho, name)
    scale = max(1.0, float(np.max(np.abs(m))))
    trace = abs(np.trace(m))
    if trace > settings.TRACE_TOL * scale:
        raise ValidationError(f"{name}: trace is {trace:.3e}, tangent vectors must be traceless")
    return m


def logarithmic_derivative(
    state: State,
    f: KernelFunction,
    drho,
    population_floor: Optional[float] = None,
) -> np.ndarray:
    """L = (K^f)^-1 (d rho)."""
    k = SuperoperatorKf.from_state(state, f, population_floor)
    return invert_kf(k, _validate_tangent(drho, 0), "drho")


@dataclass(frozen=True)
class QfiResult:
    matrix: np.ndarray
    f_name: str
    model: str
    method: str
    is_standard: bool = False
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def value(self) -> complex:
        """The single entry of a one-parameter result."""
        if self.matrix.shape != (1, 1):
            raise ValidationError(f"QFI matrix has shape {self.matrix.shape}, not a single parameter")
        v = self.matrix[0, 0]
        return float(v.real) if self.is_standard else complex(v)


def _psd_check(j: np.ndarray) -> float:
    herm = 0.5 * (j + j.conj().T)
    return float(np.linalg.eigvalsh(herm).min()) if j.size else 0.0


def qfi_matrix(
    state: State,
    f: MonotoneFunction,
    drhos: Sequence,
    population_floor: Optional[float] = None,
    two_path_tol: float = 1e-10,
) -> QfiResult:
    """
    [J]_{mu nu} = <L_mu, L_nu>^f with L = (K^f)^-1 d rho.

    The same matrix is also evaluated as tr(d rho_mu (K^f)^-1 d rho_nu); the two
    paths must agree within `two_path_tol`.
    """
    k = SuperoperatorKf.from_state(state, f, population_floor)
    tangents: List[TangentVector] = []
    for idx, d in enumerate(drhos):
        dm = _validate_tangent(d, idx)
        if dm.shape[0] != k.dim:
            raise ValidationError(f"drho[{idx}]: dimension {dm.shape[0]} does not match state dimension {k.dim}")
        tangents.append(TangentVector(dm, invert_kf(k, dm, f"drho[{idx}]")))

    m = len(tangents)
    via_l = np.zeros((m, m), dtype=complex)
    via_drho = np.zeros((m, m), dtype=complex)
    for mu, t_mu in enumerate(tangents):
        l_mu = k.to_eigenbasis(t_mu.log_derivative)
        for nu, t_nu in enumerate(tangents):
            l_nu = k.to_eigenbasis(t_nu.log_derivative)
            via_l[mu, nu] = covariance_in_eigenbasis(k, l_mu, l_nu)
            via_drho[mu, nu] = np.trace(t_mu.drho.conj().T @ t_nu.log_derivative)

    scale = max(1.0, float(np.max(np.abs(via_l)))) if m else 1.0
    deviation = float(np.max(np.abs(via_l - via_drho))) if m else 0.0
    if deviation > two_path_tol * scale:
        raise NumericalError(f"Failed to compute QFI: two evaluation paths differ by {deviation:.3e}")

    standard = bool(getattr(f, "is_standard", False))
    if standard:
        via_l = np.real(via_l).astype(complex)
    return QfiResult(
        matrix=via_l,
        f_name=f.name,
        model=f"{m}-parameter tangent model",
        method="direct",
        is_standard=standard,
        diagnostics={
            "two_path_deviation": deviation,
            "condition_number": k.condition_number,
            "min_eigenvalue": _psd_check(via_l),
        },
    )


def _unitary_terms(v: np.ndarray, p: np.ndarray, log_p: np.ndarray, f: MonotoneFunction, bm: np.ndarray) -> np.ndarray:
    """Matrix of terms p_i g(p_j/p_i) |B_ji|^2, g(x) = (x-1)^2/f(x)."""
    g = qfi_to_covariance_function(f)
    b_eig = v.conj().T @ bm @ v
    weight = np.abs(b_eig) ** 2
    positive = p > 0
    if np.all(positive):
        return kernel_table(log_p, g) * weight

    # exact zero populations: use the limits of p_i f(p_j/p_i)
    d = len(p)
    f_tilde_zero = dual(f).f_at_zero
    terms = np.zeros((d, d))
    with np.errstate(divide="ignore", invalid="ignore"):
        full = kernel_table(np.where(positive, log_p, 0.0), g)
    for j in range(d):
        for i in range(d):
            if weight[j, i] == 0:
                continue
            if positive[i] and positive[j]:
                terms[j, i] = full[j, i] * weight[j, i]
                continue
            if not positive[i] and not positive[j]:
                continue
            kf = p[j] * f_tilde_zero if positive[j] else p[i] * f.f_at_zero
            if kf == 0:
                raise DivergenceError(
                    f"QFI of the unitary model diverges: {f.name} kernel vanishes on the "
                    f"support edge at levels ({j}, {i})"
                )
            terms[j, i] = (p[j] - p[i]) ** 2 / kf * weight[j, i]
    return terms


def qfi_unitary_model(
    state: State,
    f: MonotoneFunction,
    b,
    divergence_guard: float = settings.DIVERGENCE_GUARD,
) -> QfiResult:
    """
    QFI of rho_theta = exp(-i theta B) rho exp(i theta B) as the covariance of B
    with weight g(x) = (x - 1)^2 / f(x).

    Args:
        state: state (no population floor is applied; zero populations use limits)
        f: monotone function
        b: Hermitian generator
        divergence_guard: largest admissible single term

    Returns:
        1 x 1 QfiResult with method "unitary-model"
    """
    v, p, log_p = state_spectrum(state)
    bm = as_hermitian(b, "B")
    if bm.shape[0] != len(p):
        raise ValidationError(f"B: dimension {bm.shape[0]} does not match state dimension {len(p)}")

    terms = _unitary_terms(v, p, log_p, f, bm)
    worst = float(np.max(terms)) if terms.size else 0.0
    if not np.isfinite(worst) or worst > divergence_guard:
        j, i = np.unravel_index(int(np.nanargmax(np.where(np.isfinite(terms), terms, np.inf))), terms.shape)
        logger.warning("unitary-model QFI term (%d, %d) = %.3e exceeds guard %.1e", j, i, worst, divergence_guard)
        raise DivergenceError(
            f"QFI of the unitary model diverges for {f.name}: term ({j}, {i}) = {worst:.3e} "
            f"exceeds {divergence_guard:.1e}"
        )
    value = float(np.sum(terms))
    return QfiResult(
        matrix=np.array([[value]], dtype=complex),
        f_name=f.name,
        model="unitary",
        method="unitary-model",
        is_standard=bool(getattr(f, "is_standard", False)),
        diagnostics={"max_term": worst},
    )


def optimal_estimator(
    state: State,
    f: MonotoneFunction,
    drho,
    identifiability_tol: float = 1e-12,
) -> Tuple[np.ndarray, float]:
    """
    Locally unbiased estimator saturating the Cramer-Rao bound, O = L / <L, L>^f.

    Args:
        state: full-rank state
        f: standard monotone function
        drho: tangent vector of the one-parameter model

    Returns:
        (O, 1/J)
    """
    if not f.is_standard:
        raise ValidationError(f"{f.name} is not standard; the Cramer-Rao estimator is defined for standard f only")
    k = SuperoperatorKf.from_state(state, f)
    dm = _validate_tangent(drho, 0)
    l_op = invert_kf(k, dm, "drho")
    l_eig = k.to_eigenbasis(l_op)
    j = covariance_in_eigenbasis(k, l_eig, l_eig).real
    if j <= identifiability_tol * max(1.0, float(np.max(np.abs(dm)))):
        raise NotIdentifiableError(f"parameter not identifiable: J = {j:.3e}")
    return l_op / j, 1.0 / j
