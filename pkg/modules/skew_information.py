"""
Wigner-Yanase-Dyson skew information, metric adjusted skew information and the
uncertainty relation built on them, with closed forms for the thermal oscillator.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from modules.covariance import qfi_unitary_model
from modules.errors import NumericalError, ValidationError
from modules.monotone_functions import MonotoneFunction, wyd
from modules.oscillator import OscillatorSpec
from modules.spectral_core import DensityMatrix, ThermalState, as_matrix, commutator, state_spectrum

logger = logging.getLogger(__name__)

State = Union[ThermalState, DensityMatrix, np.ndarray]


@dataclass(frozen=True)
class SkewResult:
    value: float
    parameter: str
    operator: str
    method: str


def _check_alpha(alpha: float) -> float:
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    return float(alpha)


def _label(a) -> str:
    return getattr(a, "label", "") or "A"


def _rho(state: State) -> np.ndarray:
    if isinstance(state, ThermalState):
        return state.density.matrix
    return as_matrix(state, "rho")


def variance(state: State, a) -> float:
    """<(A - <A>)^2>"""
    rho = _rho(state)
    am = as_matrix(a, "A")
    mean = np.trace(rho @ am)
    return float(np.real(np.trace(rho @ am @ am) - mean * mean))


def wyd_skew_direct(state: State, alpha: float, a) -> SkewResult:
    """
    I_alpha = -1/2 tr([rho^alpha, A][rho^(1-alpha), A]) through the spectral form
    1/2 sum_ij (p_i^a - p_j^a)(p_i^(1-a) - p_j^(1-a)) |A_ij|^2.
    """
    alpha = _check_alpha(alpha)
    v, _, log_p = state_spectrum(state)
    am = as_matrix(a, "A")
    if am.shape[0] != v.shape[0]:
        raise ValidationError(f"A: dimension {am.shape[0]} does not match state dimension {v.shape[0]}")
    a_eig = v.conj().T @ am @ v
    pa = np.exp(alpha * log_p)
    pb = np.exp((1.0 - alpha) * log_p)
    terms = (pa[:, None] - pa[None, :]) * (pb[:, None] - pb[None, :]) * np.abs(a_eig) ** 2
    return SkewResult(float(0.5 * np.sum(terms)), f"alpha={alpha:g}", _label(a), "direct-trace")


def wyd_skew_via_qfi(state: State, alpha: float, a) -> SkewResult:
    """I_alpha = (alpha(1-alpha)/2) J with the f_alpha QFI of the unitary model."""
    alpha = _check_alpha(alpha)
    j = qfi_unitary_model(state, wyd(alpha), a).value
    return SkewResult(alpha * (1.0 - alpha) / 2 * j, f"alpha={alpha:g}", _label(a), "via-QFI")


def metric_adjusted_skew(state: State, f: MonotoneFunction, a) -> SkewResult:
    """I_f = (f(0)/2) J; undefined for f(0) = 0."""
    if f.f_at_zero == 0:
        raise ValidationError("metric adjusted skew information undefined, f(0)=0")
    j = float(qfi_unitary_model(state, f, a).matrix[0, 0].real)
    return SkewResult(f.f_at_zero / 2 * j, f.name, _label(a), "via-QFI")


def uncertainty_quantity(state: State, alpha: float, a, tol: float = 1e-12) -> float:
    """U_alpha = sqrt(V^2 - (V - I_alpha)^2) = sqrt(I (2V - I))."""
    i = wyd_skew_direct(state, alpha, a).value
    v = variance(state, a)
    radicand = i * (2 * v - i)
    if radicand < -tol * max(1.0, v * v):
        raise NumericalError(
            f"Failed to compute U_alpha: negative radicand {radicand:.3e} (I = {i:.6g}, variance = {v:.6g})"
        )
    return math.sqrt(max(radicand, 0.0))


@dataclass(frozen=True)
class YanagiReport:
    alpha: float
    lhs: float
    rhs: float
    satisfied: bool
    gap: float


def yanagi_check(state: State, alpha: float, a, b, tol: float = 1e-10) -> YanagiReport:
    """U_alpha(A) U_alpha(B) >= alpha(1-alpha) |tr(rho [A, B])|^2."""
    alpha = _check_alpha(alpha)
    lhs = uncertainty_quantity(state, alpha, a) * uncertainty_quantity(state, alpha, b)
    rho = _rho(state)
    c = np.trace(rho @ commutator(as_matrix(a, "A"), as_matrix(b, "B")))
    rhs = alpha * (1.0 - alpha) * float(abs(c)) ** 2
    return YanagiReport(alpha, lhs, rhs, bool(lhs >= rhs - tol), lhs - rhs)


# ---------------------------------------------------------------------------
# thermal oscillator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OscillatorOracle:
    alpha: float
    i_x: float
    i_p: float
    variance_x: float
    variance_p: float
    lhs: float
    rhs: float
    gap: float
    numeric_i_x: Optional[float] = None
    numeric_i_p: Optional[float] = None


def skew_factor(alpha: float, a: float) -> float:
    """(1 - e^{-alpha a})(1 - e^{-(1-alpha) a}) / (1 - e^{-a})"""
    return math.expm1(-alpha * a) * math.expm1(-(1 - alpha) * a) / -math.expm1(-a)


def oscillator_oracle(spec: OscillatorSpec, alpha: float, numeric: bool = False) -> OscillatorOracle:
    """
    Closed-form WYD skew information of x and p for the thermal oscillator and
    the uncertainty-relation sides.

    Args:
        spec: oscillator parameters
        alpha: WYD parameter
        numeric: also evaluate I_alpha on the truncated Fock realization

    Returns:
        OscillatorOracle
    """
    alpha = _check_alpha(alpha)
    a = spec.alpha
    hbar, m, w = spec.hbar, spec.mass, spec.omega
    factor = skew_factor(alpha, a)
    coth = 1.0 / math.tanh(a / 2)
    x_scale = hbar / (2 * m * w)
    p_scale = hbar * m * w / 2
    i_x = x_scale * factor
    i_p = p_scale * factor
    var_x = x_scale * coth
    var_p = p_scale * coth

    # U_x U_p = hbar^2 (1 - u^2)(1 - v^2) / (4 (1 - uv)^2), u = e^{-alpha a}, v = e^{-(1-alpha) a}
    lhs = hbar**2 * math.expm1(-2 * alpha * a) * math.expm1(-2 * (1 - alpha) * a) / (4 * math.expm1(-a) ** 2)
    rhs = alpha * (1 - alpha) * hbar**2

    numeric_x = numeric_p = None
    if numeric:
        state = spec.thermal(check=True)
        numeric_x = wyd_skew_direct(state, alpha, spec.position()).value
        numeric_p = wyd_skew_direct(state, alpha, spec.momentum()).value
    return OscillatorOracle(alpha, i_x, i_p, var_x, var_p, lhs, rhs, lhs - rhs, numeric_x, numeric_p)
