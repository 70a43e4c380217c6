"""
Kubo linear response over exact spectral sums.

Fourier convention: X_omega = integral dt e^{i omega t} X(t). Spectral line sets
store the coefficients of delta(omega - omega_k), so a time function is
X(t) = sum_k (w_k / 2 pi) exp(-i omega_k t).

Line kinds:
    current-covariance        C^f of current operators
    displacement-covariance   C^f of centered displacement operators
    response                  Phi of currents, force on A_nu
    displacement-response     Phi~ of displacements, force on A_nu
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from modules import settings
from modules.covariance import kernel_table
from modules.errors import PopulationFloorError, ValidationError
from modules.monotone_functions import BKM, KernelFunction
from modules.spectral_core import (
    DensityMatrix,
    HermitianOperator,
    ThermalState,
    as_matrix,
    bohr_lines,
    commutator,
)

logger = logging.getLogger(__name__)

COVARIANCE_KINDS = ("current-covariance", "displacement-covariance")
RESPONSE_KINDS = ("response", "displacement-response")
LINE_KINDS = COVARIANCE_KINDS + RESPONSE_KINDS


def _frozen(a) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralLineSet:
    omegas: np.ndarray
    weights: np.ndarray
    kind: str
    beta: float
    hbar: float = 1.0
    operators: Tuple[str, ...] = ()
    f_name: str = ""

    def __post_init__(self):
        if self.kind not in LINE_KINDS:
            raise ValidationError(f"unknown line kind {self.kind!r}; expected one of {LINE_KINDS}")
        omegas = np.asarray(self.omegas, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=complex).ravel()
        if omegas.shape != weights.shape:
            raise ValidationError("line set: omegas and weights differ in length")
        if not (np.all(np.isfinite(omegas)) and np.all(np.isfinite(weights))):
            raise ValidationError("line set: non-finite frequency or weight")
        order = np.argsort(omegas, kind="stable")
        object.__setattr__(self, "omegas", _frozen(omegas[order]))
        object.__setattr__(self, "weights", _frozen(weights[order]))

    def __len__(self) -> int:
        return self.omegas.shape[0]

    def sum_rule(self) -> complex:
        """Equal-time value: sum_k w_k / 2 pi."""
        return complex(np.sum(self.weights) / (2 * np.pi))

    def significant(self, rel_tol: float = 1e-12) -> "SpectralLineSet":
        if len(self) == 0:
            return self
        keep = np.abs(self.weights) > rel_tol * np.max(np.abs(self.weights))
        return SpectralLineSet(
            self.omegas[keep], self.weights[keep], self.kind, self.beta, self.hbar, self.operators, self.f_name
        )

    def max_frequency(self, rel_tol: float = 1e-12) -> float:
        lines = self.significant(rel_tol)
        return float(np.max(np.abs(lines.omegas))) if len(lines) else 0.0

    def time_series(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(-1j * np.outer(t, self.omegas)) @ (self.weights / (2 * np.pi))


@dataclass(frozen=True)
class AdmittanceSpectrum:
    grid: np.ndarray
    values: np.ndarray
    eta: float = 0.0
    provenance: str = "synthesized"
    kind: str = "response"
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).ravel()
        values = np.asarray(self.values, dtype=complex).ravel()
        if grid.shape != values.shape or grid.size < 2:
            raise ValidationError("spectrum: grid and values must have equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            i = int(np.argmin(np.diff(grid)))
            raise ValidationError(f"spectrum: grid not strictly ascending at index {i + 1}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("spectrum: non-finite values")
        if self.eta < 0:
            raise ValidationError(f"spectrum: eta must be >= 0, got {self.eta}")
        object.__setattr__(self, "grid", _frozen(grid))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def spacing(self) -> float:
        return float(np.max(np.diff(self.grid)))


# ---------------------------------------------------------------------------
# operators and time-domain response
# ---------------------------------------------------------------------------

def _thermal(state, what: str) -> ThermalState:
    if isinstance(state, ThermalState):
        return state
    if isinstance(state, DensityMatrix) or isinstance(state, np.ndarray):
        raise ValidationError(
            f"{what} needs a Hamiltonian; build one with effective_hamiltonian(rho, beta) "
            f"and thermal_state(H, beta)"
        )
    raise ValidationError(f"{what}: unsupported state type {type(state).__name__}")


def current_operator(h, a, hbar: float = 1.0) -> np.ndarray:
    """J = (1/i hbar) [A, H]."""
    hm = h.matrix if isinstance(h, HermitianOperator) else as_matrix(h, "H")
    am = as_matrix(a, "A")
    if hm.shape != am.shape:
        raise ValidationError(f"A: dimension {am.shape[0]} does not match H dimension {hm.shape[0]}")
    j = commutator(am, hm) / (1j * hbar)
    return 0.5 * (j + j.conj().T) if np.allclose(am, am.conj().T) else j


def _eigen_parts(state: ThermalState, x, name: str) -> np.ndarray:
    m = as_matrix(x, name)
    if m.shape[0] != state.dim:
        raise ValidationError(f"{name}: dimension {m.shape[0]} does not match state dimension {state.dim}")
    return state.decomposition.to_eigenbasis(m)


def _transition_frequencies(state: ThermalState) -> np.ndarray:
    """omega[a, b] = (E_a - E_b) / hbar."""
    e = state.energies
    return (e[:, None] - e[None, :]) / state.hbar


def response_function_time(state, a_nu, x_mu, t_grid) -> np.ndarray:
    """
    Phi_{mu nu}(t) = (1/i hbar) tr(rho [A_nu, X_mu(t)]) by spectral sums.

    Args:
        state: thermal state
        a_nu: perturbing operator
        x_mu: observed operator (current or displacement)
        t_grid: times

    Returns:
        complex array over t_grid (real for Hermitian operators)
    """
    ts = _thermal(state, "response_function_time")
    a = _eigen_parts(ts, a_nu, "A_nu")
    x = _eigen_parts(ts, x_mu, "X_mu")
    p = ts.populations
    coeff = (p[:, None] - p[None, :]) * a * x.T / (1j * ts.hbar)
    omega = _transition_frequencies(ts)
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    # pair (a, b) oscillates as exp(i omega_ba t) = exp(-i omega_ab t)
    phases = np.exp(-1j * np.multiply.outer(t, omega))
    return np.einsum("tab,ab->t", phases, coeff)


def logarithmic_mean_table(state: ThermalState) -> np.ndarray:
    """L[a, b] = (p_a - p_b) / (log p_a - log p_b), p_a on the diagonal."""
    return kernel_table(state.log_populations, BKM).T


def kubo_canonical_form(state, j_mu, j_nu, t) -> np.ndarray:
    """
    Canonical-correlation form beta int_0^1 tr(rho^l J_nu rho^(1-l) J_mu(t)) dl.

    Equals response_function_time(A_nu, J_mu) when J_nu is the current of A_nu.
    """
    ts = _thermal(state, "kubo_canonical_form")
    jm = _eigen_parts(ts, j_mu, "J_mu")
    jn = _eigen_parts(ts, j_nu, "J_nu")
    coeff = ts.beta * logarithmic_mean_table(ts) * jn * jm.T
    omega = _transition_frequencies(ts)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    phases = np.exp(-1j * np.multiply.outer(times, omega))
    out = np.einsum("tab,ab->t", phases, coeff)
    return out if np.ndim(t) else complex(out[0])


# ---------------------------------------------------------------------------
# spectral lines
# ---------------------------------------------------------------------------

def _group(ts: ThermalState, pair_weights: np.ndarray, collapse_tol: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    lines = bohr_lines(ts.decomposition, collapse_tol=collapse_tol, hbar=ts.hbar)
    omegas = np.array([ln.omega for ln in lines])
    weights = np.array([pair_weights[ln.pairs[:, 0], ln.pairs[:, 1]].sum() for ln in lines], dtype=complex)
    return omegas, weights


def _centered_parts(ts: ThermalState, x: np.ndarray) -> np.ndarray:
    mean = np.sum(ts.populations * np.diag(x))
    return x - mean * np.eye(x.shape[0])


def covariance_lines(
    state,
    f: KernelFunction,
    x_mu,
    x_nu,
    kind: str = "current",
    collapse_tol: Optional[float] = None,
) -> SpectralLineSet:
    """
    Lines of C^f_{mu nu, omega}: pair (a, b) at omega_ab carries
    2 pi p_b f(p_a / p_b) X_mu,ba X_nu,ab.

    Args:
        state: full-rank thermal state
        f: monotone function
        x_mu, x_nu: currents (kind="current") or displacements (kind="displacement", centered)
        collapse_tol: Bohr-frequency merge tolerance

    Returns:
        SpectralLineSet of kind current-covariance or displacement-covariance
    """
    ts = _thermal(state, "covariance_lines")
    if kind not in ("current", "displacement"):
        raise ValidationError(f"kind must be 'current' or 'displacement', got {kind!r}")
    if ts.populations.min() < ts.population_floor:
        raise PopulationFloorError(
            f"covariance lines need populations above the floor {ts.population_floor:.1e} "
            f"(minimum {ts.populations.min():.3e})"
        )
    xm = _eigen_parts(ts, x_mu, "X_mu")
    xn = _eigen_parts(ts, x_nu, "X_nu")
    if kind == "displacement":
        xm = _centered_parts(ts, xm)
        xn = _centered_parts(ts, xn)
    k = kernel_table(ts.log_populations, f)
    pair = 2 * np.pi * k * xm.T * xn
    omegas, weights = _group(ts, pair, collapse_tol)
    return SpectralLineSet(
        omegas, weights, f"{kind}-covariance", ts.beta, ts.hbar, ("X_mu", "X_nu"), f.name
    )


def response_lines(
    state,
    x_mu,
    x_nu,
    kind: str = "current",
    collapse_tol: Optional[float] = None,
) -> SpectralLineSet:
    """
    Lines of the response function.

    kind="current": x are currents J_mu, J_nu; pair (a, b) carries
        2 pi beta L(p_a, p_b) J_nu,ab J_mu,ba, L the logarithmic mean. Away from
        zero frequency beta L = p_b (1 - e^{-beta hbar omega}) / (hbar omega); at
        zero frequency it takes the limit beta p_b.
    kind="displacement": x are displacements A_mu, A_nu; pair (a, b) carries
        (2 pi / i hbar) (p_a - p_b) A_nu,ab A_mu,ba.
    """
    ts = _thermal(state, "response_lines")
    xm = _eigen_parts(ts, x_mu, "X_mu")
    xn = _eigen_parts(ts, x_nu, "X_nu")
    if kind == "current":
        pair = 2 * np.pi * ts.beta * logarithmic_mean_table(ts) * xn * xm.T
        out_kind = "response"
    elif kind == "displacement":
        p = ts.populations
        pair = 2 * np.pi * (p[:, None] - p[None, :]) * xn * xm.T / (1j * ts.hbar)
        out_kind = "displacement-response"
    else:
        raise ValidationError(f"kind must be 'current' or 'displacement', got {kind!r}")
    omegas, weights = _group(ts, pair, collapse_tol)
    return SpectralLineSet(omegas, weights, out_kind, ts.beta, ts.hbar, ("X_mu", "X_nu"))


def dynamical_part(state, a) -> np.ndarray:
    """A with its energy-diagonal (zero-frequency) block removed."""
    ts = _thermal(state, "dynamical_part")
    am = _eigen_parts(ts, a, "A")
    omega = _transition_frequencies(ts)
    lines = bohr_lines(ts.decomposition, hbar=ts.hbar)
    zero = [ln for ln in lines if ln.omega == 0.0]
    mask = np.zeros_like(omega, dtype=bool)
    for ln in zero:
        mask[ln.pairs[:, 0], ln.pairs[:, 1]] = True
    return ts.decomposition.from_eigenbasis(np.where(mask, 0.0, am))


# ---------------------------------------------------------------------------
# broadened spectra
# ---------------------------------------------------------------------------

def default_grid(
    lines: SpectralLineSet,
    eta: float,
    points: int = settings.GRID_POINTS,
    span_factor: float = settings.GRID_SPAN_FACTOR,
    omega_max: Optional[float] = None,
) -> np.ndarray:
    """
    Symmetric grid over [-Omega, Omega], Omega = span_factor * max significant |omega_k|.

    The point count is even (omega = 0 is never a node) and large enough that the
    spacing does not exceed eta / 4.
    """
    top = omega_max if omega_max is not None else lines.max_frequency()
    if top <= 0:
        top = 1.0
    span = span_factor * top
    needed = int(np.ceil(2 * span * settings.GRID_POINTS_PER_ETA / eta)) + 1 if eta > 0 else points
    n = max(points, needed)
    n += n % 2
    return np.linspace(-span, span, n)


def _broadened(lines: SpectralLineSet, eta: float, grid: np.ndarray) -> np.ndarray:
    values = np.zeros(grid.shape, dtype=complex)
    for omega_k, w_k in zip(lines.omegas, lines.weights):
        values += (w_k / (2 * np.pi)) / (eta + 1j * (omega_k - grid))
    return values


def admittance(lines: SpectralLineSet, eta: float, grid: Optional[Sequence[float]] = None) -> AdmittanceSpectrum:
    """
    chi(omega) = sum_k (w_k / 2 pi) / (eta + i(omega_k - omega)), the one-sided
    transform of Phi(t) e^{-eta t}.
    """
    if lines.kind != "response":
        raise ValidationError(f"admittance needs current response lines, got {lines.kind!r}")
    return _spectrum(lines, eta, grid)


def dynamical_susceptibility(
    lines: SpectralLineSet, eta: float, grid: Optional[Sequence[float]] = None
) -> AdmittanceSpectrum:
    if lines.kind != "displacement-response":
        raise ValidationError(f"dynamical susceptibility needs displacement response lines, got {lines.kind!r}")
    return _spectrum(lines, eta, grid)


def _spectrum(lines: SpectralLineSet, eta: float, grid) -> AdmittanceSpectrum:
    if not eta > 0:
        raise ValidationError(f"eta must be > 0, got {eta}")
    g = default_grid(lines, eta) if grid is None else np.asarray(grid, dtype=float)
    return AdmittanceSpectrum(
        g,
        _broadened(lines, eta, g),
        eta=eta,
        provenance="synthesized",
        kind=lines.kind,
        extras={"beta": lines.beta, "hbar": lines.hbar},
    )
