"""
Generalized fluctuation-dissipation checks and the inverse pipelines that rebuild
covariances and QFI from response data.

Every reconstruction has the form

    value = integral d omega / 2 pi  W(omega) S(omega)

with S = chi_{mu nu} + conj(chi_{nu mu}) for admittances and
S = chit_{mu nu} - conj(chit_{nu mu}) for dynamical susceptibilities, and

    current covariance       W = hbar omega c_f(beta hbar omega)
    displacement covariance  W = -i hbar c_f(beta hbar omega)
    unitary-model QFI        W = -i hbar (1 - e^{-beta hbar omega}) / f(e^{-beta hbar omega})

c_f being the FDT coefficient. Line sets are integrated exactly (discrete sums);
sampled spectra by trapezoid quadrature.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from modules import settings
from modules.errors import DivergenceError, ValidationError
from modules.linear_response import (
    AdmittanceSpectrum,
    SpectralLineSet,
    admittance,
    covariance_lines,
    current_operator,
    default_grid,
    dynamical_susceptibility,
    response_lines,
)
from modules.monotone_functions import KernelFunction, MonotoneFunction, fdt_coefficient
from modules.spectral_core import ThermalState, as_hermitian, bohr_lines

logger = logging.getLogger(__name__)

Spectrum = Union[AdmittanceSpectrum, SpectralLineSet]

RECONSTRUCTION_KINDS = ("current", "displacement", "qfi")


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def _alpha(omega: np.ndarray, beta: float, hbar: float) -> np.ndarray:
    return beta * hbar * np.asarray(omega, dtype=float)


def current_weight(f: KernelFunction, omega, beta: float, hbar: float = 1.0) -> np.ndarray:
    """hbar omega f(e^{-a}) / (1 - e^{-a}); the omega = 0 limit is 1/beta."""
    a = np.atleast_1d(_alpha(omega, beta, hbar))
    zero = a == 0
    safe = np.where(zero, 1.0, a)
    out = (safe / beta) * fdt_coefficient(f, safe)
    return np.where(zero, 1.0 / beta, out)


def coefficient(f: KernelFunction, omega, beta: float, hbar: float = 1.0) -> np.ndarray:
    """c_f(beta hbar omega); infinite at omega = 0."""
    a = np.atleast_1d(_alpha(omega, beta, hbar))
    zero = a == 0
    safe = np.where(zero, 1.0, a)
    return np.where(zero, np.inf, fdt_coefficient(f, safe))


def qfi_weight(f: KernelFunction, omega, beta: float, hbar: float = 1.0) -> np.ndarray:
    """(1 - e^{-a}) / f(e^{-a}) = 1 / c_f(a), zero at omega = 0."""
    a = np.atleast_1d(_alpha(omega, beta, hbar))
    zero = a == 0
    safe = np.where(zero, 1.0, a)
    with np.errstate(divide="ignore"):
        out = 1.0 / fdt_coefficient(f, safe)
    return np.where(zero, 0.0, out)


def integrand_weight(kind: str, f: KernelFunction, omega, beta: float, hbar: float = 1.0) -> np.ndarray:
    if kind == "current":
        return current_weight(f, omega, beta, hbar).astype(complex)
    if kind == "displacement":
        return -1j * hbar * coefficient(f, omega, beta, hbar)
    if kind == "qfi":
        return -1j * hbar * qfi_weight(f, omega, beta, hbar)
    raise ValidationError(f"unknown reconstruction kind {kind!r}; expected one of {RECONSTRUCTION_KINDS}")


# ---------------------------------------------------------------------------
# FDT checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FdtReport:
    f_name: str
    kind: str
    beta: float
    hbar: float
    omegas: np.ndarray
    covariance_weights: np.ndarray
    response_weights: np.ndarray
    ratios: np.ndarray
    predicted: np.ndarray
    deviations: np.ndarray
    max_deviation: float
    skipped_omegas: np.ndarray
    static_covariance: complex = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= 1e-10)


def check_gfdt(
    state: ThermalState,
    f: MonotoneFunction,
    a_mu,
    a_nu=None,
    kind: str = "current",
    significance: float = 1e-14,
    collapse_tol: Optional[float] = None,
) -> FdtReport:
    """
    Line-by-line comparison of covariance and response spectra.

    Args:
        state: full-rank thermal state
        f: monotone function
        a_mu, a_nu: displacement operators (currents are derived from H for kind="current")
        kind: "current" or "displacement"
        significance: response weights below this fraction of the largest are not divided

    Returns:
        FdtReport with the per-line ratio table
    """
    if not isinstance(state, ThermalState):
        raise ValidationError("check_gfdt needs a thermal state")
    a_nu = a_mu if a_nu is None else a_nu
    if kind == "current":
        x_mu = current_operator(state.hamiltonian, a_mu, state.hbar)
        x_nu = current_operator(state.hamiltonian, a_nu, state.hbar)
    elif kind == "displacement":
        x_mu, x_nu = a_mu, a_nu
    else:
        raise ValidationError(f"kind must be 'current' or 'displacement', got {kind!r}")

    cov = covariance_lines(state, f, x_mu, x_nu, kind=kind, collapse_tol=collapse_tol)
    resp = response_lines(state, x_mu, x_nu, kind=kind, collapse_tol=collapse_tol)
    omegas = cov.omegas
    scale = float(np.max(np.abs(resp.weights))) if len(resp) else 0.0
    usable = (np.abs(resp.weights) > significance * scale) & (omegas != 0.0)

    predicted = np.full(omegas.shape, np.nan, dtype=complex)
    ratios = np.full(omegas.shape, np.nan, dtype=complex)
    deviations = np.full(omegas.shape, np.nan)
    if np.any(usable):
        w = integrand_weight(kind, f, omegas[usable], state.beta, state.hbar)
        predicted[usable] = w
        ratios[usable] = cov.weights[usable] / resp.weights[usable]
        deviations[usable] = np.abs(ratios[usable] - w) / np.abs(w)

    static = 0.0j
    if kind == "displacement":
        zero = omegas == 0.0
        static = complex(np.sum(cov.weights[zero]) / (2 * np.pi))

    max_dev = float(np.nanmax(deviations)) if np.any(usable) else 0.0
    if max_dev > 1e-10:
        logger.warning("gFDT deviation %.3e for %s (%s kind)", max_dev, f.name, kind)
    return FdtReport(
        f_name=f.name,
        kind=kind,
        beta=state.beta,
        hbar=state.hbar,
        omegas=omegas,
        covariance_weights=cov.weights,
        response_weights=resp.weights,
        ratios=ratios,
        predicted=predicted,
        deviations=deviations,
        max_deviation=max_dev,
        skipped_omegas=omegas[~usable],
        static_covariance=static,
    )


def static_covariance(state: ThermalState, f: MonotoneFunction, a_mu, a_nu=None) -> complex:
    """Zero-frequency part of the displacement covariance; no response function sees it."""
    a_nu = a_mu if a_nu is None else a_nu
    lines = covariance_lines(state, f, a_mu, a_nu, kind="displacement")
    return complex(np.sum(lines.weights[lines.omegas == 0.0]) / (2 * np.pi))


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionResult:
    value: complex
    method: str
    kind: str
    f_name: str
    error_estimate: float = 0.0
    eta: float = 0.0
    grid_points: int = 0
    cutoff: float = 0.0
    truncation_error: float = 0.0
    flags: Tuple[str, ...] = ()
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def real(self) -> float:
        return float(np.real(self.value))


def _discrete(
    lines_munu: SpectralLineSet,
    lines_numu: Optional[SpectralLineSet],
    kind: str,
    f: KernelFunction,
    beta: float,
    hbar: float,
) -> ReconstructionResult:
    expected = "response" if kind == "current" else "displacement-response"
    for ls in (lines_munu, lines_numu):
        if ls is not None and ls.kind != expected:
            raise ValidationError(f"{kind} reconstruction needs {expected} lines, got {ls.kind!r}")
    other = lines_munu if lines_numu is None else lines_numu
    if not np.array_equal(other.omegas, lines_munu.omegas):
        raise ValidationError("line sets for (mu, nu) and (nu, mu) sit at different frequencies")
    sign = 1.0 if kind == "current" else -1.0
    strength = 0.5 * (lines_munu.weights + sign * np.conj(other.weights))
    keep = lines_munu.omegas != 0.0 if kind != "current" else np.ones(len(lines_munu), dtype=bool)
    w = integrand_weight(kind, f, lines_munu.omegas[keep], beta, hbar)
    value = complex(np.sum(w * strength[keep]) / (2 * np.pi))
    return ReconstructionResult(value=value, method="discrete-sum", kind=kind, f_name=f.name)


def _symmetric(grid: np.ndarray) -> bool:
    return bool(abs(grid[0] + grid[-1]) <= 1e-12 * max(1.0, abs(grid[-1])))


def _fill_singular(grid: np.ndarray, integrand: np.ndarray) -> np.ndarray:
    """Replace the non-finite omega = 0 node (displacements) by linear extrapolation."""
    bad = ~np.isfinite(integrand)
    if not np.any(bad):
        return integrand
    if np.any(bad & (grid != 0.0)):
        i = int(np.nonzero(bad & (grid != 0.0))[0][0])
        raise DivergenceError(f"reconstruction weight is not finite at omega = {grid[i]:.6g}")
    good = ~bad
    if good.sum() < 2:
        raise ValidationError("spectrum has too few usable points")
    out = integrand.copy()
    out[bad] = np.interp(grid[bad], grid[good], integrand[good].real) + 1j * np.interp(
        grid[bad], grid[good], integrand[good].imag
    )
    return out


def _half_line(grid: np.ndarray, integrand: np.ndarray) -> complex:
    """2 int_0^Omega, the omega = 0 node extrapolated from the first two positive nodes."""
    pos = grid > 0
    g = grid[pos]
    y = integrand[pos]
    if g.size < 2:
        raise ValidationError("spectrum has fewer than two positive frequencies")
    y0 = y[0] - (y[1] - y[0]) * g[0] / (g[1] - g[0])
    return complex(2 * trapezoid(np.concatenate([[y0], y]), np.concatenate([[0.0], g])))


def _quadrature(
    chi_munu: AdmittanceSpectrum,
    chi_numu: Optional[AdmittanceSpectrum],
    kind: str,
    f: MonotoneFunction,
    beta: float,
    hbar: float,
) -> ReconstructionResult:
    other = chi_munu if chi_numu is None else chi_numu
    if not np.array_equal(other.grid, chi_munu.grid):
        raise ValidationError("spectra for (mu, nu) and (nu, mu) use different grids")
    grid = chi_munu.grid
    sign = 1.0 if kind == "current" else -1.0
    strength = chi_munu.values + sign * np.conj(other.values)
    with np.errstate(invalid="ignore", over="ignore"):
        integrand = integrand_weight(kind, f, grid, beta, hbar) * strength / (2 * np.pi)
    integrand = _fill_singular(grid, integrand)

    full = complex(trapezoid(integrand, grid))
    # the same rule on every other node bounds the discretization error
    coarse_idx = np.unique(np.append(np.arange(0, grid.size, 2), grid.size - 1))
    discretization = abs(full - complex(trapezoid(integrand[coarse_idx], grid[coarse_idx])))
    edge = np.abs(integrand[[0, -1]]) * np.abs(grid[[0, -1]])
    truncation = float(edge.sum())

    diagnostics = {}
    value = full
    method = "quadrature"
    if chi_numu is None and getattr(f, "is_standard", False) and _symmetric(grid):
        half = _half_line(grid, integrand)
        diagnostics["half_line_difference"] = float(abs(half - full))
        value = half
        method = "quadrature-half-line"

    flags = []
    reference = max(abs(value), 1e-300)
    tail_allowance = max(settings.TRUNCATION_REL_TOL, chi_munu.eta / max(abs(grid[0]), abs(grid[-1])))
    if truncation > tail_allowance * reference:
        flags.append("truncation")
        logger.warning(
            "%s reconstruction: tail estimate %.3e dominates (value %.3e); widen the grid",
            kind, truncation, abs(value),
        )
    if kind == "qfi" and truncation > reference and abs(value) > 0:
        raise DivergenceError(
            f"reconstruction integral for {f.name} is dominated by its tail "
            f"({truncation:.3e} vs {abs(value):.3e}); the weight grows beyond the cutoff"
        )
    return ReconstructionResult(
        value=value,
        method=method,
        kind=kind,
        f_name=f.name,
        error_estimate=float(discretization + truncation),
        eta=chi_munu.eta,
        grid_points=int(grid.size),
        cutoff=float(max(abs(grid[0]), abs(grid[-1]))),
        truncation_error=truncation,
        flags=tuple(flags),
        diagnostics=diagnostics,
    )


def _reconstruct(kind, chi_munu, chi_numu, f, beta, hbar) -> ReconstructionResult:
    if not (np.isfinite(beta) and beta > 0):
        raise ValidationError(f"beta must be positive, got {beta}")
    if hbar <= 0:
        raise ValidationError(f"hbar must be positive, got {hbar}")
    if isinstance(chi_munu, SpectralLineSet):
        return _discrete(chi_munu, chi_numu, kind, f, beta, hbar)
    if isinstance(chi_munu, AdmittanceSpectrum):
        return _quadrature(chi_munu, chi_numu, kind, f, beta, hbar)
    raise ValidationError(f"unsupported spectrum type {type(chi_munu).__name__}")


def covariance_from_admittance(
    chi_munu: Spectrum,
    chi_numu: Optional[Spectrum] = None,
    f: MonotoneFunction = None,
    beta: float = 1.0,
    hbar: float = 1.0,
) -> ReconstructionResult:
    """
    Equal-time current covariance <J_mu, J_nu>^f from admittance data.

    Line sets are summed exactly; sampled spectra go through trapezoid quadrature,
    using the half-line form for standard f and mu = nu (chi_numu omitted).
    """
    return _reconstruct("current", chi_munu, chi_numu, f, beta, hbar)


def covariance_from_susceptibility(
    chi_munu: Spectrum,
    chi_numu: Optional[Spectrum] = None,
    f: MonotoneFunction = None,
    beta: float = 1.0,
    hbar: float = 1.0,
) -> ReconstructionResult:
    """Covariance <dA_mu, dA_nu>^f of the dynamical parts of A from susceptibilities."""
    return _reconstruct("displacement", chi_munu, chi_numu, f, beta, hbar)


def qfi_from_susceptibility(
    chitilde: Spectrum,
    f: MonotoneFunction,
    beta: float,
    hbar: float = 1.0,
) -> ReconstructionResult:
    """
    Unitary-model QFI from the self-susceptibility of the generator,
    J = (2 hbar / pi) int_0^inf (1 - e^{-beta hbar omega}) / f(e^{-beta hbar omega}) Im chit(omega) d omega.
    """
    if not f.is_standard:
        raise ValidationError(f"{f.name} is not standard; the susceptibility form of the QFI needs standard f")
    return _reconstruct("qfi", chitilde, None, f, beta, hbar)


def metric_adjusted_skew_from_susceptibility(
    chitilde: Spectrum,
    f: MonotoneFunction,
    beta: float,
    hbar: float = 1.0,
) -> ReconstructionResult:
    """I_f = (f(0)/2) J measured through the susceptibility."""
    if f.f_at_zero == 0:
        raise ValidationError("metric adjusted skew information undefined, f(0)=0")
    qfi = qfi_from_susceptibility(chitilde, f, beta, hbar)
    factor = f.f_at_zero / 2
    return ReconstructionResult(
        value=factor * qfi.value,
        method=qfi.method,
        kind="skew",
        f_name=f.name,
        error_estimate=factor * qfi.error_estimate,
        eta=qfi.eta,
        grid_points=qfi.grid_points,
        cutoff=qfi.cutoff,
        truncation_error=factor * qfi.truncation_error,
        flags=qfi.flags,
        diagnostics=dict(qfi.diagnostics),
    )


# ---------------------------------------------------------------------------
# eta extrapolation
# ---------------------------------------------------------------------------

def richardson_eta(values: Sequence[complex], etas: Sequence[float]) -> Tuple[complex, complex, float]:
    """
    Least-squares fit value + C eta.

    Returns:
        (extrapolated value, slope C, max residual relative to the value)
    """
    v = np.asarray(values, dtype=complex)
    e = np.asarray(etas, dtype=float)
    if v.shape != e.shape or v.size < 2:
        raise ValidationError("richardson_eta needs at least two (value, eta) pairs")
    design = np.stack([np.ones_like(e), e], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, v, rcond=None)
    residual = float(np.max(np.abs(design @ coeffs - v)))
    scale = max(abs(coeffs[0]), 1e-300)
    return complex(coeffs[0]), complex(coeffs[1]), residual / scale


def reconstruct_from_lines_at_etas(
    lines_munu: SpectralLineSet,
    f: MonotoneFunction,
    kind: str,
    eta: float,
    lines_numu: Optional[SpectralLineSet] = None,
    factors: Sequence[float] = (1.0, 0.5, 0.25),
    richardson_tol: float = 1e-3,
) -> ReconstructionResult:
    """
    Synthesize spectra from line sets at eta, eta/2, eta/4, reconstruct each by
    quadrature and extrapolate eta -> 0.
    """
    if kind not in RECONSTRUCTION_KINDS:
        raise ValidationError(f"unknown reconstruction kind {kind!r}")
    if kind == "qfi" and lines_numu is not None:
        raise ValidationError("qfi reconstruction uses the self-susceptibility only")
    etas = [eta * s for s in factors]
    top = max(lines_munu.max_frequency(), lines_numu.max_frequency() if lines_numu else 0.0)
    build = admittance if kind == "current" else dynamical_susceptibility

    runs = []
    for e in etas:
        grid = default_grid(lines_munu, e, omega_max=top)
        chi_a = build(lines_munu, e, grid)
        chi_b = build(lines_numu, e, grid) if lines_numu is not None else None
        if kind == "qfi":
            runs.append(qfi_from_susceptibility(chi_a, f, lines_munu.beta, lines_munu.hbar))
        else:
            runs.append(_reconstruct(kind, chi_a, chi_b, f, lines_munu.beta, lines_munu.hbar))

    value, slope, residual = richardson_eta([r.value for r in runs], etas)
    flags = sorted({flag for r in runs for flag in r.flags})
    if residual > richardson_tol:
        flags.append("richardson")
        logger.warning("eta extrapolation residual %.3e exceeds %.1e", residual, richardson_tol)
    return ReconstructionResult(
        value=value,
        method="quadrature-extrapolated",
        kind=kind,
        f_name=f.name,
        error_estimate=float(residual * abs(value)),
        eta=eta,
        grid_points=runs[-1].grid_points,
        cutoff=runs[-1].cutoff,
        truncation_error=max(r.truncation_error for r in runs),
        flags=tuple(flags),
        diagnostics={
            "slope": float(np.abs(slope)),
            "richardson_residual": residual,
            **{f"value_eta_{i}": float(np.real(r.value)) for i, r in enumerate(runs)},
        },
    )


# ---------------------------------------------------------------------------
# probe field
# ---------------------------------------------------------------------------

def solve_probe_field(
    state: ThermalState,
    f: MonotoneFunction,
    b,
    collapse_tol: Optional[float] = None,
) -> np.ndarray:
    """
    External field A whose current equals the logarithmic derivative of the unitary
    model generated by B:

        <a|A|b> = -hbar (1 - e^{-beta E_ab}) / (E_ab f(e^{-beta E_ab})) <a|B|b>,  E_ab = E_a - E_b.

    Energy-diagonal elements are set to zero. A is Hermitian for standard f.
    """
    if not isinstance(state, ThermalState):
        raise ValidationError("solve_probe_field needs a thermal state")
    bm = as_hermitian(b, "B")
    if bm.shape[0] != state.dim:
        raise ValidationError(f"B: dimension {bm.shape[0]} does not match state dimension {state.dim}")
    sd = state.decomposition
    b_eig = sd.to_eigenbasis(bm)
    energies = state.energies
    gap = energies[:, None] - energies[None, :]

    degenerate = np.zeros(gap.shape, dtype=bool)
    for line in bohr_lines(sd, collapse_tol=collapse_tol, hbar=state.hbar):
        if line.omega == 0.0:
            degenerate[line.pairs[:, 0], line.pairs[:, 1]] = True
    off = degenerate & ~np.eye(state.dim, dtype=bool)
    scale = max(float(np.max(np.abs(b_eig))), 1e-300)
    if np.any(np.abs(b_eig[off]) > 1e-12 * scale):
        raise ValidationError(
            "generator has conserved off-diagonal component; parameter direction unreachable by this probe"
        )

    log_p = state.log_populations
    d = log_p[:, None] - log_p[None, :]
    safe_gap = np.where(degenerate, 1.0, gap)
    alpha = np.where(degenerate, 1.0, -d)
    with np.errstate(divide="ignore"):
        factor = -state.hbar / (safe_gap * fdt_coefficient(f, alpha))
    a_eig = np.where(degenerate, 0.0, factor * b_eig)
    return sd.from_eigenbasis(a_eig)
