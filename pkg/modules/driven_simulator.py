"""
Virtual driven experiment on a closed system.

The system starts in its thermal state, is driven by H - X(t) A with
X(t) = X0 s(t) cos(omega_d t) (half-cosine ramp s over t_ramp), and the
steady-state oscillation of an observable is fitted to a cos + b sin over an
integer number of drive periods. With that drive

    <J(t)> = X0 (Re chi cos(omega_d t) + Im chi sin(omega_d t)),

so chi = (a + i b) / X0.

Evolution runs in the interaction picture of H. Each step is split into two
halves; the drive integrals over each half are exact (sinc phase factors) and
the two halves are combined with their leading commutator correction, whose
size is the local error estimate.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from modules import settings
from modules.covariance import QfiResult
from modules.errors import NumericalError, ResonanceError, StepSizeError, ValidationError
from modules.fdt_reconstruction import covariance_from_admittance, qfi_from_susceptibility, solve_probe_field
from modules.linear_response import AdmittanceSpectrum, SpectralLineSet, current_operator
from modules.monotone_functions import MonotoneFunction
from modules.spectral_core import ThermalState, as_hermitian, bohr_lines, thermal_state

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriveProtocol:
    perturbation: np.ndarray
    amplitude: float
    omega: float
    ramp_time: float
    window: Tuple[float, float]
    dt: float
    label: str = "A"

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValidationError(f"drive amplitude must be >= 0, got {self.amplitude}")
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValidationError(f"drive frequency must be > 0, got {self.omega}")
        if self.ramp_time < 0:
            raise ValidationError(f"ramp time must be >= 0, got {self.ramp_time}")
        if not self.dt > 0:
            raise ValidationError(f"step size must be > 0, got {self.dt}")
        t0, t1 = self.window
        if t0 < self.ramp_time - 1e-12 * max(1.0, self.ramp_time):
            raise ValidationError(f"measurement window starts at {t0:g}, before the ramp ends at {self.ramp_time:g}")
        if t1 <= t0:
            raise ValidationError("measurement window is empty")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def with_amplitude(self, amplitude: float) -> "DriveProtocol":
        return DriveProtocol(self.perturbation, amplitude, self.omega, self.ramp_time, self.window, self.dt, self.label)

    def components(self, ramping: bool) -> List[Tuple[float, float]]:
        """X(t) = sum_c coef_c exp(i nu_c t) as (coef, nu) pairs."""
        x0, w = self.amplitude, self.omega
        if not ramping or self.ramp_time == 0:
            return [(x0 / 2, w), (x0 / 2, -w)]
        nu = np.pi / self.ramp_time
        return [
            (x0 / 4, w), (x0 / 4, -w),
            (-x0 / 8, w + nu), (-x0 / 8, -(w + nu)),
            (-x0 / 8, w - nu), (-x0 / 8, -(w - nu)),
        ]

    def drive(self, t: float) -> float:
        return float(np.real(sum(c * np.exp(1j * nu * t) for c, nu in self.components(t < self.ramp_time))))


def drive_protocol(
    state: ThermalState,
    a,
    amplitude: float,
    omega: float,
    ramp_periods: int = settings.RAMP_PERIODS,
    window_periods: int = settings.WINDOW_PERIODS,
    steps_per_period: Optional[int] = None,
    label: str = "A",
) -> DriveProtocol:
    """
    Protocol with the default ramp, window and step size for a thermal state.

    The step divides the drive period into at least 64 steps and resolves the
    fastest Bohr frequency with at least 32 steps per its period.
    """
    am = as_hermitian(a, label)
    if not (omega > 0):
        raise ValidationError(f"drive frequency must be > 0, got {omega}")
    e = state.energies
    omega_max = float((e[-1] - e[0]) / state.hbar)
    if steps_per_period is None:
        steps_per_period = max(
            settings.STEPS_PER_PERIOD,
            int(math.ceil(settings.STEPS_PER_BOHR_PERIOD * omega_max / omega)),
        )
    period = 2 * np.pi / omega
    ramp = ramp_periods * period
    return DriveProtocol(
        perturbation=am,
        amplitude=amplitude,
        omega=omega,
        ramp_time=ramp,
        window=(ramp, ramp + window_periods * period),
        dt=period / steps_per_period,
        label=label,
    )


@dataclass(frozen=True)
class DrivenSeries:
    times: np.ndarray
    current: np.ndarray
    displacement: np.ndarray
    max_local_error: float = 0.0
    trace_error: float = 0.0
    spectrum_drift: float = 0.0


def _magnus_generator(
    comps: Sequence[Tuple[float, float]],
    omega_ab: np.ndarray,
    a_eig: np.ndarray,
    h: float,
    hbar: float,
) -> List[Tuple[np.ndarray, float]]:
    """Per component, coef * h * sinc((nu + omega_ab) h / 2 pi) * A, paired with nu."""
    out = []
    for coef, nu in comps:
        out.append((coef * h * np.sinc((nu + omega_ab) * h / (2 * np.pi)) * a_eig * (1j / hbar), nu))
    return out


def _omega_over(parts, phases: np.ndarray, t_mid: float) -> np.ndarray:
    total = np.zeros_like(phases)
    for mat, nu in parts:
        total = total + mat * np.exp(1j * nu * t_mid)
    return total * phases


def evolve_driven(
    state: ThermalState,
    protocol: DriveProtocol,
    observe=None,
    rho0: Optional[np.ndarray] = None,
    local_error_tol: float = settings.LOCAL_ERROR_TOL,
) -> DrivenSeries:
    """
    Evolve rho under H - X(t) A and record <J_mu(t)> and <A_mu(t)> - <A_mu> over the window.

    Args:
        state: thermal state carrying H (the initial state unless rho0 is given)
        protocol: drive protocol
        observe: A_mu (defaults to the driven operator); J_mu is its current
        rho0: initial density matrix in the original basis

    Returns:
        DrivenSeries sampled at the step grid inside the window
    """
    if not isinstance(state, ThermalState):
        raise ValidationError("evolve_driven needs a thermal state")
    sd = state.decomposition
    hbar = state.hbar
    a_mu = protocol.perturbation if observe is None else as_hermitian(observe, "A_mu")
    if protocol.perturbation.shape[0] != state.dim or a_mu.shape[0] != state.dim:
        raise ValidationError("drive and observed operators must match the state dimension")

    a_eig = sd.to_eigenbasis(protocol.perturbation)
    x_eig = sd.to_eigenbasis(a_mu)
    j_eig = sd.to_eigenbasis(current_operator(state.hamiltonian, a_mu, hbar))
    e = state.energies
    omega_ab = (e[:, None] - e[None, :]) / hbar

    rho = np.diag(state.populations).astype(complex) if rho0 is None else sd.to_eigenbasis(np.asarray(rho0))
    initial_spectrum = np.sort(np.linalg.eigvalsh(rho))
    x_mean = float(np.real(np.sum(rho * x_eig.T)))

    h = protocol.dt
    half = h / 2
    ramp_steps = int(round(protocol.ramp_time / h))
    t0, t1 = protocol.window
    n_steps = int(math.ceil(t1 / h - 1e-9))
    parts = {
        True: _magnus_generator(protocol.components(True), omega_ab, a_eig, half, hbar),
        False: _magnus_generator(protocol.components(False), omega_ab, a_eig, half, hbar),
    }

    times, currents, shifts = [], [], []
    worst = 0.0
    for step in range(n_steps):
        t = step * h
        if t >= t0 - 1e-9 * h:
            phase = np.exp(-1j * omega_ab * t)
            currents.append(float(np.real(np.sum(rho * j_eig.T * phase))))
            shifts.append(float(np.real(np.sum(rho * x_eig.T * phase))) - x_mean)
            times.append(t)
        gen = parts[step < ramp_steps]
        t_a = t + half / 2
        t_b = t + 3 * half / 2
        om_a = _omega_over(gen, np.exp(1j * omega_ab * t_a), t_a)
        om_b = _omega_over(gen, np.exp(1j * omega_ab * t_b), t_b)
        correction = 0.5 * (om_b @ om_a - om_a @ om_b)
        err = float(np.max(np.abs(correction)))
        worst = max(worst, err)
        if err > local_error_tol:
            suggested = 0.8 * h * (local_error_tol / err) ** (1.0 / 3.0)
            raise StepSizeError(
                f"local error estimate {err:.3e} exceeds {local_error_tol:.0e} at t={t:.6g}; "
                f"reduce dt to about {suggested:.3e}",
                suggested_dt=suggested,
            )
        u = expm(om_a + om_b + correction)
        rho = u @ rho @ u.conj().T

    trace_error = float(abs(np.trace(rho) - 1.0))
    herm_error = float(np.max(np.abs(rho - rho.conj().T)))
    drift = float(np.max(np.abs(np.sort(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) - initial_spectrum)))
    if max(trace_error, herm_error, drift) > 1e-10:
        raise NumericalError(
            f"Failed to evolve: trace error {trace_error:.3e}, Hermiticity {herm_error:.3e}, "
            f"spectrum drift {drift:.3e}"
        )
    return DrivenSeries(
        times=np.array(times),
        current=np.array(currents),
        displacement=np.array(shifts),
        max_local_error=worst,
        trace_error=trace_error,
        spectrum_drift=drift,
    )


@dataclass(frozen=True)
class ExtractionResult:
    chi_hat: complex
    residual: float
    omega: float
    amplitude: float
    observable: str
    linearity: Optional[float] = None
    metadata: Dict[str, float] = field(default_factory=dict)


def _sinusoid_fit(times: np.ndarray, values: np.ndarray, omega: float) -> Tuple[float, float, float]:
    design = np.stack([np.cos(omega * times), np.sin(omega * times), np.ones_like(times)], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    misfit = values - design @ coeffs
    return float(coeffs[0]), float(coeffs[1]), float(np.sqrt(np.mean(misfit**2)))


def extract_admittance(
    series: DrivenSeries,
    protocol: DriveProtocol,
    observable: str = "current",
    growth_tol: float = 0.1,
) -> ExtractionResult:
    """
    Fit a cos + b sin (+ offset) over the window and return chi = (a + i b) / X0.

    Raises ResonanceError when the two window halves disagree in amplitude
    (secular growth of an undamped resonance).
    """
    if observable not in ("current", "displacement"):
        raise ValidationError(f"observable must be 'current' or 'displacement', got {observable!r}")
    t0, t1 = protocol.window
    if t0 < protocol.ramp_time:
        raise ValidationError("measurement window overlaps the ramp")
    if (t1 - t0) / protocol.period < 10 - 1e-9:
        raise ValidationError("measurement window must span at least 10 drive periods")
    if protocol.amplitude == 0:
        raise ValidationError("cannot extract a response at zero drive amplitude")

    times = np.asarray(series.times)
    values = np.asarray(series.current if observable == "current" else series.displacement)
    if times.size < 4:
        raise ValidationError("too few samples in the measurement window")
    a, b, rms = _sinusoid_fit(times, values, protocol.omega)
    amplitude = math.hypot(a, b)

    mid = times.size // 2
    a1, b1, _ = _sinusoid_fit(times[:mid], values[:mid], protocol.omega)
    a2, b2, _ = _sinusoid_fit(times[mid:], values[mid:], protocol.omega)
    amp1, amp2 = math.hypot(a1, b1), math.hypot(a2, b2)
    if max(amp1, amp2) > 0 and abs(amp2 - amp1) > growth_tol * max(amp1, amp2):
        raise ResonanceError("drive on resonance of closed system; detune or reduce window")

    residual = rms / amplitude if amplitude > 0 else rms
    return ExtractionResult(
        chi_hat=complex(a, b) / protocol.amplitude,
        residual=residual,
        omega=protocol.omega,
        amplitude=protocol.amplitude,
        observable=observable,
        metadata={"max_local_error": series.max_local_error, "spectrum_drift": series.spectrum_drift},
    )


def linearity_certificate(
    state: ThermalState,
    protocol: DriveProtocol,
    observe=None,
    observable: str = "current",
) -> float:
    """Relative change of the extracted chi when the amplitude is halved."""
    full = extract_admittance(evolve_driven(state, protocol, observe), protocol, observable)
    halved = protocol.with_amplitude(protocol.amplitude / 2)
    small = extract_admittance(evolve_driven(state, halved, observe), halved, observable)
    scale = max(abs(full.chi_hat), 1e-300)
    return float(abs(full.chi_hat - small.chi_hat) / scale)


def _measure_one(state, a_drive, observe, omega, amplitude, observable, certify, label):
    protocol = drive_protocol(state, a_drive, amplitude, omega, label=label)
    result = extract_admittance(evolve_driven(state, protocol, observe), protocol, observable)
    if certify:
        lin = linearity_certificate(state, protocol, observe, observable)
        if lin >= settings.LINEARITY_TOL:
            logger.warning("drive at omega=%g is not in the linear regime (%.3e)", omega, lin)
        result = ExtractionResult(
            result.chi_hat, result.residual, result.omega, result.amplitude,
            result.observable, lin, result.metadata,
        )
    return result


def measure_spectrum(
    state: ThermalState,
    a_drive,
    omegas: Sequence[float],
    amplitude: float,
    observe=None,
    observable: str = "current",
    certify: bool = False,
    label: str = "A",
) -> Tuple[AdmittanceSpectrum, List[ExtractionResult]]:
    """
    Drive at every grid frequency (independent runs on a thread pool capped by
    QFI_THREADS) and collect the extracted response into a spectrum.
    """
    grid = np.asarray(omegas, dtype=float)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValidationError("drive frequencies must be strictly ascending with at least two points")
    with ThreadPoolExecutor(max_workers=min(settings.thread_cap(), grid.size)) as pool:
        results = list(
            pool.map(
                lambda w: _measure_one(state, a_drive, observe, w, amplitude, observable, certify, label),
                grid,
            )
        )
    spectrum = AdmittanceSpectrum(
        grid,
        np.array([r.chi_hat for r in results]),
        eta=0.0,
        provenance="simulated",
        kind="response" if observable == "current" else "displacement-response",
        extras={"beta": state.beta, "hbar": state.hbar},
    )
    return spectrum, results


def coupled_lines(state: ThermalState, a, rel_tol: float = 1e-12) -> np.ndarray:
    """Positive Bohr frequencies of the transitions A connects."""
    a_eig = np.abs(state.decomposition.to_eigenbasis(as_hermitian(a, "A")))
    scale = float(a_eig.max()) if a_eig.size else 0.0
    if scale == 0:
        return np.array([])
    out = []
    for line in bohr_lines(state.decomposition, hbar=state.hbar):
        if line.omega <= 0:
            continue
        if np.max(a_eig[line.pairs[:, 0], line.pairs[:, 1]]) > rel_tol * scale:
            out.append(line.omega)
    return np.array(out)


def fit_line_weights(
    spectrum: AdmittanceSpectrum,
    line_omegas: Sequence[float],
    kind: str,
    beta: float,
    hbar: float = 1.0,
) -> Tuple[SpectralLineSet, float]:
    """
    Recover self-response line weights from off-resonant measurements at known
    positive Bohr frequencies.

    Off resonance a closed system shows only the reactive part,
        current:       chi(w)  = -i sum_k r_k w / (pi (w_k^2 - w^2)),   weights r_k at +-w_k
        displacement:  chit(w) =    sum_k r_k w_k / (pi (w_k^2 - w^2)), weights +-i r_k at +-w_k
    and the real amplitudes r_k follow by linear least squares.

    Returns:
        (line set with both signs of every frequency, relative fit residual)
    """
    w_k = np.asarray(line_omegas, dtype=float)
    if kind not in ("current", "displacement"):
        raise ValidationError(f"kind must be 'current' or 'displacement', got {kind!r}")
    out_kind = "response" if kind == "current" else "displacement-response"
    if w_k.size == 0:
        return SpectralLineSet([], [], out_kind, beta, hbar), 0.0
    if np.any(w_k <= 0):
        raise ValidationError("line frequencies must be positive")
    grid = spectrum.grid
    if grid.size < w_k.size:
        raise ValidationError(f"{grid.size} drive frequencies cannot determine {w_k.size} line weights")

    denom = np.pi * (w_k[None, :] ** 2 - grid[:, None] ** 2)
    if kind == "current":
        model = -1j * grid[:, None] / denom
    else:
        model = (w_k[None, :] / denom).astype(complex)
    design = np.concatenate([model.real, model.imag], axis=0)
    target = np.concatenate([spectrum.values.real, spectrum.values.imag])
    r, *_ = np.linalg.lstsq(design, target, rcond=None)
    misfit = float(np.linalg.norm(design @ r - target) / max(np.linalg.norm(target), 1e-300))

    omegas = np.concatenate([-w_k, w_k])
    if kind == "current":
        weights = np.concatenate([r, r]).astype(complex)
    else:
        weights = np.concatenate([-1j * r, 1j * r])
    return SpectralLineSet(omegas, weights, out_kind, beta, hbar, ("fit",)), misfit


def _check_detuning(omegas: np.ndarray, lines: np.ndarray) -> None:
    for w in omegas:
        for w_k in lines:
            if abs(w - w_k) < settings.MIN_DETUNING * w_k:
                raise ValidationError(
                    f"drive frequency {w:g} lies within relative detuning "
                    f"{settings.MIN_DETUNING:g} of the Bohr line {w_k:g}"
                )


def measure_and_reconstruct(
    h,
    beta: float,
    f: MonotoneFunction,
    b,
    omegas: Sequence[float],
    path: str = "susceptibility",
    hbar: float = 1.0,
    amplitude: Optional[float] = None,
    certify: bool = False,
) -> QfiResult:
    """
    Full virtual-measurement pipeline for the QFI of the unitary model generated by B.

    path="susceptibility": drive with B, read the displacement of B, use the
        susceptibility form of the QFI.
    path="admittance": drive with the probe field of B, read its current, use the
        current-covariance form.
    """
    if path not in ("susceptibility", "admittance"):
        raise ValidationError(f"path must be 'susceptibility' or 'admittance', got {path!r}")
    state = thermal_state(h, beta, hbar=hbar)
    bm = as_hermitian(b, "B")
    drive = bm if path == "susceptibility" else solve_probe_field(state, f, bm)
    grid = np.asarray(omegas, dtype=float)
    lines = coupled_lines(state, drive)
    _check_detuning(grid, lines)

    diagnostics: Dict[str, float] = {"drive_frequencies": float(grid.size), "fitted_lines": float(lines.size)}
    if lines.size == 0:
        value = 0.0
    else:
        if amplitude is None:
            spread = float(state.energies[-1] - state.energies[0])
            amplitude = 1e-3 * spread / float(np.max(np.abs(drive)))
        observable = "displacement" if path == "susceptibility" else "current"
        spectrum, runs = measure_spectrum(
            state, drive, grid, amplitude, observe=drive, observable=observable, certify=certify, label="drive"
        )
        kind = "displacement" if path == "susceptibility" else "current"
        fitted, misfit = fit_line_weights(spectrum, lines, kind, state.beta, state.hbar)
        if path == "susceptibility":
            value = qfi_from_susceptibility(fitted, f, state.beta, state.hbar).real
        else:
            value = covariance_from_admittance(fitted, None, f, state.beta, state.hbar).real
        diagnostics.update(
            {
                "amplitude": amplitude,
                "fit_misfit": misfit,
                "max_extraction_residual": max(r.residual for r in runs),
            }
        )
        if certify:
            diagnostics["max_linearity"] = max(r.linearity or 0.0 for r in runs)

    return QfiResult(
        matrix=np.array([[value]], dtype=complex),
        f_name=f.name,
        model="unitary",
        method="reconstructed",
        is_standard=f.is_standard,
        diagnostics=diagnostics,
    )
