import numpy as np
import pytest

from modules.covariance import qfi_unitary_model
from modules.driven_simulator import (
    DriveProtocol,
    DrivenSeries,
    coupled_lines,
    drive_protocol,
    evolve_driven,
    extract_admittance,
    fit_line_weights,
    linearity_certificate,
    measure_and_reconstruct,
    measure_spectrum,
)
from modules.errors import ResonanceError, StepSizeError, ValidationError
from modules.linear_response import AdmittanceSpectrum, current_operator, response_lines
from modules.monotone_functions import SLD, WY
from modules.spectral_core import thermal_state

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


@pytest.fixture
def qubit():
    return thermal_state(np.diag([0.0, 1.0]), beta=1.0)


def _closed_admittance(state, a, omega):
    """Spectral admittance of the current of A at zero broadening."""
    j = current_operator(state.hamiltonian, a)
    lines = response_lines(state, j, j, kind="current").significant()
    return complex(np.sum((lines.weights / (2 * np.pi)) / (1j * (lines.omegas - omega))))


def test_synthetic_sinusoid_is_recovered_exactly():
    omega, x0, chi = 2.0, 0.01, 0.3 - 0.7j
    period = 2 * np.pi / omega
    protocol = DriveProtocol(SIGMA_X, x0, omega, 0.0, (0.0, 10 * period), period / 64)
    t = np.arange(0.0, 10 * period, protocol.dt)
    values = x0 * (chi.real * np.cos(omega * t) + chi.imag * np.sin(omega * t)) + 0.25
    series = DrivenSeries(times=t, current=values, displacement=np.zeros_like(t))
    result = extract_admittance(series, protocol)
    assert result.chi_hat == pytest.approx(chi, abs=1e-12)
    assert result.residual < 1e-10


def test_zero_amplitude_gives_no_response(qubit):
    protocol = drive_protocol(qubit, SIGMA_X, 0.0, 0.5, ramp_periods=2, window_periods=10)
    series = evolve_driven(qubit, protocol)
    assert np.max(np.abs(series.current)) < 1e-14
    assert np.max(np.abs(series.displacement)) < 1e-14
    with pytest.raises(ValidationError, match="zero drive amplitude"):
        extract_admittance(series, protocol)


def test_protocol_defaults(qubit):
    protocol = drive_protocol(qubit, SIGMA_X, 1e-3, 0.25)
    assert protocol.ramp_time == pytest.approx(20 * protocol.period)
    assert protocol.window[1] - protocol.window[0] == pytest.approx(20 * protocol.period)
    # the Bohr period (2 pi) needs 32 steps: 128 per drive period
    assert protocol.dt == pytest.approx(protocol.period / 128)
    assert protocol.drive(0.0) == pytest.approx(0.0, abs=1e-15)
    t = protocol.ramp_time + 0.3
    assert protocol.drive(t) == pytest.approx(1e-3 * np.cos(0.25 * t), rel=1e-12)


def test_protocol_validation():
    with pytest.raises(ValidationError, match="before the ramp ends"):
        DriveProtocol(SIGMA_X, 1e-3, 1.0, 10.0, (5.0, 100.0), 0.1)
    with pytest.raises(ValidationError, match="frequency"):
        DriveProtocol(SIGMA_X, 1e-3, 0.0, 0.0, (0.0, 1.0), 0.1)
    protocol = DriveProtocol(SIGMA_X, 1e-3, 1.0, 0.0, (0.0, 5 * 2 * np.pi), 0.1)
    series = DrivenSeries(times=np.linspace(0, 30, 300), current=np.zeros(300), displacement=np.zeros(300))
    with pytest.raises(ValidationError, match="10 drive periods"):
        extract_admittance(series, protocol)


def test_off_resonant_qubit_admittance(qubit):
    omega = 0.5
    protocol = drive_protocol(qubit, SIGMA_X, 1e-3, omega)
    series = evolve_driven(qubit, protocol)
    assert series.max_local_error <= 1e-8
    assert series.spectrum_drift <= 1e-10
    result = extract_admittance(series, protocol)
    expected = _closed_admittance(qubit, SIGMA_X, omega)
    assert abs(result.chi_hat - expected) <= 1e-2 * abs(expected)


def test_linear_regime_certificate(qubit):
    protocol = drive_protocol(qubit, SIGMA_X, 1e-3, 0.5, ramp_periods=10, window_periods=10)
    assert linearity_certificate(qubit, protocol) < 5e-3


def test_resonant_drive_is_detected(qubit):
    protocol = drive_protocol(qubit, SIGMA_X, 1e-3, 1.0)
    series = evolve_driven(qubit, protocol)
    with pytest.raises(ResonanceError, match="resonance"):
        extract_admittance(series, protocol)


def test_step_size_error_suggests_smaller_step(qubit):
    protocol = drive_protocol(qubit, SIGMA_X, 0.5, 0.5, ramp_periods=2, window_periods=10)
    with pytest.raises(StepSizeError) as err:
        evolve_driven(qubit, protocol)
    assert 0 < err.value.suggested_dt < protocol.dt


def test_coupled_lines():
    state = thermal_state(np.diag([0.0, 1.0, 3.0]), beta=1.0)
    a = np.zeros((3, 3), dtype=complex)
    a[0, 1] = a[1, 0] = 1.0
    np.testing.assert_allclose(coupled_lines(state, a), [1.0])
    assert coupled_lines(state, np.diag([1.0, 2.0, 3.0])).size == 0


@pytest.mark.parametrize("kind", ["current", "displacement"])
def test_fit_line_weights_on_model_data(kind):
    w_k = np.array([1.0, 2.5])
    r = np.array([0.3, 1.2])
    grid = np.array([0.2, 0.5, 0.8, 1.5, 3.0])
    denom = np.pi * (w_k[None, :] ** 2 - grid[:, None] ** 2)
    if kind == "current":
        values = (-1j * grid[:, None] / denom) @ r
    else:
        values = (w_k[None, :] / denom) @ r
    spectrum = AdmittanceSpectrum(grid, values, provenance="simulated")
    lines, misfit = fit_line_weights(spectrum, w_k, kind, beta=1.0)
    assert misfit < 1e-12
    positive = lines.weights[lines.omegas > 0]
    if kind == "current":
        np.testing.assert_allclose(positive, r, rtol=1e-10)
    else:
        np.testing.assert_allclose(positive, 1j * r, rtol=1e-10)
    with pytest.raises(ValidationError, match="cannot determine"):
        fit_line_weights(AdmittanceSpectrum(grid[:2], values[:2]), np.array([1.0, 2.0, 3.0]), kind, 1.0)


def test_measure_spectrum_validates_grid(qubit):
    with pytest.raises(ValidationError, match="ascending"):
        measure_spectrum(qubit, SIGMA_X, [0.5, 0.3], 1e-3)


@pytest.mark.parametrize("path", ["susceptibility", "admittance"])
def test_measure_and_reconstruct_qubit(path):
    h = np.diag([0.0, 1.0])
    result = measure_and_reconstruct(h, 1.0, SLD, SIGMA_X, [0.3, 0.5, 0.7], path=path)
    direct = qfi_unitary_model(thermal_state(h, 1.0), SLD, SIGMA_X).value
    assert result.method == "reconstructed"
    assert result.diagnostics["fitted_lines"] == 1.0
    assert abs(result.value - direct) <= 2e-2 * direct


def test_commuting_generator_reconstructs_to_zero():
    result = measure_and_reconstruct(np.diag([0.0, 1.0]), 1.0, WY, SIGMA_Z, [0.3, 0.5])
    assert result.value == 0.0
    assert result.diagnostics["fitted_lines"] == 0.0


def test_drive_too_close_to_a_line():
    with pytest.raises(ValidationError, match="detuning"):
        measure_and_reconstruct(np.diag([0.0, 1.0]), 1.0, SLD, SIGMA_X, [0.5, 1.0])
    with pytest.raises(ValidationError, match="path"):
        measure_and_reconstruct(np.diag([0.0, 1.0]), 1.0, SLD, SIGMA_X, [0.5], path="other")
