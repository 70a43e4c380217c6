import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.linalg import expm
from scipy.signal import hilbert

from modules.covariance import generalized_covariance
from modules.ensembles import random_density_matrix, random_hermitian, random_thermal_state
from modules.errors import ValidationError
from modules.linear_response import (
    AdmittanceSpectrum,
    SpectralLineSet,
    admittance,
    covariance_lines,
    current_operator,
    default_grid,
    dynamical_part,
    dynamical_susceptibility,
    kubo_canonical_form,
    response_function_time,
    response_lines,
)
from modules.monotone_functions import CATALOG, SLD, WY
from modules.oscillator import OscillatorSpec
from modules.spectral_core import thermal_state

TIMES = np.linspace(0.0, 7.0, 15)


@pytest.fixture
def system():
    rng = np.random.default_rng(21)
    state = random_thermal_state(5, beta=0.8, seed=rng)
    a_mu = random_hermitian(5, rng).matrix
    a_nu = random_hermitian(5, rng).matrix
    h = state.hamiltonian.matrix
    return state, a_mu, a_nu, current_operator(h, a_mu), current_operator(h, a_nu)


def test_response_function_against_heisenberg_picture(system):
    state, a_mu, a_nu, _, _ = system
    h = state.hamiltonian.matrix
    rho = state.density.matrix
    expected = []
    for t in TIMES:
        u = expm(-1j * h * t)
        x_t = u.conj().T @ a_mu @ u
        expected.append(np.trace(rho @ (a_nu @ x_t - x_t @ a_nu)) / 1j)
    np.testing.assert_allclose(response_function_time(state, a_nu, a_mu, TIMES), expected, atol=1e-10)


def test_kubo_and_canonical_forms_agree(system):
    state, _, a_nu, j_mu, j_nu = system
    kubo = response_function_time(state, a_nu, j_mu, TIMES)
    canonical = kubo_canonical_form(state, j_mu, j_nu, TIMES)
    np.testing.assert_allclose(kubo, canonical, atol=1e-10)


def test_response_is_real_for_hermitian_operators(system):
    state, a_mu, a_nu, _, _ = system
    assert np.max(np.abs(response_function_time(state, a_nu, a_mu, TIMES).imag)) < 1e-12


def test_line_sets_reproduce_time_functions(system):
    state, a_mu, a_nu, j_mu, j_nu = system
    current = response_lines(state, j_mu, j_nu, kind="current")
    np.testing.assert_allclose(current.time_series(TIMES), kubo_canonical_form(state, j_mu, j_nu, TIMES), atol=1e-10)
    displacement = response_lines(state, a_mu, a_nu, kind="displacement")
    np.testing.assert_allclose(
        displacement.time_series(TIMES), response_function_time(state, a_nu, a_mu, TIMES), atol=1e-10
    )


@pytest.mark.parametrize("f", list(CATALOG.values()), ids=lambda f: f.name)
def test_covariance_sum_rules(system, f):
    state, a_mu, a_nu, j_mu, j_nu = system
    lines = covariance_lines(state, f, j_mu, j_nu, kind="current")
    assert lines.sum_rule() == pytest.approx(generalized_covariance(state, f, j_mu, j_nu, centered=False), abs=1e-10)
    lines = covariance_lines(state, f, a_mu, a_nu, kind="displacement")
    assert lines.sum_rule() == pytest.approx(generalized_covariance(state, f, a_mu, a_nu), abs=1e-10)


def test_response_sum_rules(system):
    state, a_mu, _, j_mu, _ = system
    current = response_lines(state, j_mu, j_mu, kind="current")
    assert current.sum_rule() == pytest.approx(kubo_canonical_form(state, j_mu, j_mu, 0.0), abs=1e-12)
    # equal-time commutator of A with itself
    assert abs(response_lines(state, a_mu, a_mu, kind="displacement").sum_rule()) < 1e-12


def test_self_response_symmetry(system):
    state, a_mu, _, j_mu, _ = system
    current = response_lines(state, j_mu, j_mu, kind="current")
    np.testing.assert_allclose(current.omegas, -current.omegas[::-1], atol=1e-12)
    np.testing.assert_allclose(current.weights.imag, 0.0, atol=1e-12)
    np.testing.assert_allclose(current.weights, current.weights[::-1], atol=1e-12)
    assert np.all(current.weights.real >= -1e-12)

    displacement = response_lines(state, a_mu, a_mu, kind="displacement")
    np.testing.assert_allclose(displacement.weights.real, 0.0, atol=1e-12)
    np.testing.assert_allclose(displacement.weights, -displacement.weights[::-1], atol=1e-12)


def test_qubit_admittance_peak():
    state = thermal_state(np.diag([0.0, 1.0]), beta=1.0)
    a = np.array([[0, 1], [1, 0]], dtype=complex)
    j = current_operator(state.hamiltonian, a)
    lines = response_lines(state, j, j, kind="current").significant()
    chi = admittance(lines, eta=0.05, grid=[0.5, 1.0, 1.5])
    w_plus = lines.weights[lines.omegas > 0][0]
    w_minus = lines.weights[lines.omegas < 0][0]
    expected = w_plus / (2 * np.pi * 0.05) + (w_minus / (2 * np.pi)) / (0.05 - 2j)
    assert chi.values[1] == pytest.approx(expected, rel=1e-12)
    assert chi.kind == "response"
    assert chi.extras["beta"] == 1.0


def test_spectrum_kind_checks(system):
    state, a_mu, _, j_mu, _ = system
    current = response_lines(state, j_mu, j_mu, kind="current")
    displacement = response_lines(state, a_mu, a_mu, kind="displacement")
    with pytest.raises(ValidationError, match="current response"):
        admittance(displacement, eta=0.1)
    with pytest.raises(ValidationError, match="displacement response"):
        dynamical_susceptibility(current, eta=0.1)
    with pytest.raises(ValidationError, match="eta"):
        admittance(current, eta=0.0)
    with pytest.raises(ValidationError, match="kind"):
        response_lines(state, a_mu, a_mu, kind="heat")


def test_default_grid(system):
    state, _, _, j_mu, _ = system
    lines = response_lines(state, j_mu, j_mu, kind="current")
    grid = default_grid(lines, eta=0.01)
    assert len(grid) % 2 == 0
    assert not np.any(grid == 0.0)
    np.testing.assert_allclose(grid, -grid[::-1], atol=1e-12)
    assert np.max(np.diff(grid)) <= 0.01 / 4 + 1e-15
    assert grid[-1] == pytest.approx(1.5 * lines.max_frequency())


def test_line_set_validation():
    with pytest.raises(ValidationError, match="unknown line kind"):
        SpectralLineSet([0.0], [1.0], kind="noise", beta=1.0)
    with pytest.raises(ValidationError, match="differ in length"):
        SpectralLineSet([0.0, 1.0], [1.0], kind="response", beta=1.0)
    lines = SpectralLineSet([2.0, -1.0], [1.0, 3.0], kind="response", beta=1.0)
    assert list(lines.omegas) == [-1.0, 2.0]
    assert list(lines.weights) == [3.0, 1.0]


def test_spectrum_validation():
    with pytest.raises(ValidationError, match="index 2"):
        AdmittanceSpectrum([0.0, 1.0, 1.0], [0, 0, 0])
    with pytest.raises(ValidationError, match="eta"):
        AdmittanceSpectrum([0.0, 1.0], [0, 0], eta=-1.0)


def test_density_matrix_needs_hamiltonian():
    rho = random_density_matrix(3, seed=4)
    with pytest.raises(ValidationError, match="effective_hamiltonian"):
        response_lines(rho, np.eye(3), np.eye(3))


def test_dynamical_part_drops_diagonal():
    state = thermal_state(np.diag([0.0, 1.0, 1.0, 2.5]), beta=1.0)
    a = random_hermitian(4, seed=5).matrix
    to_eig = state.decomposition.to_eigenbasis
    d = to_eig(dynamical_part(state, a))
    assert np.allclose(np.diag(d), 0.0)
    assert abs(d[1, 2]) < 1e-14
    assert d[0, 1] == pytest.approx(to_eig(a)[0, 1])


def test_covariance_lines_wy_example():
    state = thermal_state(np.diag([0.0, 1.0]), beta=1.0)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    total = covariance_lines(state, WY, sx, sx, kind="displacement").sum_rule()
    assert total.real == pytest.approx(generalized_covariance(state, WY, sx, sx).real, rel=1e-12)
    assert covariance_lines(state, SLD, sx, sx, kind="displacement").sum_rule().real == pytest.approx(1.0, rel=1e-12)


KK_GRID = np.linspace(-40.0, 40.0, 16001)


def test_admittance_obeys_kramers_kronig(system):
    state, _, _, j_mu, _ = system
    chi = admittance(response_lines(state, j_mu, j_mu, kind="current"), eta=0.05, grid=KK_GRID)
    central = np.abs(KK_GRID) <= 10.0
    im_from_re = np.imag(hilbert(chi.values.real))
    scale = np.abs(chi.values.imag[central]).max()
    assert np.abs(im_from_re - chi.values.imag)[central].max() <= 1e-2 * scale


def test_susceptibility_obeys_kramers_kronig(system):
    state, a_mu, _, _, _ = system
    chi = dynamical_susceptibility(response_lines(state, a_mu, a_mu, kind="displacement"), eta=0.05, grid=KK_GRID)
    central = np.abs(KK_GRID) <= 10.0
    re, im = chi.values.real, chi.values.imag
    scale = np.abs(chi.values[central]).max()
    assert np.abs(np.imag(hilbert(re)) - im)[central].max() <= 1e-2 * scale
    assert np.abs(-np.imag(hilbert(im)) - re)[central].max() <= 1e-2 * scale


@pytest.mark.parametrize("kind", ["current", "displacement"])
def test_self_spectra_parity(system, kind):
    state, a_mu, _, j_mu, _ = system
    x = j_mu if kind == "current" else a_mu
    lines = response_lines(state, x, x, kind=kind)
    build = admittance if kind == "current" else dynamical_susceptibility
    chi = build(lines, eta=0.1)
    np.testing.assert_allclose(chi.grid, -chi.grid[::-1], atol=1e-12)
    v = chi.values
    tol = 1e-10 * np.abs(v).max()
    np.testing.assert_allclose(v.real, v.real[::-1], atol=tol)
    np.testing.assert_allclose(v.imag, -v.imag[::-1], atol=tol)


def test_oscillator_susceptibility_delta_and_principal_value():
    spec = OscillatorSpec(mass=1.0, omega=1.0, beta=1.0)
    x = spec.position().matrix
    lines = response_lines(spec.thermal(), x, x, kind="displacement").significant()
    np.testing.assert_allclose(lines.omegas, [-1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(lines.weights, [-1j * np.pi, 1j * np.pi], rtol=1e-12)

    off = np.array([0.3, 0.5, 2.0])
    principal = 1.0 / (1.0 - off**2)
    window = np.linspace(0.5, 1.5, 20001)
    errors = []
    for eta in (1e-2, 1e-3):
        re = dynamical_susceptibility(lines, eta=eta, grid=off).values.real
        mass = trapezoid(dynamical_susceptibility(lines, eta=eta, grid=window).values.imag, window)
        errors.append((np.max(np.abs(re / principal - 1.0)), abs(mass / (np.pi / 2) - 1.0)))
    assert errors[1][0] < errors[0][0] and errors[1][0] <= 1e-5
    assert errors[1][1] < errors[0][1] and errors[1][1] <= 5e-3
