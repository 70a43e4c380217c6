import math

import numpy as np
import pytest
from scipy.linalg import solve_sylvester

from modules.covariance import (
    SuperoperatorKf,
    apply_kf,
    dual_covariance_check,
    generalized_covariance,
    invert_kf,
    logarithmic_derivative,
    optimal_estimator,
    qfi_matrix,
    qfi_unitary_model,
    unitary_tangent,
)
from modules.ensembles import random_density_matrix, random_hermitian, random_thermal_state
from modules.errors import DivergenceError, NotIdentifiableError, PopulationFloorError, ValidationError
from modules.monotone_functions import BKM, CATALOG, GEOMETRIC, HARMONIC, RLD, SLD, WY, qfi_to_covariance_function, wyd
from modules.spectral_core import DensityMatrix

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
QUBIT = DensityMatrix(np.diag([0.7, 0.3]))


def _fractional_power(rho: DensityMatrix, s: float) -> np.ndarray:
    v, p = rho.eigenvectors, rho.populations
    return (v * p**s) @ v.conj().T


def test_kernel_limits():
    rho = random_density_matrix(3, seed=1)
    a = random_hermitian(3, seed=2).matrix
    k_right = SuperoperatorKf.from_state(rho, RLD)
    np.testing.assert_allclose(apply_kf(k_right, a), rho.matrix @ a, atol=1e-13)
    k_sld = SuperoperatorKf.from_state(rho, SLD)
    np.testing.assert_allclose(apply_kf(k_sld, a), 0.5 * (rho.matrix @ a + a @ rho.matrix), atol=1e-13)


def test_bkm_kernel_against_quadrature():
    rho = random_density_matrix(4, seed=3)
    a = random_hermitian(4, seed=4).matrix
    nodes, weights = np.polynomial.legendre.leggauss(64)
    lam = 0.5 * (nodes + 1)
    integral = sum(
        0.5 * w * _fractional_power(rho, s) @ a @ _fractional_power(rho, 1 - s) for s, w in zip(lam, weights)
    )
    k = SuperoperatorKf.from_state(rho, BKM)
    np.testing.assert_allclose(apply_kf(k, a), integral, atol=1e-12)


def test_invert_apply_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(100):
        dim = int(rng.integers(2, 9))
        rho = random_density_matrix(dim, rng)
        a = random_hermitian(dim, rng).matrix
        k = SuperoperatorKf.from_state(rho, CATALOG[rng.choice(list(CATALOG))])
        np.testing.assert_allclose(invert_kf(k, apply_kf(k, a)), a, atol=1e-9)


def test_population_floor():
    with pytest.raises(PopulationFloorError, match="p\\[0\\]"):
        SuperoperatorKf.from_state(np.diag([1e-14, 1 - 1e-14]), SLD)
    k = SuperoperatorKf.from_state(np.diag([1e-14, 1 - 1e-14]), SLD, population_floor=1e-16)
    assert k.condition_number > 1e10


def test_covariance_examples():
    wy = generalized_covariance(QUBIT, WY, SIGMA_X, SIGMA_X)
    assert wy.real == pytest.approx((1 + 2 * math.sqrt(0.21)) / 2, rel=1e-12)
    geo = generalized_covariance(QUBIT, GEOMETRIC, SIGMA_X, SIGMA_X)
    assert geo.real == pytest.approx(2 * math.sqrt(0.21), rel=1e-12)
    # sigma_z commutes with rho: every f gives the variance
    for f in CATALOG.values():
        assert generalized_covariance(QUBIT, f, SIGMA_Z, SIGMA_Z).real == pytest.approx(0.84, rel=1e-12)


def test_dimension_mismatch_names_operator():
    with pytest.raises(ValidationError, match="Y: dimension 3"):
        generalized_covariance(QUBIT, SLD, SIGMA_X, np.eye(3))


def test_dual_covariance():
    rng = np.random.default_rng(6)
    for _ in range(20):
        dim = int(rng.integers(2, 7))
        rho = random_density_matrix(dim, rng)
        x = random_hermitian(dim, rng)
        y = random_hermitian(dim, rng)
        for f in CATALOG.values():
            _, _, diff = dual_covariance_check(rho, f, x, y)
            assert diff < 1e-12


def test_qubit_sld_unitary_qfi():
    assert qfi_unitary_model(QUBIT, SLD, SIGMA_X).value == pytest.approx(0.64, rel=1e-12)


def test_qubit_wy_unitary_qfi():
    j = qfi_unitary_model(QUBIT, WY, SIGMA_X).value
    assert (0.25 / 2) * j == pytest.approx(1 - 2 * math.sqrt(0.21), rel=1e-12)


def test_unitary_qfi_reports_standardness_of_f():
    assert qfi_unitary_model(QUBIT, SLD, SIGMA_X).is_standard
    result = qfi_unitary_model(QUBIT, RLD, SIGMA_X)
    assert not result.is_standard
    assert result.value == pytest.approx(16 / 21, rel=1e-12)


def test_commuting_generator_gives_zero():
    for f in CATALOG.values():
        assert qfi_unitary_model(QUBIT, f, SIGMA_Z).value == pytest.approx(0.0, abs=1e-15)


def test_pure_state_limits():
    pure = DensityMatrix(np.diag([1.0, 0.0]))
    # SLD: four times the variance
    assert qfi_unitary_model(pure, SLD, SIGMA_X).value == pytest.approx(4.0)
    with pytest.raises(DivergenceError):
        qfi_unitary_model(pure, BKM, SIGMA_X)


def test_sld_has_the_smallest_unitary_qfi():
    # f_SLD is the largest standard f, so its weight (x-1)^2/f is the smallest
    x = np.linspace(1e-6, 1.0, 2001)
    assert np.all(SLD(x) >= WY(x))
    g_sld = qfi_to_covariance_function(SLD)(x)
    g_wy = qfi_to_covariance_function(WY)(x)
    assert np.all(g_sld <= g_wy)
    assert qfi_unitary_model(QUBIT, SLD, SIGMA_X).value < qfi_unitary_model(QUBIT, WY, SIGMA_X).value
    rng = np.random.default_rng(14)
    for _ in range(10):
        dim = int(rng.integers(2, 7))
        state = random_thermal_state(dim, beta=1.0, seed=rng)
        b = random_hermitian(dim, rng)
        j_sld = qfi_unitary_model(state, SLD, b).value
        for f in (WY, BKM, HARMONIC, GEOMETRIC, wyd(0.3)):
            assert j_sld <= qfi_unitary_model(state, f, b).value * (1 + 1e-12)


def _depolarize(rho: DensityMatrix, lam: float) -> DensityMatrix:
    d = rho.dim
    return DensityMatrix(lam * rho.matrix + (1 - lam) * np.eye(d) / d)


def test_qfi_shrinks_under_depolarizing_noise():
    rng = np.random.default_rng(15)
    lams = np.linspace(0.05, 1.0, 20)
    for _ in range(5):
        rho = random_density_matrix(3, seed=rng)
        b = random_hermitian(3, rng).matrix
        for f in (SLD, BKM, HARMONIC, WY, GEOMETRIC, wyd(0.3)):
            js = np.array([qfi_unitary_model(_depolarize(rho, lam), f, b).value for lam in lams])
            assert np.all(np.diff(js) >= -1e-10 * js.max())
            assert js[0] < js[-1]


def test_sld_against_sylvester():
    rng = np.random.default_rng(8)
    for dim in (2, 3, 5, 8):
        state = random_thermal_state(dim, beta=0.5, seed=rng)
        b = random_hermitian(dim, rng)
        rho = state.density.matrix
        drho = unitary_tangent(state, b)
        l_ref = solve_sylvester(rho, rho, 2 * drho)
        l = logarithmic_derivative(state, SLD, drho)
        np.testing.assert_allclose(l, l_ref, atol=1e-9)
        j_ref = np.trace(rho @ l_ref @ l_ref).real
        assert qfi_unitary_model(state, SLD, b).value == pytest.approx(j_ref, rel=1e-9)


def test_two_paths_agree():
    rng = np.random.default_rng(9)
    for _ in range(20):
        dim = int(rng.integers(2, 9))
        state = random_thermal_state(dim, beta=float(rng.choice([0.1, 1.0])), seed=rng)
        b = random_hermitian(dim, rng)
        drho = unitary_tangent(state, b)
        for f in list(CATALOG.values()) + [wyd(0.3)]:
            direct = qfi_matrix(state, f, [drho])
            unitary = qfi_unitary_model(state, f, b)
            assert direct.diagnostics["two_path_deviation"] <= 1e-10 * max(1.0, abs(unitary.value))
            assert abs(direct.matrix[0, 0] - unitary.value) <= 1e-10 * max(1.0, abs(unitary.value))


def test_multi_parameter_matrix_is_psd():
    state = random_thermal_state(4, beta=1.0, seed=10)
    drhos = [unitary_tangent(state, random_hermitian(4, seed=s)) for s in (11, 12, 13)]
    result = qfi_matrix(state, SLD, drhos)
    assert result.matrix.shape == (3, 3)
    np.testing.assert_allclose(result.matrix, result.matrix.conj().T, atol=1e-12)
    assert result.diagnostics["min_eigenvalue"] >= -1e-12
    with pytest.raises(ValidationError, match="single parameter"):
        result.value


def test_non_standard_matrix_is_hermitian():
    state = random_thermal_state(3, beta=1.0, seed=14)
    drhos = [unitary_tangent(state, random_hermitian(3, seed=s)) for s in (15, 16)]
    j = qfi_matrix(state, RLD, drhos).matrix
    np.testing.assert_allclose(j, j.conj().T, atol=1e-12)


def test_classical_family():
    p = np.array([0.5, 0.3, 0.2])
    dp = np.array([0.1, -0.04, -0.06])
    fisher = float(np.sum(dp**2 / p))
    for f in CATALOG.values():
        j = qfi_matrix(np.diag(p), f, [np.diag(dp)]).matrix[0, 0]
        assert j.real == pytest.approx(fisher, rel=1e-12)


def test_tangent_must_be_traceless():
    with pytest.raises(ValidationError, match="traceless"):
        qfi_matrix(QUBIT, SLD, [np.diag([0.1, 0.1])])


def test_cramer_rao_bound():
    rng = np.random.default_rng(17)
    state = random_thermal_state(4, beta=1.0, seed=rng)
    drho = unitary_tangent(state, random_hermitian(4, rng))
    for f in (SLD, BKM, WY):
        o, bound = optimal_estimator(state, f, drho)
        j = 1.0 / bound
        assert generalized_covariance(state, f, o, o).real * j == pytest.approx(1.0, abs=1e-10)
        l = logarithmic_derivative(state, f, drho)
        rho = state.density.matrix
        for _ in range(100):
            p = random_hermitian(4, rng).matrix
            p = p - np.trace(rho @ p).real * np.eye(4)
            p = p - (np.trace(drho @ p).real / j) * l
            p = 0.5 * (p + p.conj().T)
            assert abs(np.trace(drho @ (o + p)).real - 1.0) < 1e-9
            slack = generalized_covariance(state, f, o + p, o + p).real * j - 1.0
            assert slack >= -1e-10


def test_estimator_errors():
    with pytest.raises(ValidationError, match="not standard"):
        optimal_estimator(QUBIT, RLD, unitary_tangent(QUBIT, SIGMA_X))
    with pytest.raises(NotIdentifiableError):
        optimal_estimator(QUBIT, SLD, np.zeros((2, 2)))
