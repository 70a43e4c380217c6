import math

import numpy as np
import pytest

from modules.errors import TruncationError, ValidationError
from modules.oscillator import OscillatorSpec, bulk_mask, default_levels
from modules.skew_information import oscillator_oracle, skew_factor, variance, yanagi_check
from modules.spectral_core import commutator


def test_default_levels_meet_adequacy():
    for beta in (0.5, 1.0, 3.0):
        n = default_levels(beta, 1.0)
        assert math.exp(-beta * (n - 1)) <= 1e-14
        assert math.exp(-beta * n) <= 1e-16


def test_truncation_error_suggests_levels():
    spec = OscillatorSpec(beta=1.0, levels=5)
    with pytest.raises(TruncationError) as err:
        spec.thermal()
    assert err.value.suggested_levels == default_levels(1.0, 1.0)
    assert str(err.value.suggested_levels) in str(err.value)
    # opt-out builds the state anyway
    assert spec.thermal(check=False).dim == 5


def test_invalid_parameters():
    with pytest.raises(ValidationError, match="mass"):
        OscillatorSpec(mass=0.0)
    with pytest.raises(ValidationError, match="levels"):
        OscillatorSpec(levels=1)


def test_canonical_commutator_in_bulk():
    spec = OscillatorSpec(mass=2.0, omega=0.7, hbar=1.5, levels=12)
    c = commutator(spec.position().matrix, spec.momentum().matrix)
    mask = bulk_mask(spec.levels)
    np.testing.assert_allclose(c[mask], (1j * 1.5 * np.eye(12))[mask], atol=1e-13)
    # the top level breaks it
    assert abs(c[-1, -1] - 1j * 1.5) > 1.0


def test_oracle_reference_value():
    oracle = oscillator_oracle(OscillatorSpec(mass=1.0, omega=1.0, beta=1.0), 0.5)
    assert oracle.i_x == pytest.approx(0.12246, abs=1e-5)
    assert oracle.i_p == pytest.approx(oracle.i_x, rel=1e-14)
    assert oracle.lhs == pytest.approx(oracle.rhs, rel=1e-12)


@pytest.mark.parametrize("alpha", (0.1, 0.25, 0.5, 0.7))
@pytest.mark.parametrize("beta", (0.5, 1.0, 2.0))
def test_closed_form_against_fock_space(alpha, beta):
    spec = OscillatorSpec(mass=1.3, omega=0.9, beta=beta)
    oracle = oscillator_oracle(spec, alpha, numeric=True)
    assert oracle.numeric_i_x == pytest.approx(oracle.i_x, rel=1e-6)
    assert oracle.numeric_i_p == pytest.approx(oracle.i_p, rel=1e-6)
    state = spec.thermal()
    assert variance(state, spec.position()) == pytest.approx(oracle.variance_x, rel=1e-6)


def test_yanagi_equality_at_half():
    spec = OscillatorSpec(beta=1.0)
    state = spec.thermal()
    report = yanagi_check(state, 0.5, spec.position(), spec.momentum())
    assert abs(report.gap) <= 1e-8
    assert report.rhs == pytest.approx(0.25, rel=1e-10)


@pytest.mark.parametrize("alpha", (0.2, 0.3, 0.4))
def test_yanagi_gap_matches_closed_form(alpha):
    spec = OscillatorSpec(beta=1.0)
    oracle = oscillator_oracle(spec, alpha)
    assert oracle.gap > 0
    report = yanagi_check(spec.thermal(), alpha, spec.position(), spec.momentum())
    assert report.satisfied
    assert report.gap == pytest.approx(oracle.gap, abs=1e-8)


def test_skew_factor_classical_limit():
    # small beta hbar omega: factor ~ alpha (1 - alpha) a
    a = 1e-6
    assert skew_factor(0.3, a) == pytest.approx(0.21 * a, rel=1e-5)
