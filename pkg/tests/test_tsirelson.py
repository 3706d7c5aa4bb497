import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from povmcert.errors import IncompleteData
from povmcert.qubit import RankOnePOVM, RankOnePOVMElement, phi_theta, random_rank_one_povm
from povmcert.scenario import (
    CorrelationTable,
    NoiseModel,
    protocol_correlations,
    sequential_povm,
    square_povm,
    triangular_povm,
)
from povmcert.tsirelson import (
    BoundaryCoefficients,
    bell_value,
    collapsed_alice_state,
    derive_coefficients,
    factorization_residuals,
    ideal_saturation_residual,
    m_operator_expectations,
    m_operator_matrix,
    orthogonal_alice_state,
)

S3 = np.sqrt(3) / 2


def test_triangular_coefficients_half_pi():
    n = derive_coefficients(np.pi / 2, triangular_povm()).n
    assert np.allclose(n[0], [0, 0, 1], atol=1e-15)
    assert np.allclose(n[1], [S3, 0, -0.5], atol=1e-15)
    assert np.allclose(n[2], [-S3, 0, -0.5], atol=1e-15)


def test_equatorial_y_element():
    povm = RankOnePOVM((RankOnePOVMElement(1.0, np.pi / 2, np.pi / 2), RankOnePOVMElement(1.0, np.pi / 2, 3 * np.pi / 2)))
    n = derive_coefficients(np.pi / 2, povm).n
    assert np.allclose(n[0], [0, -1, 0], atol=1e-15)
    flipped = derive_coefficients(np.pi / 2, povm, sigma2_branch=-1).n
    assert np.allclose(flipped[0], [0, 1, 0], atol=1e-15)


def test_polar_elements_finite():
    povm = RankOnePOVM((RankOnePOVMElement(1.0, 0.0), RankOnePOVMElement(1.0, np.pi)))
    for theta in (0.05, 1.0, np.pi - 0.05):
        n = derive_coefficients(theta, povm).n
        assert np.all(np.isfinite(n))
        assert np.allclose(np.linalg.norm(n, axis=1), 1, atol=1e-12)


def test_json_round_trip():
    c = derive_coefficients(1.1, square_povm())
    back = BoundaryCoefficients.from_json(c.to_json())
    assert np.array_equal(back.n, c.n) and back.theta == c.theta


def test_bell_value_ideal_and_noisy():
    coeffs = derive_coefficients(np.pi / 2, triangular_povm())
    assert bell_value(coeffs, protocol_correlations(np.pi / 2)) == pytest.approx(1.0, abs=1e-12)
    noisy = protocol_correlations(np.pi / 2, noise=NoiseModel(0.05))
    assert bell_value(coeffs, noisy) == pytest.approx(0.95, abs=1e-12)


def test_bell_value_uniform_table_is_zero():
    coeffs = derive_coefficients(np.pi / 2, triangular_povm())
    data = {(x, y): np.full((2, 2), 0.25) for x in (1, 3) for y in (0, 1)}
    data.update({(x, 2): np.full((2, 3), 1 / 6) for x in (1, 3)})
    assert bell_value(coeffs, CorrelationTable(data)) == pytest.approx(0.0, abs=1e-15)


def test_bell_value_needs_sigma2_input():
    povm = RankOnePOVM((RankOnePOVMElement(1.0, np.pi / 2, np.pi / 2), RankOnePOVMElement(1.0, np.pi / 2, 3 * np.pi / 2)))
    coeffs = derive_coefficients(1.0, povm)
    with pytest.raises(IncompleteData):
        bell_value(coeffs, protocol_correlations(1.0, povm=povm))
    assert bell_value(coeffs, protocol_correlations(1.0, povm=povm, alice_inputs=(1, 2, 3))) == pytest.approx(1.0, abs=1e-12)


def test_saturation_examples():
    assert ideal_saturation_residual(np.pi / 2, triangular_povm()) < 1e-12
    assert ideal_saturation_residual(np.pi / 3, square_povm()) < 1e-12
    assert ideal_saturation_residual(np.pi / 4, random_rank_one_povm(3, np.random.default_rng(42))) < 1e-12
    for beta in (np.pi / 12, np.pi / 8, np.pi / 6):
        assert ideal_saturation_residual(np.pi / 2, sequential_povm(beta)) < 1e-10


def test_m_operator_examples():
    tri = m_operator_matrix(derive_coefficients(np.pi / 2, triangular_povm()))
    expected = np.array([[1, 0, 0, 1], [1, S3, 0, -0.5], [1, -S3, 0, -0.5]])
    assert np.allclose(tri.matrix, expected, atol=1e-15)
    assert tri.invertible
    sq = m_operator_matrix(derive_coefficients(np.pi / 3, square_povm()))
    assert sq.rank == 3 and not sq.invertible
    assert np.abs(sq.matrix[:, 2]).max() < 1e-15
    proj = RankOnePOVM((RankOnePOVMElement(1.0, 0.0), RankOnePOVMElement(1.0, np.pi)))
    assert m_operator_matrix(derive_coefficients(0.8, proj)).rank == 2


theta_st = st.floats(0.1, np.pi - 0.1)


@given(theta_st, st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_unit_norm_and_saturation(theta, d, seed):
    povm = random_rank_one_povm(d, np.random.default_rng(seed))
    coeffs = derive_coefficients(theta, povm)
    assert np.abs(coeffs.norms() - 1).max() < 1e-12
    assert ideal_saturation_residual(theta, povm) < 1e-10
    assert factorization_residuals(theta, povm).max() < 1e-12


@given(theta_st, st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_orthogonality_certificate(theta, tb, pb):
    a = collapsed_alice_state(theta, tb, pb)
    perp = orthogonal_alice_state(theta, tb, pb)
    assert abs(np.vdot(perp, a)) < 1e-12
    assert np.linalg.norm(perp) == pytest.approx(1.0, abs=1e-12)


@given(theta_st)
def test_extremal_marginal_identity(theta):
    povm = triangular_povm()
    coeffs = derive_coefficients(theta, povm)
    state = phi_theta(theta)
    rho_b = state.reduced_bob()
    m_vals = m_operator_expectations(coeffs, povm, rho_b)
    a_vals = [state.expectation(np.kron(s, np.eye(2))) for s in (
        np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]))]
    assert np.allclose(m_vals, a_vals, atol=1e-12)
