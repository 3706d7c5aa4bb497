import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from povmcert.errors import DegenerateDecomposition, DomainError, FitError, IncompleteData, InvalidInput
from povmcert.qubit import extremality_check, povm_validate
from povmcert.scenario import (
    CorrelationTable,
    NoiseModel,
    alpha_for_theta,
    fit_theta,
    fit_theta_from_chsh,
    noisy_state,
    protocol_correlations,
    quantum_max,
    read_experiment_csv,
    record_from_row,
    sequential_decomposition,
    sequential_povm,
    sequential_povm_from_kraus,
    square_decomposition,
    square_povm,
    tilted_chsh,
    triangular_povm,
    visibilities,
)

SQRT8 = 2 * math.sqrt(2)


def test_noisy_state_limits():
    assert np.allclose(noisy_state(np.pi / 2).rho, noisy_state(np.pi / 2, NoiseModel()).rho)
    assert np.allclose(noisy_state(np.pi / 2, NoiseModel(1.0)).rho, np.eye(4) / 4, atol=1e-15)
    vz, _ = visibilities(noisy_state(np.pi / 2, NoiseModel(0.007, 0.01)))
    assert vz == pytest.approx(0.993, abs=1e-12)


def test_noise_domain():
    with pytest.raises(DomainError):
        NoiseModel(0.7, 0.4)
    with pytest.raises(DomainError):
        NoiseModel(-0.1)


def test_visibility_examples():
    assert visibilities(noisy_state(np.pi / 2, NoiseModel(0.1))) == pytest.approx((0.9, 0.9), abs=1e-12)
    assert visibilities(noisy_state(np.pi / 3, NoiseModel(0, 0.2))) == pytest.approx((1.0, 0.8 * math.sin(np.pi / 3)), abs=1e-12)


@given(st.floats(0.05, np.pi - 0.05), st.floats(0, 0.5), st.floats(0, 0.5))
def test_visibility_closed_forms(theta, p, c):
    vz, vx = visibilities(noisy_state(theta, NoiseModel(p, c)))
    assert vz == pytest.approx(1 - p, abs=1e-12)
    assert vx == pytest.approx((1 - p - c) * math.sin(theta), abs=1e-12)


def test_ideal_protocol_half_pi():
    corr = protocol_correlations(np.pi / 2)
    assert np.allclose(corr.bob_marginal(2), 1 / 3, atol=1e-15)
    assert tilted_chsh(corr, 0.0) == pytest.approx(SQRT8, abs=1e-12)
    noisy = protocol_correlations(np.pi / 2, noise=NoiseModel(0.05))
    assert tilted_chsh(noisy, 0.0) == pytest.approx(SQRT8 * 0.95, abs=1e-12)


@given(st.floats(0.05, np.pi - 0.05))
def test_tilted_chsh_saturates(theta):
    corr = protocol_correlations(theta)
    alpha = alpha_for_theta(theta)
    assert tilted_chsh(corr, alpha) == pytest.approx(quantum_max(alpha), abs=1e-10)


def test_quantum_max_examples():
    assert quantum_max(0) == pytest.approx(SQRT8)
    assert quantum_max(2) == pytest.approx(4)


@given(st.floats(0.05, np.pi - 0.05), st.floats(0, 0.3), st.floats(0, 0.3),
       st.sampled_from(["triangular", "square", "sequential"]))
def test_tables_normalized_and_no_signaling(theta, p, c, name):
    povm = {"triangular": triangular_povm, "square": square_povm, "sequential": lambda: sequential_povm(np.pi / 8)}[name]()
    corr = protocol_correlations(theta, noise=NoiseModel(p, c), povm=povm)
    assert corr.normalization_residual() < 1e-10
    assert corr.no_signaling_residual() < 1e-10


def test_table_csv_round_trip():
    corr = protocol_correlations(1.1, noise=NoiseModel(0.03, 0.01), povm=square_povm())
    back = CorrelationTable.from_csv(corr.to_csv())
    assert back.max_deviation(corr) == 0.0


def test_table_missing_block():
    corr = protocol_correlations(1.0)
    with pytest.raises(IncompleteData):
        corr.block(2, 0)
    with pytest.raises(InvalidInput):
        CorrelationTable.from_csv("x,y\n1,2\n")


@pytest.mark.parametrize("theta0", [1.2, 1.9])
def test_fit_round_trip(theta0):
    corr = protocol_correlations(theta0)
    alpha = alpha_for_theta(theta0)
    a3 = corr.alice_expectation(3)
    assert fit_theta(tilted_chsh(corr, alpha), a3) == pytest.approx(theta0, abs=1e-6)
    from povmcert.scenario import chsh_value
    assert fit_theta_from_chsh(chsh_value(corr), a3) == pytest.approx(theta0, abs=1e-6)


def test_fit_table_row_below_chsh_bound():
    # <I_alpha> = 2.825 lies below 2 sqrt 2, where the distance to the bound
    # is minimal at alpha = 0, i.e. theta = pi/2; the table reports 1.629.
    theta = fit_theta(2.825)
    assert theta == pytest.approx(np.pi / 2)
    assert abs(theta - 1.629) < 0.06


def test_fit_rejects_impossible():
    with pytest.raises(FitError):
        fit_theta(4.1)
    with pytest.raises(FitError):
        fit_theta_from_chsh(3.5, 0.0)


def test_builtin_povm_shapes():
    sq = square_povm()
    assert [e.k for e in sq] == [0.5] * 4
    dirs = np.array([e.bloch_vector for e in sq])
    assert np.allclose(dirs, [[1, 0, 0], [-1, 0, 0], [0, 0, 1], [0, 0, -1]], atol=1e-15)
    tri = triangular_povm()
    assert [e.k for e in tri] == pytest.approx([2 / 3] * 3)
    assert [e.theta_b for e in tri] == pytest.approx([0, 2 * np.pi / 3, 2 * np.pi / 3])
    assert [e.phi_b for e in tri][1:] == pytest.approx([0, np.pi])


@pytest.mark.parametrize("beta", [np.pi / 12, np.pi / 8, np.pi / 6])
def test_sequential_povm(beta):
    povm = sequential_povm(beta)
    assert povm_validate(povm).valid
    for f, g in zip(povm.matrices, sequential_povm_from_kraus(beta)):
        assert np.allclose(f, g, atol=1e-14)
        assert np.trace(f).real == pytest.approx(0.5)
        assert abs(np.linalg.eigvalsh(f)[0]) < 1e-12
    assert not extremality_check(povm).extremal
    dec = sequential_decomposition(beta)
    for part in dec.parts:
        assert extremality_check(part).extremal
    assert np.allclose(dec.average(), povm.matrices, atol=1e-15)


@pytest.mark.parametrize("beta", [0.0, np.pi / 4])
def test_sequential_degenerate(beta):
    with pytest.raises(DegenerateDecomposition):
        sequential_povm(beta)


def test_square_decomposition():
    dec = square_decomposition()
    for part in dec.parts:
        assert extremality_check(part).extremal
    assert np.allclose(dec.average(), square_povm().matrices, atol=1e-15)


def test_record_parsing():
    rows = read_experiment_csv("theta,I_alpha,S,H_min,H\n1.629,2.825,0.953,0.96,1.01\n")
    rec = record_from_row(rows[0])
    assert rec.approximate
    assert rec.a3 == pytest.approx(math.cos(1.629))
    assert rec.reference == {"H_min": 0.96, "H": 1.01}
    assert rec.consistent()
    bad = record_from_row({"theta": "1.0", "I_alpha": "2.9", "S": "1.02"})
    assert not bad.consistent()
    with pytest.raises(InvalidInput):
        record_from_row({"theta": "1.0"})
