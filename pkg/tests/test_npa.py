import math

import numpy as np
import pytest

from povmcert.errors import IncompleteData, LevelTooLow
from povmcert.ncpoly import ALICE, BOB, IDENTITY, NCPolynomial, monomial_basis, projector_symbol
from povmcert.npa import (
    ConstraintSet,
    MomentMatrix,
    NPAScenario,
    assemble_bff_sdp,
    assemble_guessing_sdp,
    exact_model,
    read_sdpa,
)
from povmcert.qubit import phi_theta
from povmcert.scenario import (
    CorrelationTable,
    NoiseModel,
    alpha_for_theta,
    noisy_state,
    protocol_correlations,
    quantum_max,
    square_povm,
    triangular_povm,
)
from povmcert.sdp import OPTIMAL, solve
from povmcert.tsirelson import derive_coefficients

A10 = projector_symbol(ALICE, 1, 0)
B20 = projector_symbol(BOB, 2, 0)
B21 = projector_symbol(BOB, 2, 1)


def constraints(theta, povm, mode, noise=None):
    corr = protocol_correlations(theta, noise=noise, povm=povm)
    n = derive_coefficients(theta, povm).n
    return ConstraintSet.from_table(NPAScenario(povm.d), corr, mode, n)


def test_smallest_moment_matrix():
    mm = MomentMatrix([IDENTITY, (A10,)])
    assert mm.nvars == 1 and mm.words == [(A10,)]
    y = np.array([0.3])
    assert np.allclose(mm.dense(y), [[1, 0.3], [0.3, 0.3]])


def test_orthogonal_entry_pinned_to_zero():
    mm = MomentMatrix([IDENTITY, (B20,), (B21,)])
    dense = mm.dense(np.array([0.2, 0.5]))
    assert dense[1, 2] == 0 and dense[2, 1] == 0
    assert dense[1, 1] == pytest.approx(0.2) and dense[2, 2] == pytest.approx(0.5)


def test_identity_functional():
    mm = MomentMatrix([IDENTITY, (A10,)])
    coef, const = mm.functional(NCPolynomial.constant(1))
    assert not coef.any() and const == 1


@pytest.mark.parametrize("theta", [np.pi / 3, np.pi / 2, 2.0])
def test_tilted_chsh_functional_on_exact_model(theta):
    scen = NPAScenario(3)
    mm = MomentMatrix(monomial_basis(scen.symbols(), 2))
    alpha = alpha_for_theta(theta)
    coef, const = mm.functional(alpha * scen.A(3) + scen.chsh())
    y = exact_model(scen, phi_theta(theta).rho, triangular_povm(), theta).moment_vector(mm)
    assert coef @ y + const == pytest.approx(quantum_max(alpha), abs=1e-12)


def test_word_beyond_level():
    scen = NPAScenario(3)
    mm = MomentMatrix(monomial_basis(scen.symbols(), 2))
    a1, a3 = scen.alice(1).symbols()[0], scen.alice(3).symbols()[0]
    b0, b1 = scen.bob(0).symbols()[0], scen.bob(1).symbols()[0]
    with pytest.raises(LevelTooLow):
        mm.functional(NCPolynomial.word(a1, a3, a1, b0, b1))


def test_missing_povm_input():
    corr = protocol_correlations(1.0)
    partial = CorrelationTable({k: v for k, v in corr.data.items() if k[1] != 2})
    with pytest.raises(IncompleteData):
        ConstraintSet.from_table(NPAScenario(3), partial, "full")
    with pytest.raises(IncompleteData):
        ConstraintSet.from_table(NPAScenario(3), partial, "boundary", derive_coefficients(1.0, triangular_povm()).n)


CASES = [
    (np.pi / 2, triangular_povm, "boundary"),
    (np.pi / 3, triangular_povm, "standard"),
    (2.2, triangular_povm, "full"),
    (np.pi / 3, square_povm, "boundary"),
    (np.pi / 3, square_povm, "full"),
]


@pytest.mark.parametrize("theta,make,mode", CASES)
@pytest.mark.parametrize("noise", [None, NoiseModel(0.1, 0.05)])
def test_exact_model_feasible_for_guessing(theta, make, mode, noise):
    povm = make()
    cs = constraints(theta, povm, mode, noise)
    prob, mm = assemble_guessing_sdp(cs, 2, povm.d)
    y = exact_model(NPAScenario(povm.d), noisy_state(theta, noise).rho, povm, theta).moment_vector(mm)
    assert prob.feasibility_residual(y) < 1e-10


@pytest.mark.parametrize("theta,make,mode", CASES[:3])
def test_exact_model_feasible_for_bff(theta, make, mode):
    povm = make()
    cs = constraints(theta, povm, mode)
    scen = NPAScenario(povm.d, eve="z")
    prob, mm = assemble_bff_sdp(cs, 2, 0.4, povm.d)
    y = exact_model(scen, phi_theta(theta).rho, povm, theta, eve_scalars=[-0.3, 0.1, 0.7]).moment_vector(mm)
    assert prob.feasibility_residual(y) < 1e-10


def test_complex_embedding_matches_real():
    cs = constraints(np.pi / 2, triangular_povm(), "boundary", NoiseModel(0.1))
    real = solve(assemble_guessing_sdp(cs, 1, 3)[0])
    cplx = solve(assemble_guessing_sdp(cs, 1, 3, complex_mode=True)[0])
    assert real.status == cplx.status == OPTIMAL
    assert cplx.dual_value == pytest.approx(real.dual_value, abs=1e-6)


def test_sdpa_round_trip():
    cs = constraints(np.pi / 2, triangular_povm(), "boundary", NoiseModel(0.1))
    prob, _ = assemble_guessing_sdp(cs, 1, 3)
    direct = solve(prob)
    text = prob.to_sdpa()
    back = read_sdpa(text)
    assert back.sense == "max"
    again = solve(back)
    assert again.status == OPTIMAL
    assert again.dual_value == pytest.approx(direct.dual_value, abs=1e-6)
    assert read_sdpa(back.to_sdpa()).to_sdpa() == back.to_sdpa()


def test_level_monotonicity():
    cs = constraints(np.pi / 2, triangular_povm(), "boundary", NoiseModel(0.1))
    lvl1 = solve(assemble_guessing_sdp(cs, 1, 3)[0])
    lvl2 = solve(assemble_guessing_sdp(cs, 2, 3)[0])
    assert lvl2.dual_value <= lvl1.dual_value + 1e-6


def test_more_constraints_never_help_eve():
    noise = NoiseModel(0.1)
    bnd = solve(assemble_guessing_sdp(constraints(np.pi / 3, square_povm(), "boundary", noise), 1, 4)[0])
    full = solve(assemble_guessing_sdp(constraints(np.pi / 3, square_povm(), "full", noise), 1, 4)[0])
    assert full.dual_value <= bnd.dual_value + 1e-6


def test_bff_unit_node_bounded_by_completed_square():
    cs = constraints(np.pi / 2, triangular_povm(), "boundary", NoiseModel(0.1))
    sol = solve(assemble_bff_sdp(cs, 1, 1.0, 3)[0])
    assert sol.status == OPTIMAL
    assert sol.dual_value >= -1 - 1e-7
