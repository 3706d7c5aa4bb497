import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from povmcert.errors import DomainError, InvalidInput
from povmcert.qubit import (
    RankOnePOVM,
    RankOnePOVMElement,
    extremality_check,
    is_projector,
    naimark_isometry,
    phi_theta,
    povm_validate,
    random_rank_one_povm,
    require_valid,
)
from povmcert.scenario import sequential_povm, square_povm, triangular_povm


def test_phi_half_pi_is_bell_state():
    rho = phi_theta(np.pi / 2).rho
    for i in (0, 3):
        for j in (0, 3):
            assert rho[i, j] == pytest.approx(0.5, abs=1e-15)
    assert phi_theta(np.pi / 2).pure


def test_phi_third_pi_population():
    assert phi_theta(np.pi / 3).rho[0, 0].real == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("theta", [0.0, np.pi, -0.1, 4.0])
def test_phi_outside_domain(theta):
    with pytest.raises(DomainError):
        phi_theta(theta)


def test_builtin_povms_valid():
    tri = povm_validate(triangular_povm())
    assert tri.valid and tri.completeness_residual < 1e-15
    sq = povm_validate(square_povm())
    assert sq.valid and sq.d == 4


def test_broken_completeness():
    povm = RankOnePOVM((RankOnePOVMElement(1.0, 0.0), RankOnePOVMElement(0.5, np.pi)))
    report = povm_validate(povm)
    assert report.completeness_residual == pytest.approx(0.5)
    assert not report.valid
    with pytest.raises(InvalidInput):
        require_valid(povm)


def test_extremality_examples():
    tri = extremality_check(triangular_povm())
    assert tri.extremal and tri.rank == 3
    sq = extremality_check(square_povm())
    assert not sq.extremal and sq.rank == 3
    assert not extremality_check(sequential_povm(np.pi / 8)).extremal


def test_projective_pair_is_extremal():
    povm = RankOnePOVM((RankOnePOVMElement(1.0, 0.7, 0.3), RankOnePOVMElement(1.0, np.pi - 0.7, 0.3 + np.pi)))
    assert extremality_check(povm).extremal


def test_five_outcomes_never_extremal(rng):
    assert not extremality_check(random_rank_one_povm(5, rng)).extremal


def test_element_weight_bounds():
    with pytest.raises(InvalidInput):
        RankOnePOVMElement(0.0, 0.0)
    with pytest.raises(InvalidInput):
        RankOnePOVMElement(2.5, 0.0)


def test_json_round_trip():
    povm = triangular_povm()
    back = RankOnePOVM.from_json(povm.to_json())
    assert back == povm
    assert set(json.loads(povm.to_json())["elements"][0]) == {"k", "theta_b", "phi_b"}


def test_malformed_json():
    with pytest.raises(InvalidInput):
        RankOnePOVM.from_json('{"elements": [{"theta_b": 1}]}')


def test_naimark_isometry_reproduces_elements():
    povm = triangular_povm()
    v = naimark_isometry(povm)
    assert np.allclose(v.conj().T @ v, np.eye(2), atol=1e-14)
    for b, f in enumerate(povm.matrices):
        e = np.zeros((3, 3))
        e[b, b] = 1
        assert np.allclose(v.conj().T @ e @ v, f, atol=1e-14)
        assert is_projector(e)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_random_povm_invariants(d, seed):
    povm = random_rank_one_povm(d, np.random.default_rng(seed))
    total = np.zeros((2, 2), dtype=complex)
    for el in povm:
        f = el.matrix
        vals = np.linalg.eigvalsh(f)
        assert vals[0] > -1e-12 and abs(vals[0]) < 1e-12
        assert np.trace(f).real == pytest.approx(el.k, abs=1e-12)
        total += f
    assert np.abs(total - np.eye(2)).max() < 1e-10


@given(st.integers(2, 5), st.integers(0, 2**32 - 1), st.randoms())
def test_extremality_permutation_invariant(d, seed, shuffler):
    povm = random_rank_one_povm(d, np.random.default_rng(seed))
    order = list(range(d))
    shuffler.shuffle(order)
    a, b = extremality_check(povm), extremality_check(povm.permuted(order))
    assert (a.extremal, a.rank) == (b.extremal, b.rank)


def test_from_matrix_round_trip(rng):
    povm = random_rank_one_povm(4, rng)
    back = RankOnePOVM.from_matrices(povm.matrices)
    for f, g in zip(povm.matrices, back.matrices):
        assert np.allclose(f, g, atol=1e-12)
