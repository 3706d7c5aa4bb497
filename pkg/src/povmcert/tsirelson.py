"""Boundary coefficients and the Bell operator saturated by rank-one POVMs.

For a state angle theta and POVM elements with Bloch angles (t_b, p_b) the
unit vectors

    n_b = (sin(theta) sin(t_b) cos(p_b), -sin(theta) sin(t_b) sin(p_b),
           cos(theta) + cos(t_b)) / (1 + cos(theta) cos(t_b))

define Alice projectors L_b = (1 - n_b.A)/2 that annihilate the post-measurement
state, and the Bell operator S = sum_b (n_b.A) (x) Pi_b obeys <S> <= 1 with
equality on the ideal qubit realization.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IncompleteData, SingularConfiguration
from .qubit import PAULI, I2, RankOnePOVM, phi_theta, phi_theta_ket, require_valid

_DENOM_TOL = 1e-14


@dataclass(frozen=True)
class BoundaryCoefficients:
    theta: float
    n: np.ndarray  # shape (d, 3)
    sigma2_branch: int = 1

    def __post_init__(self):
        n = np.array(self.n, dtype=float)
        n.setflags(write=False)
        object.__setattr__(self, "n", n)

    @property
    def d(self) -> int:
        return self.n.shape[0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.n, axis=1)

    def to_json(self) -> str:
        return json.dumps({"theta": self.theta, "n": self.n.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "BoundaryCoefficients":
        data = json.loads(text)
        return cls(float(data["theta"]), np.array(data["n"], dtype=float))


def derive_coefficients(theta: float, povm: RankOnePOVM, sigma2_branch: int = 1) -> BoundaryCoefficients:
    if not 0 < theta < np.pi:
        raise DomainError(f"state angle must lie in (0, pi), got {theta!r}")
    if sigma2_branch not in (1, -1):
        raise ValueError("sigma2_branch must be +1 or -1")
    require_valid(povm)
    st, ct = np.sin(theta), np.cos(theta)
    rows = []
    for e in povm.elements:
        denom = 1 + ct * np.cos(e.theta_b)
        if abs(denom) < _DENOM_TOL:
            raise SingularConfiguration(f"1 + cos(theta)cos(theta_b) = {denom:.3g}")
        radial = st * np.sin(e.theta_b) / denom
        rows.append(
            (
                radial * np.cos(e.phi_b),
                -sigma2_branch * radial * np.sin(e.phi_b),
                (ct + np.cos(e.theta_b)) / denom,
            )
        )
    return BoundaryCoefficients(float(theta), np.array(rows), sigma2_branch)


def bell_value(coeffs: BoundaryCoefficients, corr) -> float:
    """<S> = sum_b sum_j n_jb <A_j (x) Pi_b> evaluated on a correlation table.

    ``corr`` must contain the POVM input (y=2) for Alice inputs 1 and 3; the
    input x=2 is needed only when some n_2b is nonzero.
    """
    y = corr.povm_input
    if y not in corr.bob_inputs:
        raise IncompleteData(f"correlation table has no POVM input y={y}")
    if corr.outcomes(y) != coeffs.d:
        raise IncompleteData(f"POVM input has {corr.outcomes(y)} outcomes, coefficients expect {coeffs.d}")
    total = 0.0
    for j in (1, 2, 3):
        column = coeffs.n[:, j - 1]
        if j not in corr.alice_inputs:
            if np.abs(column).max() > 1e-12:
                raise IncompleteData(f"n_{j}b is nonzero but the table has no Alice input x={j}")
            continue
        total += sum(column[b] * corr.correlator(j, y, b) for b in range(coeffs.d))
    return float(total)


def alice_operators(sigma2_branch: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return PAULI[0], sigma2_branch * PAULI[1], PAULI[2]


def bell_operator(coeffs: BoundaryCoefficients, povm: RankOnePOVM) -> np.ndarray:
    """S on C^2 (x) C^2 with A_j the Pauli matrices and Pi_b -> F_b."""
    a_ops = alice_operators(coeffs.sigma2_branch)
    s = np.zeros((4, 4), dtype=complex)
    for nb, fb in zip(coeffs.n, povm.matrices):
        s += np.kron(sum(c * a for c, a in zip(nb, a_ops)), fb)
    return s


def ideal_saturation_residual(theta: float, povm: RankOnePOVM, sigma2_branch: int = 1) -> float:
    coeffs = derive_coefficients(theta, povm, sigma2_branch)
    state = phi_theta(theta)
    return abs(state.expectation(bell_operator(coeffs, povm)) - 1.0)


def alice_projectors(coeffs: BoundaryCoefficients) -> list[np.ndarray]:
    """L_b = (1 - n_b.A)/2 with A the Pauli matrices."""
    a_ops = alice_operators(coeffs.sigma2_branch)
    return [(I2 - sum(c * a for c, a in zip(nb, a_ops))) / 2 for nb in coeffs.n]


def collapsed_alice_state(theta: float, theta_b: float, phi_b: float) -> np.ndarray:
    """Unnormalized Alice vector left after F_b acts on phi_theta (up to k_b)."""
    return np.array(
        [
            np.cos(theta_b / 2) * np.cos(theta / 2),
            np.exp(-1j * phi_b) * np.sin(theta_b / 2) * np.sin(theta / 2),
        ]
    )


def orthogonal_alice_state(theta: float, theta_b: float, phi_b: float) -> np.ndarray:
    """Unit vector orthogonal to the collapsed Alice state, in Bloch form.

    Azimuth -phi_b and tan(h) = -cot(theta_b/2) cot(theta/2) for the half
    polar angle h.
    """
    h = np.arctan2(-np.cos(theta_b / 2) * np.cos(theta / 2), np.sin(theta_b / 2) * np.sin(theta / 2))
    return np.array([np.cos(h), np.exp(-1j * phi_b) * np.sin(h)])


def factorization_residuals(theta: float, povm: RankOnePOVM, sigma2_branch: int = 1) -> np.ndarray:
    """||(L_b (x) F_b)|phi_theta>|| for every outcome b."""
    coeffs = derive_coefficients(theta, povm, sigma2_branch)
    ket = phi_theta_ket(theta)
    return np.array(
        [np.linalg.norm(np.kron(lam, fb) @ ket) for lam, fb in zip(alice_projectors(coeffs), povm.matrices)]
    )


@dataclass(frozen=True)
class MOperatorReport:
    matrix: np.ndarray  # rows (1, n_1b, n_2b, n_3b)
    rank: int
    invertible: bool


def m_operator_matrix(coeffs: BoundaryCoefficients, tol: float = 1e-9) -> MOperatorReport:
    """Map from {Pi_b} to {1, M_1, M_2, M_3}; Pi_b recoverable iff rank == d."""
    mat = np.column_stack([np.ones(coeffs.d), coeffs.n])
    sv = np.linalg.svd(mat, compute_uv=False)
    rank = int((sv > tol).sum())
    return MOperatorReport(mat, rank, rank == coeffs.d)


def m_operator_expectations(coeffs: BoundaryCoefficients, povm: RankOnePOVM, rho: np.ndarray) -> np.ndarray:
    """<M_j> = sum_b n_jb <F_b> on Bob's reduced state, j = 1, 2, 3."""
    probs = np.array([np.real(np.trace(rho @ f)) for f in povm.matrices])
    return coeffs.n.T @ probs
