"""Qubit operator algebra: Pauli matrices, two-qubit states and rank-one POVMs.

POVM elements are stored in Bloch form ``F_b = k_b |beta_b><beta_b|`` with
``|beta_b> = cos(t/2)|0> + exp(i p) sin(t/2)|1>``; matrices are rebuilt on
demand.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, InvalidInput

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)

COMPLETENESS_TOL = 1e-10
RANK_ONE_TOL = 1e-12


def is_hermitian(op: np.ndarray, atol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return bool(np.allclose(op, op.conj().T, atol=atol, rtol=0))


def is_psd(op: np.ndarray, atol: float = 1e-12) -> bool:
    if not is_hermitian(op, atol):
        return False
    return bool(np.linalg.eigvalsh(np.asarray(op)).min() >= -atol)


def is_projector(op: np.ndarray, atol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return is_hermitian(op, atol) and bool(np.allclose(op @ op, op, atol=atol, rtol=0))


def bloch_ket(polar: float, azimuth: float) -> np.ndarray:
    return np.array([np.cos(polar / 2), np.exp(1j * azimuth) * np.sin(polar / 2)])


def projector(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def bloch_angles(vector: Sequence[float]) -> tuple[float, float]:
    """Polar and azimuthal angle of a nonzero real 3-vector."""
    x, y, z = (float(v) for v in vector)
    r = np.sqrt(x * x + y * y + z * z)
    if r == 0:
        raise DomainError("zero Bloch vector has no direction")
    polar = float(np.arccos(np.clip(z / r, -1.0, 1.0)))
    azimuth = float(np.arctan2(y, x)) % (2 * np.pi) if x * x + y * y > 0 else 0.0
    return polar, azimuth


@dataclass(frozen=True)
class TwoQubitState:
    """Density matrix of a two-qubit system (Alice is the first factor)."""

    rho: np.ndarray
    pure: bool = False

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise InvalidInput(f"two-qubit density matrix must be 4x4, got {rho.shape}")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise InvalidInput(f"trace {np.trace(rho).real:.3g} != 1")
        if not is_hermitian(rho, 1e-12):
            raise InvalidInput("density matrix is not hermitian")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise InvalidInput("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self.rho @ op)))

    def reduced_bob(self) -> np.ndarray:
        return np.einsum("abac->bc", self.rho.reshape(2, 2, 2, 2))

    def reduced_alice(self) -> np.ndarray:
        return np.einsum("abcb->ac", self.rho.reshape(2, 2, 2, 2))


def phi_theta(theta: float) -> TwoQubitState:
    """cos(theta/2)|00> + sin(theta/2)|11> as a density matrix, theta in (0, pi)."""
    if not 0 < theta < np.pi:
        raise DomainError(f"state angle must lie in (0, pi), got {theta!r}")
    return TwoQubitState(projector(phi_theta_ket(theta)), pure=True)


def phi_theta_ket(theta: float) -> np.ndarray:
    ket = np.zeros(4, dtype=complex)
    ket[0] = np.cos(theta / 2)
    ket[3] = np.sin(theta / 2)
    return ket


@dataclass(frozen=True)
class RankOnePOVMElement:
    k: float
    theta_b: float
    phi_b: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidInput(f"POVM weight must be positive, got {self.k}")
        if self.k > 2 + 1e-12:
            raise InvalidInput(f"rank-one qubit POVM weight cannot exceed 2, got {self.k}")

    @property
    def ket(self) -> np.ndarray:
        return bloch_ket(self.theta_b, self.phi_b)

    @property
    def matrix(self) -> np.ndarray:
        return self.k * projector(self.ket)

    @property
    def bloch_vector(self) -> np.ndarray:
        """Real vector r with F = (k/2)(I + r.sigma)."""
        st = np.sin(self.theta_b)
        return np.array([st * np.cos(self.phi_b), st * np.sin(self.phi_b), np.cos(self.theta_b)])

    @classmethod
    def from_matrix(cls, op: np.ndarray, atol: float = 1e-12) -> "RankOnePOVMElement":
        op = np.asarray(op, dtype=complex)
        if not is_psd(op, atol):
            raise InvalidInput("POVM element must be positive semidefinite")
        vals, vecs = np.linalg.eigh(op)
        if vals[0] > RANK_ONE_TOL:
            raise InvalidInput(f"element is not rank one (second eigenvalue {vals[0]:.3g})")
        k = float(vals[1])
        coords = [float(np.real(np.trace(op @ s))) / k for s in PAULI]
        polar, azimuth = bloch_angles(coords)
        return cls(k, polar, azimuth)


@dataclass(frozen=True)
class ValidationReport:
    completeness_residual: float
    rank_one_residuals: tuple[float, ...]
    positive: tuple[bool, ...]
    d: int

    @property
    def valid(self) -> bool:
        return (
            self.d >= 2
            and self.completeness_residual <= COMPLETENESS_TOL
            and all(self.positive)
            and max(self.rank_one_residuals) <= RANK_ONE_TOL
        )


@dataclass(frozen=True)
class RankOnePOVM:
    elements: tuple[RankOnePOVMElement, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @property
    def d(self) -> int:
        return len(self.elements)

    @property
    def matrices(self) -> list[np.ndarray]:
        return [e.matrix for e in self.elements]

    def coefficient_matrix(self) -> np.ndarray:
        """Rows (Tr F_b, Tr F_b sigma_x, Tr F_b sigma_y, Tr F_b sigma_z)."""
        return np.array([e.k * np.concatenate(([1.0], e.bloch_vector)) for e in self.elements])

    def permuted(self, order: Iterable[int]) -> "RankOnePOVM":
        return RankOnePOVM(tuple(self.elements[i] for i in order), self.name)

    @classmethod
    def from_matrices(cls, ops: Iterable[np.ndarray], name: str = "") -> "RankOnePOVM":
        return cls(tuple(RankOnePOVMElement.from_matrix(op) for op in ops), name)

    def to_json(self) -> str:
        return json.dumps(
            {"elements": [{"k": e.k, "theta_b": e.theta_b, "phi_b": e.phi_b} for e in self.elements]}
        )

    @classmethod
    def from_json(cls, text: str, name: str = "") -> "RankOnePOVM":
        try:
            data = json.loads(text)
            elements = tuple(
                RankOnePOVMElement(float(e["k"]), float(e["theta_b"]), float(e.get("phi_b", 0.0)))
                for e in data["elements"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed POVM JSON: {exc}") from exc
        return cls(elements, name)


def povm_validate(povm: RankOnePOVM) -> ValidationReport:
    mats = povm.matrices
    total = sum(mats) if mats else np.zeros((2, 2))
    completeness = float(np.abs(total - I2).max())
    residuals, positive = [], []
    for op in mats:
        vals = np.linalg.eigvalsh(op)
        residuals.append(float(abs(vals[0])))
        positive.append(bool(vals[0] >= -RANK_ONE_TOL))
    return ValidationReport(completeness, tuple(residuals), tuple(positive), povm.d)


def require_valid(povm: RankOnePOVM) -> None:
    report = povm_validate(povm)
    if not report.valid:
        raise InvalidInput(
            f"invalid POVM: d={report.d}, completeness residual {report.completeness_residual:.3g}"
        )


@dataclass(frozen=True)
class ExtremalityReport:
    extremal: bool
    rank: int
    singular_values: tuple[float, ...]


def extremality_check(povm: RankOnePOVM, tol: float = 1e-9) -> ExtremalityReport:
    """A rank-one qubit POVM is extremal iff its elements are linearly independent."""
    require_valid(povm)
    sv = np.linalg.svd(povm.coefficient_matrix(), compute_uv=False)
    rank = int((sv > tol).sum())
    return ExtremalityReport(rank == povm.d and povm.d <= 4, rank, tuple(float(s) for s in sv))


def naimark_isometry(povm: RankOnePOVM) -> np.ndarray:
    """Isometry V: C^2 -> C^d with V^dag |b><b| V = F_b.

    Used to evaluate projector words on an exact model of a POVM.
    """
    return np.array([np.sqrt(e.k) * e.ket.conj() for e in povm.elements])


def random_rank_one_povm(d: int, rng: np.random.Generator, max_tries: int = 1000) -> RankOnePOVM:
    """Random rank-one POVM with d elements.

    Draws d random rank-one operators G_b and whitens them with T^{-1/2},
    T = sum G_b, which preserves rank one and makes the set complete.
    """
    if d < 2:
        raise DomainError("a POVM needs at least two outcomes")
    for _ in range(max_tries):
        kets = rng.normal(size=(d, 2)) + 1j * rng.normal(size=(d, 2))
        ops = [projector(k) for k in kets]
        total = sum(ops)
        vals, vecs = np.linalg.eigh(total)
        if vals.min() < 1e-3 * vals.max():
            continue
        w = vecs @ np.diag(vals ** -0.5) @ vecs.conj().T
        elements = []
        for op in ops:
            g = w @ op @ w
            g = (g + g.conj().T) / 2
            vals_g, vecs_g = np.linalg.eigh(g)
            k = float(vals_g[1])
            ket = vecs_g[:, 1]
            ket = ket * np.exp(-1j * np.angle(ket[0])) if abs(ket[0]) > 1e-15 else ket
            polar = 2 * float(np.arctan2(abs(ket[1]), abs(ket[0])))
            azimuth = float(np.angle(ket[1]) - np.angle(ket[0])) % (2 * np.pi)
            elements.append(RankOnePOVMElement(k, polar, azimuth))
        povm = RankOnePOVM(tuple(elements), name=f"random-d{d}")
        if povm_validate(povm).valid:
            return povm
    raise RuntimeError("failed to draw a well-conditioned POVM")
