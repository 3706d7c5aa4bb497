"""Gauss-Radau quadrature on [0, 1] with the right endpoint fixed."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class QuadratureSpec:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return len(self.nodes)

    @property
    def c_m(self) -> float:
        """Constant term of the entropy bound, sum_{i<m} w_i / (t_i ln 2)."""
        return float(np.sum(self.weights[:-1] / (self.nodes[:-1] * math.log(2))))

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f(self.nodes)))


def gauss_radau(m: int) -> QuadratureSpec:
    """Golub-Welsch with a Radau-modified Jacobi matrix.

    The Legendre recurrence on [-1, 1] has zero diagonal and off-diagonal
    b_k = k / sqrt(4k^2 - 1). Replacing the last diagonal entry by
    1 + delta_{m-1}, where (J_{m-1} - I) delta = b_{m-1}^2 e_{m-1}, makes x = 1
    an eigenvalue. Nodes and weights are then mapped to [0, 1].
    """
    if m < 2:
        raise DomainError(f"Gauss-Radau needs at least 2 nodes, got {m}")
    k = np.arange(1, m)
    offdiag = k / np.sqrt(4.0 * k * k - 1.0)
    jm1 = np.diag(offdiag[:-1], 1) + np.diag(offdiag[:-1], -1) if m > 2 else np.zeros((1, 1))
    rhs = np.zeros(m - 1)
    rhs[-1] = offdiag[-1] ** 2
    delta = np.linalg.solve(jm1 - np.eye(m - 1), rhs)
    jac = np.diag(offdiag, 1) + np.diag(offdiag, -1)
    jac[-1, -1] = 1.0 + delta[-1]
    x, vecs = np.linalg.eigh(jac)
    w = 2.0 * vecs[0] ** 2
    nodes = (x + 1.0) / 2.0
    weights = w / 2.0
    nodes[-1] = 1.0  # eigenvalue is 1 up to rounding
    return QuadratureSpec(nodes, weights)
