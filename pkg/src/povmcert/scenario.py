"""Correlation tables for the tilted-CHSH + POVM protocol and the example POVMs."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateDecomposition, DomainError, FitError, IncompleteData, InvalidInput
from .qubit import (
    I2,
    KET0,
    KET1,
    KET_MINUS,
    KET_PLUS,
    PAULI,
    RankOnePOVM,
    RankOnePOVMElement,
    TwoQubitState,
    phi_theta,
    projector,
)

SQRT8 = 2 * math.sqrt(2)
POVM_INPUT = 2


# --------------------------------------------------------------------------- states


@dataclass(frozen=True)
class NoiseModel:
    """Depolarization ``p`` and decoherence ``c`` of the source state."""

    p: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.p < 0 or self.c < 0:
            raise DomainError(f"noise parameters must be nonnegative, got p={self.p}, c={self.c}")
        if self.p + self.c > 1 + 1e-15:
            raise DomainError(f"p + c must not exceed 1, got {self.p + self.c}")


def noisy_state(theta: float, noise: NoiseModel | None = None) -> TwoQubitState:
    """(1-p-c)|phi><phi| + p I/4 + c [cos^2(theta/2)|00><00| + sin^2(theta/2)|11><11|]."""
    noise = noise or NoiseModel()
    pure = phi_theta(theta).rho
    dephased = np.diag([np.cos(theta / 2) ** 2, 0, 0, np.sin(theta / 2) ** 2]).astype(complex)
    rho = (1 - noise.p - noise.c) * pure + noise.p * np.eye(4) / 4 + noise.c * dephased
    return TwoQubitState(rho, pure=noise.p == 0 and noise.c == 0)


def visibilities(state: TwoQubitState) -> tuple[float, float]:
    """(V_Z, V_X) = (<sigma_z sigma_z>, <sigma_x sigma_x>)."""
    zz = np.kron(PAULI[2], PAULI[2])
    xx = np.kron(PAULI[0], PAULI[0])
    return state.expectation(zz), state.expectation(xx)


# --------------------------------------------------------------------------- POVMs


def triangular_povm() -> RankOnePOVM:
    """Three elements 2/3|beta_b><beta_b| at 120 degrees in the x-z plane."""
    return RankOnePOVM(
        (
            RankOnePOVMElement(2 / 3, 0.0, 0.0),
            RankOnePOVMElement(2 / 3, 2 * np.pi / 3, 0.0),
            RankOnePOVMElement(2 / 3, 2 * np.pi / 3, np.pi),
        ),
        name="triangular",
    )


def square_povm() -> RankOnePOVM:
    """{|+><+|, |-><-|, |0><0|, |1><1|} / 2."""
    return RankOnePOVM(
        (
            RankOnePOVMElement(0.5, np.pi / 2, 0.0),
            RankOnePOVMElement(0.5, np.pi / 2, np.pi),
            RankOnePOVMElement(0.5, 0.0, 0.0),
            RankOnePOVMElement(0.5, np.pi, 0.0),
        ),
        name="square",
    )


def sequential_povm(beta: float) -> RankOnePOVM:
    """Four-outcome POVM of a weak measurement followed by an X measurement.

    Outcome order (b1, b2) = (0,0), (0,1), (1,0), (1,1) with
    F = (1 + (-1)^b2 sin(2 beta) sigma_x + (-1)^b1 cos(2 beta) sigma_z) / 4.
    """
    if not 0 < beta < np.pi / 4:
        raise DegenerateDecomposition(f"sequential POVM needs beta in (0, pi/4), got {beta!r}")
    elements = []
    for b1 in (0, 1):
        for b2 in (0, 1):
            z = (-1) ** b1 * np.cos(2 * beta)
            elements.append(RankOnePOVMElement(0.5, float(np.arccos(z)), 0.0 if b2 == 0 else np.pi))
    return RankOnePOVM(tuple(elements), name=f"sequential(beta={beta:.6g})")


def sequential_povm_from_kraus(beta: float) -> list[np.ndarray]:
    """K_b1^dag F2_b2 K_b1 built from the Kraus operators directly."""
    k0 = np.cos(beta) * projector(KET0) + np.sin(beta) * projector(KET1)
    k1 = np.cos(beta) * projector(KET1) + np.sin(beta) * projector(KET0)
    second = (projector(KET_PLUS), projector(KET_MINUS))
    return [k.conj().T @ f @ k for k in (k0, k1) for f in second]


@dataclass(frozen=True)
class POVMDecomposition:
    """F = sum_k weight_k * part_k, each part supported on a subset of outcomes."""

    d: int
    weights: tuple[float, ...]
    parts: tuple[RankOnePOVM, ...]
    supports: tuple[tuple[int, ...], ...]

    def embedded(self, k: int) -> list[np.ndarray]:
        mats = [np.zeros((2, 2), dtype=complex) for _ in range(self.d)]
        for idx, op in zip(self.supports[k], self.parts[k].matrices):
            mats[idx] = op
        return mats

    def average(self) -> list[np.ndarray]:
        mats = [np.zeros((2, 2), dtype=complex) for _ in range(self.d)]
        for k, w in enumerate(self.weights):
            for b, op in enumerate(self.embedded(k)):
                mats[b] += w * op
        return mats


def _half(povm: RankOnePOVM, support: Sequence[int], name: str) -> RankOnePOVM:
    return RankOnePOVM(
        tuple(RankOnePOVMElement(2 * povm.elements[i].k, povm.elements[i].theta_b, povm.elements[i].phi_b) for i in support),
        name=name,
    )


def square_decomposition() -> POVMDecomposition:
    povm = square_povm()
    supports = ((0, 1), (2, 3))
    parts = tuple(_half(povm, s, f"square-half-{k}") for k, s in enumerate(supports))
    return POVMDecomposition(4, (0.5, 0.5), parts, supports)


def sequential_decomposition(beta: float) -> POVMDecomposition:
    povm = sequential_povm(beta)
    supports = ((0, 3), (1, 2))
    parts = tuple(_half(povm, s, f"sequential-half-{k}") for k, s in enumerate(supports))
    return POVMDecomposition(4, (0.5, 0.5), parts, supports)


BUILTIN_POVMS = {
    "triangular": triangular_povm,
    "square": square_povm,
    "sequential": lambda: sequential_povm(np.pi / 8),
}


# --------------------------------------------------------------------------- tables


class CorrelationTable:
    """Joint distribution p(a, b | x, y).

    ``data[(x, y)]`` is an array of shape (2, n_b) indexed by (a, b). Alice
    inputs are labelled by the Pauli index they ideally implement (1, 3 and
    optionally 2); Bob inputs 0 and 1 are dichotomic, input 2 is the POVM.
    """

    def __init__(self, data: Mapping[tuple[int, int], np.ndarray], povm_input: int = POVM_INPUT):
        self.data = {(int(x), int(y)): np.asarray(p, dtype=float) for (x, y), p in data.items()}
        for key, p in self.data.items():
            if p.ndim != 2 or p.shape[0] != 2:
                raise InvalidInput(f"block {key} must have shape (2, n_b), got {p.shape}")
        self.povm_input = povm_input

    @property
    def alice_inputs(self) -> tuple[int, ...]:
        return tuple(sorted({x for x, _ in self.data}))

    @property
    def bob_inputs(self) -> tuple[int, ...]:
        return tuple(sorted({y for _, y in self.data}))

    def block(self, x: int, y: int) -> np.ndarray:
        try:
            return self.data[(x, y)]
        except KeyError:
            raise IncompleteData(f"no correlations for x={x}, y={y}") from None

    def outcomes(self, y: int) -> int:
        for (_, yy), p in self.data.items():
            if yy == y:
                return p.shape[1]
        raise IncompleteData(f"no correlations for y={y}")

    def prob(self, a: int, b: int, x: int, y: int) -> float:
        return float(self.block(x, y)[a, b])

    def correlator(self, x: int, y: int, b: int | None = None) -> float:
        """<A_x B_y> for dichotomic y, or <A_x (x) Pi_b> when b is given."""
        p = self.block(x, y)
        sign_a = np.array([1.0, -1.0])
        if b is not None:
            return float(sign_a @ p[:, b])
        if p.shape[1] != 2:
            raise IncompleteData(f"input y={y} is not dichotomic")
        return float(sign_a @ p @ sign_a)

    def alice_expectation(self, x: int) -> float:
        """<A_x>, averaged over Bob's inputs."""
        vals = [float(np.array([1.0, -1.0]) @ p.sum(axis=1)) for (xx, _), p in self.data.items() if xx == x]
        if not vals:
            raise IncompleteData(f"no correlations for x={x}")
        return float(np.mean(vals))

    def bob_marginal(self, y: int) -> np.ndarray:
        vals = [p.sum(axis=0) for (_, yy), p in self.data.items() if yy == y]
        if not vals:
            raise IncompleteData(f"no correlations for y={y}")
        return np.mean(vals, axis=0)

    def normalization_residual(self) -> float:
        return max(abs(p.sum() - 1) for p in self.data.values())

    def no_signaling_residual(self) -> float:
        worst = 0.0
        for x in self.alice_inputs:
            margs = [p.sum(axis=1) for (xx, _), p in self.data.items() if xx == x]
            worst = max(worst, max(np.abs(m - margs[0]).max() for m in margs))
        for y in self.bob_inputs:
            margs = [p.sum(axis=0) for (_, yy), p in self.data.items() if yy == y]
            worst = max(worst, max(np.abs(m - margs[0]).max() for m in margs))
        return float(worst)

    def max_deviation(self, other: "CorrelationTable") -> float:
        if set(self.data) != set(other.data):
            raise IncompleteData("tables cover different inputs")
        return float(max(np.abs(self.data[k] - other.data[k]).max() for k in self.data))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y", "a", "b", "p"])
        for (x, y) in sorted(self.data):
            p = self.data[(x, y)]
            for a in range(p.shape[0]):
                for b in range(p.shape[1]):
                    writer.writerow([x, y, a, b, repr(float(p[a, b]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CorrelationTable":
        entries: dict[tuple[int, int], dict[tuple[int, int], float]] = {}
        try:
            for row in csv.DictReader(io.StringIO(text)):
                key = (int(row["x"]), int(row["y"]))
                entries.setdefault(key, {})[(int(row["a"]), int(row["b"]))] = float(row["p"])
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidInput(f"malformed correlation CSV: {exc}") from exc
        data = {}
        for key, cells in entries.items():
            nb = max(b for _, b in cells) + 1
            arr = np.zeros((2, nb))
            for (a, b), v in cells.items():
                arr[a, b] = v
            data[key] = arr
        return cls(data)


def dichotomic_projectors(obs: np.ndarray) -> list[np.ndarray]:
    return [(I2 + obs) / 2, (I2 - obs) / 2]


def bob_observables(theta_meas: float) -> tuple[np.ndarray, np.ndarray]:
    mu = math.atan(math.sin(theta_meas))
    b0 = math.cos(mu) * PAULI[2] + math.sin(mu) * PAULI[0]
    b1 = math.cos(mu) * PAULI[2] - math.sin(mu) * PAULI[0]
    return b0, b1


def born_table(
    rho: np.ndarray,
    alice: Mapping[int, Sequence[np.ndarray]],
    bob: Mapping[int, Sequence[np.ndarray]],
) -> CorrelationTable:
    data = {}
    for x, pa in alice.items():
        for y, pb in bob.items():
            data[(x, y)] = np.array(
                [[np.real(np.trace(rho @ np.kron(ea, eb))) for eb in pb] for ea in pa]
            )
    return CorrelationTable(data)


def protocol_correlations(
    theta_state: float,
    theta_meas: float | None = None,
    noise: NoiseModel | None = None,
    povm: RankOnePOVM | None = None,
    alice_inputs: Iterable[int] = (1, 3),
) -> CorrelationTable:
    """Born-rule table of the ideal protocol measurements on the model state."""
    theta_meas = theta_state if theta_meas is None else theta_meas
    povm = povm or triangular_povm()
    rho = noisy_state(theta_state, noise).rho
    alice = {x: dichotomic_projectors(PAULI[x - 1]) for x in alice_inputs}
    b0, b1 = bob_observables(theta_meas)
    bob = {0: dichotomic_projectors(b0), 1: dichotomic_projectors(b1), POVM_INPUT: povm.matrices}
    return born_table(rho, alice, bob)


# --------------------------------------------------------------------------- tilted CHSH


def alpha_for_theta(theta: float) -> float:
    return 2 * math.cos(theta) / math.sqrt(1 + math.sin(theta) ** 2)


def quantum_max(alpha: float) -> float:
    return math.sqrt(8 + 2 * alpha * alpha)


def chsh_value(corr: CorrelationTable) -> float:
    return corr.correlator(3, 0) + corr.correlator(3, 1) + corr.correlator(1, 0) - corr.correlator(1, 1)


def tilted_chsh(corr: CorrelationTable, alpha: float) -> float:
    return alpha * corr.alice_expectation(3) + chsh_value(corr)


def _golden_section(f, lo: float, hi: float, tol: float = 1e-9) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2


def fit_theta(i_alpha: float, a3: float | None = None, tol: float = 1e-9) -> float:
    """State angle whose tilted-CHSH bound is closest to, and not below, ``i_alpha``.

    The bound is symmetric under theta -> pi - theta; one candidate is found
    on each half of (0, pi) and the one whose cos(theta) is closest to
    ``a3`` wins. Without ``a3`` the (0, pi/2] branch is returned.
    """
    eps = 1e-12
    if i_alpha >= 4 - eps:
        raise FitError(f"<I_alpha> = {i_alpha} is not below the bound for any theta in (0, pi)")

    def objective(theta: float) -> float:
        gap = quantum_max(alpha_for_theta(theta)) - i_alpha
        return gap if gap >= 0 else 1e3 - gap

    if i_alpha <= SQRT8:
        return math.pi / 2
    candidates = [
        _golden_section(objective, eps, math.pi / 2, tol),
        _golden_section(objective, math.pi / 2, math.pi - eps, tol),
    ]
    if a3 is None:
        return candidates[0]
    return min(candidates, key=lambda t: abs(math.cos(t) - a3))


def fit_theta_from_chsh(chsh: float, a3: float, tol: float = 1e-9) -> float:
    """Minimize sqrt(8 + 2 alpha^2) - alpha <A_3> - <S_CHSH> over theta.

    Here the tilted value is recomputed from the data for each candidate
    theta, so no branch ambiguity arises.
    """
    if not -1 < a3 < 1:
        raise FitError(f"<A_3> = {a3} leaves no admissible theta")

    def gap(theta: float) -> float:
        alpha = alpha_for_theta(theta)
        return quantum_max(alpha) - alpha * a3 - chsh

    theta = _golden_section(gap, 1e-12, math.pi - 1e-12, tol)
    if gap(theta) < -1e-9:
        raise FitError(f"data violate the tilted CHSH bound by {-gap(theta):.3g}")
    return theta


# --------------------------------------------------------------------------- experiment records


@dataclass
class ExperimentRecord:
    theta: float
    i_alpha: float
    s: float
    a3: float
    chsh: float
    approximate: bool = False
    reference: dict = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        return alpha_for_theta(self.theta)

    def consistent(self) -> bool:
        return self.i_alpha <= quantum_max(self.alpha) + 1e-9 and self.s <= 1 + 1e-12


def record_from_row(row: Mapping[str, str]) -> ExperimentRecord:
    """Build a record from a CSV row with columns theta?, I_alpha, S, A3?.

    A missing theta is fitted; a missing A3 is replaced by cos(theta) and the
    record is flagged approximate.
    """

    def get(name):
        v = row.get(name)
        return None if v is None or str(v).strip() == "" else float(v)

    i_alpha, s = get("I_alpha"), get("S")
    if i_alpha is None or s is None:
        raise InvalidInput("rows need I_alpha and S")
    a3, theta = get("A3"), get("theta")
    if theta is None:
        theta = fit_theta(i_alpha, a3)
    approximate = a3 is None
    if a3 is None:
        a3 = math.cos(theta)
    chsh = i_alpha - alpha_for_theta(theta) * a3
    reference = {k: float(v) for k, v in row.items() if k in ("H_min", "H") and v not in (None, "")}
    return ExperimentRecord(theta, i_alpha, s, a3, chsh, approximate, reference)


def read_experiment_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
