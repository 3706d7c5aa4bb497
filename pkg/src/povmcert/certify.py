"""Randomness certificates from Bell-type constraints.

Two device-independent quantities are computed from the moment relaxations
in :mod:`povmcert.npa`:

* the guessing probability ``p_g`` and the min-entropy ``-log2 p_g``;
* a lower bound on the conditional von Neumann entropy H(B|E), obtained from
  one minimization per Gauss-Radau node (Brown-Fawzi-Fawzi construction).

Every certified number is taken from the dual (outer) side of the SDP, so it
is an upper bound on ``p_g`` or a lower bound on the entropy. The module also
holds the closed forms available for the ideal protocol: the guessing
probability of an extremal POVM, the outcome Shannon entropy, the square-POVM
formulas and explicit finite-dimensional Eve strategies.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DomainError, InfeasibleConstraints, NotApplicable, SolverError
from .npa import ConstraintSet, NPAScenario, assemble_bff_sdp, assemble_guessing_sdp
from .quadrature import QuadratureSpec, gauss_radau
from .qubit import KET0, KET1, KET_MINUS, KET_PLUS, RankOnePOVM, extremality_check, phi_theta, phi_theta_ket, projector
from .scenario import (
    POVM_INPUT,
    CorrelationTable,
    NoiseModel,
    bob_observables,
    born_table,
    dichotomic_projectors,
    fit_theta_from_chsh,
    noisy_state,
    protocol_correlations,
    chsh_value,
    square_povm,
)
from .sdp import INFEASIBLE, OPTIMAL, Solution, SolverConfig, solve_robust
from .tsirelson import alice_operators, derive_coefficients

__all__ = [
    "QuadratureSpec",
    "gauss_radau",
    "CertificateResult",
    "min_entropy",
    "von_neumann_lb",
    "constraints_from_table",
    "certify_table",
    "certify_record",
    "pg_extremal_ideal",
    "shannon_outcomes",
    "square_pg_boundary",
    "square_pg_full",
    "StrategyCheck",
    "verify_eve_strategy_boundary",
    "verify_eve_strategy_full",
]

# The outer bound only needs the certificate X to be feasible; the gap says
# how tight it is. A solve that stopped short of tolerance is still reported
# when X satisfies its equalities to APPROX_INFEAS and the gap is below
# APPROX_GAP. The result is then flagged approximate.
APPROX_GAP = 1e-2
APPROX_INFEAS = 1e-5
RETRY_DAMPING = 0.9

MODE_LABELS = {
    "boundary": "boundary-only",
    "standard": "boundary+chsh+marginal",
    "full": "full-correlations",
    "custom": "custom",
}


@dataclass
class CertificateResult:
    """Outcome of a certification run.

    ``p_g`` and ``h_min`` come from the dual bound of the guessing program;
    ``p_g_inner`` is the matching primal value, kept for comparison only.
    ``h_vn`` is the quadrature lower bound on H(B|E).
    """

    d: int
    level: int
    mode: str
    constraints: dict
    p_g: float | None = None
    p_g_inner: float | None = None
    h_min: float | None = None
    h_vn: float | None = None
    h_vn_inner: float | None = None
    m: int | None = None
    approximate: bool = False
    diagnostics: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def mode_label(self) -> str:
        return MODE_LABELS.get(self.mode, self.mode)

    def merge(self, other: "CertificateResult") -> "CertificateResult":
        """Combine a guessing result with an entropy result on the same constraints."""
        out = CertificateResult(self.d, self.level, self.mode, dict(self.constraints))
        for src in (self, other):
            for name in ("p_g", "p_g_inner", "h_min", "h_vn", "h_vn_inner", "m"):
                if getattr(src, name) is not None:
                    setattr(out, name, getattr(src, name))
        out.approximate = self.approximate or other.approximate
        out.diagnostics = self.diagnostics + other.diagnostics
        out.notes = self.notes + other.notes
        return out

    def to_dict(self) -> dict:
        data = asdict(self)
        data["mode_label"] = self.mode_label
        return data

    def to_json(self, **extra) -> str:
        data = self.to_dict()
        data.update(extra)
        return json.dumps(data, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _usable(sol: Solution) -> bool:
    return sol.status == OPTIMAL or bool(
        np.isfinite(sol.dual_value) and sol.gap <= APPROX_GAP and sol.dual_infeasibility <= APPROX_INFEAS
    )


def _check(sol: Solution, what: str) -> bool:
    """Return True when the solution is only approximately converged."""
    if sol.status == INFEASIBLE:
        raise InfeasibleConstraints(f"{what}: {sol.message}", sol)
    if sol.status == OPTIMAL:
        return False
    if not _usable(sol):
        raise SolverError(f"{what}: solver returned {sol.status} ({sol.message}), gap {sol.gap:.2e}", sol)
    return True


def _diag(sol: Solution, **labels) -> dict:
    out = dict(labels)
    out.update(sol.summary())
    return out


def min_entropy(
    constraints: ConstraintSet,
    level: int = 2,
    d: int = 3,
    config: SolverConfig | None = None,
    scenario: NPAScenario | None = None,
) -> CertificateResult:
    """Guessing probability and min-entropy of Bob's POVM outcome.

    Raises
    ------
    InfeasibleConstraints
        When no moment matrix matches the targets.
    SolverError
        When the solver fails to produce a usable bound.
    """
    prob, _ = assemble_guessing_sdp(constraints, level, d, scenario)
    sol = solve_robust(prob, config)
    approx = _check(sol, "guessing program")
    p_g = float(np.clip(sol.dual_value, 1.0 / d, 1.0))
    res = CertificateResult(d, level, constraints.mode, constraints.targets())
    res.p_g = p_g
    res.p_g_inner = float(sol.primal_value)
    res.h_min = max(0.0, -math.log2(p_g))
    res.approximate = approx
    res.diagnostics.append(_diag(sol, program="guessing", level=level))
    if approx:
        res.notes.append("guessing program stopped short of tolerance; bound is approximate")
    if sol.relaxation:
        res.notes.append(f"moment matrix relaxed by {sol.relaxation:g} I (degenerate constraints)")
    return res


def _bff_node(args):
    constraints, level, t, d, extras, config, scenario = args
    prob, _ = assemble_bff_sdp(constraints, level, t, d, extras, scenario)
    sol = solve_robust(prob, config)
    if sol.status in (OPTIMAL, INFEASIBLE) or _usable(sol):
        return sol
    # Stalls on degenerate nodes depend on the step length; one gentler
    # restart often ends with a usable certificate.
    cfg = replace(config or SolverConfig(), step_damping=RETRY_DAMPING)
    retry = solve_robust(prob, cfg)
    retry.message += f" (restarted with step damping {RETRY_DAMPING}; first run gap {sol.gap:.1e})"
    return retry if _usable(retry) or retry.gap < sol.gap else sol


def von_neumann_lb(
    constraints: ConstraintSet,
    level: int = 2,
    m: int = 8,
    d: int = 3,
    config: SolverConfig | None = None,
    extras=None,
    scenario: NPAScenario | None = None,
    workers: int = 1,
) -> CertificateResult:
    """Lower bound H(B|E) >= c_m + sum_{i<m} w_i / (t_i ln 2) * inf_i.

    One minimization runs per node t_i < 1; the last Radau node carries no
    program. With ``workers > 1`` the nodes are solved in a process pool;
    results are collected in node order either way.
    """
    quad = gauss_radau(m)
    nodes = [float(t) for t in quad.nodes[:-1]]
    jobs = [(constraints, level, t, d, extras, config, scenario) for t in nodes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(_bff_node, jobs))
    else:
        sols = [_bff_node(job) for job in jobs]

    res = CertificateResult(d, level, constraints.mode, constraints.targets(), m=m)
    outer = inner = quad.c_m
    for i, (t, sol) in enumerate(zip(nodes, sols)):
        approx = _check(sol, f"entropy node t={t:.4f}")
        res.approximate |= approx
        scale = quad.weights[i] / (t * math.log(2))
        outer += scale * sol.dual_value
        inner += scale * sol.primal_value
        res.diagnostics.append(_diag(sol, program="bff", node=i, t=t, weight=float(quad.weights[i])))
    top = math.log2(d)
    res.h_vn = float(np.clip(outer, 0.0, top))
    res.h_vn_inner = float(np.clip(inner, 0.0, top))
    if res.approximate:
        res.notes.append("some entropy nodes stopped short of tolerance; bound is approximate")
    return res


# --------------------------------------------------------------------------- tables


def constraints_from_table(
    corr: CorrelationTable,
    povm: RankOnePOVM,
    mode: str,
    theta: float | None = None,
    sigma2_branch: int = 1,
) -> tuple[ConstraintSet, float]:
    """Constraint set for a measured table plus the angle used for the coefficients.

    The boundary coefficients depend on the state angle. Unless given, it is
    fitted from the table's CHSH value and <A_3>, never taken from the source
    settings.
    """
    scen = NPAScenario(povm.d)
    if theta is None:
        theta = fit_theta_from_chsh(chsh_value(corr), corr.alice_expectation(3))
    n = None if mode == "full" else derive_coefficients(theta, povm, sigma2_branch).n
    return ConstraintSet.from_table(scen, corr, mode, n), float(theta)


def certify_table(
    corr: CorrelationTable,
    povm: RankOnePOVM,
    mode: str = "boundary",
    level: int = 2,
    m: int | None = None,
    theta: float | None = None,
    config: SolverConfig | None = None,
    sigma2_branch: int = 1,
    workers: int = 1,
    extras=None,
) -> CertificateResult:
    """Min-entropy, and with ``m`` also the von Neumann bound, for a table.

    ``extras`` is forwarded to :func:`von_neumann_lb` (default: Pi_b Z_b).
    """
    cs, theta_fit = constraints_from_table(corr, povm, mode, theta, sigma2_branch)
    res = min_entropy(cs, level, povm.d, config)
    if m is not None:
        res = res.merge(von_neumann_lb(cs, level, m, povm.d, config, extras, workers=workers))
    res.notes.append(f"boundary coefficients evaluated at theta={theta_fit:.9f}")
    return res


# --------------------------------------------------------------------------- closed forms


def pg_extremal_ideal(theta: float, povm: RankOnePOVM) -> float:
    """max_b Tr[F_b rho_B] for the ideal state; valid for extremal POVMs only."""
    if not extremality_check(povm).extremal:
        raise NotApplicable("the ideal-point formula needs an extremal POVM")
    rho_b = phi_theta(theta).reduced_bob()
    return max(float(np.real(np.trace(f @ rho_b))) for f in povm.matrices)


def shannon_outcomes(theta: float, povm: RankOnePOVM, noise: NoiseModel | None = None) -> float:
    """Shannon entropy in bits of the POVM outcome on the (noisy) reduced state."""
    rho_b = noisy_state(theta, noise).reduced_bob()
    p = np.array([np.real(np.trace(f @ rho_b)) for f in povm.matrices])
    p = p[p > 1e-300]
    return float(-(p * np.log2(p)).sum())


def _check_theta(theta: float) -> None:
    if not 0 < theta < math.pi:
        raise DomainError(f"state angle must lie in (0, pi), got {theta!r}")


def square_pg_boundary(theta: float) -> float:
    """1/2 + |cos theta|/2: boundary-only guessing probability for the square POVM."""
    _check_theta(theta)
    return 0.5 + abs(math.cos(theta)) / 2


def square_pg_full(theta: float) -> float:
    """1/2 + |cos theta|/4: full-correlation guessing probability for the square POVM."""
    _check_theta(theta)
    return 0.5 + abs(math.cos(theta)) / 4


@dataclass
class StrategyCheck:
    """Exact evaluation of an explicit eavesdropping strategy."""

    p_g: float
    guess: int  # Eve's guess when she holds no quantum side information
    bell_value: float  # <S> of the strategy
    table_deviation: float  # max deviation from the reference correlations
    note: str = ""


def _guess_index(theta: float) -> tuple[int, str]:
    c = math.cos(theta)
    if abs(c) < 1e-15:
        return 2, "tie at theta=pi/2: outcomes 2 and 3 equally likely, bet on 2"
    return (2 if c > 0 else 3), ""


def _alice_ops() -> dict:
    sx, _, sz = alice_operators()
    return {1: dichotomic_projectors(sx), 3: dichotomic_projectors(sz)}


def verify_eve_strategy_boundary(theta: float) -> StrategyCheck:
    """Strategy saturating 1/2 + |cos theta|/2 under boundary-only constraints.

    Eve prepares the ideal state and programs Bob's four-outcome device as
    {0, 0, |0><0|, |1><1|}; the CHSH devices stay ideal. The check confirms
    <S> = 1 with the square-POVM coefficients, the CHSH blocks and <A_3> of
    the ideal table, and returns the probability that Eve's deterministic
    bet is right.
    """
    _check_theta(theta)
    povm = square_povm()
    pis = [np.zeros((2, 2), dtype=complex), np.zeros((2, 2), dtype=complex), projector(KET0), projector(KET1)]
    rho = phi_theta(theta).rho
    coeffs = derive_coefficients(theta, povm)
    alice = alice_operators()
    bell = sum(
        coeffs.n[b, j] * np.kron(alice[j], pis[b]) for b in range(4) for j in range(3)
    )
    s_value = float(np.real(np.trace(rho @ bell)))

    b0, b1 = bob_observables(theta)
    bob = {0: dichotomic_projectors(b0), 1: dichotomic_projectors(b1)}
    ref = protocol_correlations(theta, povm=povm)
    model = born_table(rho, _alice_ops(), bob)
    dev = max(float(np.abs(model.block(x, y) - ref.block(x, y)).max()) for x in (1, 3) for y in (0, 1))

    guess, note = _guess_index(theta)
    p_g = float(np.real(np.trace(rho @ np.kron(np.eye(2), pis[guess]))))
    return StrategyCheck(p_g, guess, s_value, dev, note)


def verify_eve_strategy_full(theta: float) -> StrategyCheck:
    """Strategy reaching 1/2 + |cos theta|/4 with the whole table fixed.

    Bob holds B (x) B' and measures {|+><+| (x) |0><0|, |-><-| (x) |0><0|,
    |0><0| (x) |1><1|, |1><1| (x) |1><1|}. B' is maximally entangled with
    Eve's qubit E, so on Alice-Bob the device acts as the square POVM. Eve
    measures E with {|0><0|, 0, chi |1><1|, (1 - chi) |1><1|}, where chi
    selects the likelier of outcomes 2 and 3.
    """
    _check_theta(theta)
    i2 = np.eye(2)
    p0, p1 = projector(KET0), projector(KET1)
    pis = [
        np.kron(projector(KET_PLUS), p0),
        np.kron(projector(KET_MINUS), p0),
        np.kron(p0, p1),
        np.kron(p1, p1),
    ]
    phi_plus = (np.kron(KET0, KET0) + np.kron(KET1, KET1)) / math.sqrt(2)
    # ordering A, B, B', E
    psi = np.kron(phi_theta_ket(theta), phi_plus)
    rho = np.outer(psi, psi.conj())

    guess, note = _guess_index(theta)
    chi = 1.0 if guess == 2 else 0.0
    eve = [p0, np.zeros((2, 2)), chi * p1, (1 - chi) * p1]
    p_g = float(sum(np.real(np.trace(rho @ np.kron(i2, np.kron(pis[b], eve[b])))) for b in range(4)))

    # Alice-Bob table with B' and E traced out, in the A (x) (B B') ordering.
    rho_ab = _trace_last(rho, 8, 2)
    b0, b1 = bob_observables(theta)
    bob = {
        0: [np.kron(p, i2) for p in dichotomic_projectors(b0)],
        1: [np.kron(p, i2) for p in dichotomic_projectors(b1)],
        POVM_INPUT: pis,
    }
    model = born_table(rho_ab, _alice_ops(), bob)
    ref = protocol_correlations(theta, povm=square_povm())
    dev = max(float(np.abs(model.block(x, y) - ref.block(x, y)).max()) for x in (1, 3) for y in (0, 1, POVM_INPUT))

    coeffs = derive_coefficients(theta, square_povm())
    alice = alice_operators()
    bell = sum(coeffs.n[b, j] * np.kron(alice[j], pis[b]) for b in range(4) for j in range(3))
    s_value = float(np.real(np.trace(rho_ab @ bell)))
    return StrategyCheck(p_g, guess, s_value, dev, note)


def _trace_last(rho: np.ndarray, keep: int, drop: int) -> np.ndarray:
    return np.einsum("iaja->ij", rho.reshape(keep, drop, keep, drop))


def certify_record(
    record,
    povm: RankOnePOVM,
    level: int = 2,
    m: int | None = None,
    config: SolverConfig | None = None,
    sigma2_branch: int = 1,
    workers: int = 1,
    extras=None,
) -> CertificateResult:
    """Boundary-only certificate for an :class:`~povmcert.scenario.ExperimentRecord`.

    A record carries <S_CHSH>, <A_3> and <S> only, so this is always the
    boundary constraint mode.
    """
    scen = NPAScenario(povm.d)
    n = derive_coefficients(record.theta, povm, sigma2_branch).n
    cs = ConstraintSet.boundary(scen, n, record.chsh, record.a3, record.s)
    res = min_entropy(cs, level, povm.d, config)
    if m is not None:
        res = res.merge(von_neumann_lb(cs, level, m, povm.d, config, extras, workers=workers))
    if record.approximate:
        res.approximate = True
        res.notes.append("<A_3> not supplied; cos(theta) substituted")
    return res
