"""Primal-dual interior-point solver for small dense SDPs.

Problems arrive as LMIs ``F0 + sum_k y_k F_k >= 0`` with linear equalities
``E y = f`` (see :class:`povmcert.npa.SDPProblem`). Equalities are removed by
pivoted-QR elimination, ``y = y0 + N z``, which leaves the standard pair

    (P)  min <C, X>   s.t.  <A_i, X> = b_i,  X >= 0
    (D)  max b . z    s.t.  C - sum_i z_i A_i = S >= 0

with ``C = F0 + F(y0)`` and ``A_i = -sum_k N_ki F_k``. (D) is the moment
problem itself, so its value is the inner bound; a primal X yields the outer
(certified) bound. The method is an infeasible-start path-following scheme
with Mehrotra's predictor-corrector and either the NT or HKM direction.
``precision="dd"`` runs the HKM variant in double-double arithmetic
(:mod:`povmcert.extended`) for small problems without a strictly feasible
moment matrix.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import InvalidInput

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
ITERATION_LIMIT = "IterationLimit"
NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    step_damping: float = 0.98
    direction: str = "nt"  # "nt" (Nesterov-Todd) or "hkm"
    precision: str = "double"  # or "dd" (double-double, HKM only)
    verbose: bool = False

    def __post_init__(self):
        if not (self.feas_tol > 0 and self.gap_tol > 0):
            raise InvalidInput("solver tolerances must be positive")
        if not 0 < self.step_damping < 1:
            raise InvalidInput("step damping must lie in (0, 1)")
        if self.direction not in ("nt", "hkm"):
            raise InvalidInput("direction must be 'nt' or 'hkm'")
        if self.precision not in ("double", "dd"):
            raise InvalidInput("precision must be 'double' or 'dd'")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be positive")


@dataclass
class Solution:
    """Solver outcome in the sense of the original problem.

    ``primal_value`` is the objective at the returned moment vector ``y``
    (inner bound); ``dual_value`` is the value certified by the matrix ``X``
    (outer bound: an upper bound for maximization, a lower bound for
    minimization).
    """

    status: str
    sense: str
    primal_value: float
    dual_value: float
    gap: float
    iterations: int
    y: np.ndarray
    X: np.ndarray
    S: np.ndarray
    primal_infeasibility: float
    dual_infeasibility: float
    message: str = ""
    seconds: float = 0.0
    history: list = field(default_factory=list, repr=False)
    precision: str = "double"
    relaxation: float = 0.0  # eps when the LMI was solved as M(y) + eps I >= 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def safe_bound(self) -> float:
        """Outer bound from the dual certificate X."""
        return self.dual_value

    def summary(self) -> dict:
        return {
            "status": self.status,
            "sense": self.sense,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "primal_infeasibility": self.primal_infeasibility,
            "dual_infeasibility": self.dual_infeasibility,
            "message": self.message,
            "seconds": round(self.seconds, 3),
            "precision": self.precision,
            "relaxation": self.relaxation,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


@dataclass
class ReducedProblem:
    """Standard-form data after equality elimination."""

    n: int
    C: np.ndarray  # dense symmetric
    A: sp.csc_matrix  # (n*n, m): column i is vec(A_i), both triangles
    b: np.ndarray
    y0: np.ndarray
    N: sp.csr_matrix  # y = y0 + N z
    offset: float  # objective = sign * (b.z) + offset
    sign: float  # +1 for max, -1 for min
    block_sizes: tuple

    @property
    def m(self) -> int:
        return self.A.shape[1]


def _flat_structure(problem) -> tuple[sp.csc_matrix, np.ndarray]:
    """vec(F_k) as sparse columns and the dense F0, symmetric completion."""
    n = problem.size
    off = problem.row != problem.col
    rows = np.concatenate([problem.row * n + problem.col, (problem.col * n + problem.row)[off]])
    vals = np.concatenate([problem.val, problem.val[off]])
    cols = np.concatenate([problem.var, problem.var[off]])
    F = sp.csc_matrix((vals, (rows, cols)), shape=(n * n, problem.nvars))
    F.sum_duplicates()
    F0 = np.zeros((n, n))
    for i, j, x in problem.const:
        F0[i, j] += x
        if i != j:
            F0[j, i] += x
    return F, F0


class EliminatedProblem:
    """A problem with equalities removed, exposed in SDPProblem-like form."""

    def __init__(self, base, red: ReducedProblem):
        self.base = base
        self.red = red

    @property
    def nvars(self):
        return self.red.m

    @property
    def block_sizes(self):
        return self.red.block_sizes

    @property
    def c(self):
        # LMI in z: C + sum z_i (-A_i) >= 0, maximize sign * b.z
        return self.red.sign * self.red.b

    @property
    def c0(self):
        return self.red.offset

    @property
    def const(self):
        C = self.red.C
        i, j = np.nonzero(np.triu(C))
        return [(int(a), int(b_), float(C[a, b_])) for a, b_ in zip(i, j)]

    @property
    def _entries(self):
        n = self.red.n
        A = (-self.red.A).tocoo()
        r, c = np.divmod(A.row, n)
        keep = r <= c
        return A.col[keep], r[keep], c[keep], A.data[keep]

    @property
    def var(self):
        return self._entries[0]

    @property
    def row(self):
        return self._entries[1]

    @property
    def col(self):
        return self._entries[2]

    @property
    def val(self):
        return self._entries[3]


def eliminate_equalities(problem) -> EliminatedProblem:
    return EliminatedProblem(problem, reduce_problem(problem))


class _Infeasible(Exception):
    pass


def reduce_problem(problem) -> ReducedProblem:
    F, F0 = _flat_structure(problem)
    nv = problem.nvars
    E, f = problem.eq_matrix, problem.eq_rhs
    sign = 1.0 if problem.sense == "max" else -1.0
    if E.shape[0] == 0:
        y0 = np.zeros(nv)
        N = sp.identity(nv, format="csr")
    else:
        Q, R, P = sla.qr(E, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank_tol = getattr(problem, "eq_rank_tol", 1e-12)
        tol = max(rank_tol, max(E.shape) * np.finfo(float).eps * 100) * (diag[0] if len(diag) else 0.0)
        r = int((diag > tol).sum())
        piv, free = P[:r], P[r:]
        R11, R12 = R[:r, :r], R[:r, r:]
        qtf = Q[:, :r].T @ f
        y0 = np.zeros(nv)
        y0[piv] = sla.solve_triangular(R11, qtf)
        resid = float(np.abs(E @ y0 - f).max())
        if resid > getattr(problem, "eq_consistency_tol", 1e-9) * (1 + np.abs(f).max()):
            raise _Infeasible(f"equality constraints are inconsistent (residual {resid:.2e})")
        T = -sla.solve_triangular(R11, R12) if r else np.zeros((0, len(free)))
        T[np.abs(T) < 1e-15] = 0.0
        Tc = sp.coo_matrix(T)
        rows = np.concatenate([free, piv[Tc.row]])
        cols = np.concatenate([np.arange(len(free)), Tc.col])
        vals = np.concatenate([np.ones(len(free)), Tc.data])
        N = sp.csr_matrix((vals, (rows, cols)), shape=(nv, len(free)))
    n = problem.size
    C = F0 + (F @ y0).reshape(n, n)
    A = (-(F @ N)).tocsc()
    A.eliminate_zeros()
    b = sign * (N.T @ problem.c)
    offset = float(problem.c @ y0 + problem.c0)
    return ReducedProblem(n, C, A, np.asarray(b).ravel(), y0, N, offset, sign, tuple(problem.block_sizes))


# --------------------------------------------------------------------------
# interior point


def _max_step(X: np.ndarray, D: np.ndarray) -> float:
    """Largest a with X + a D >= 0 (X positive definite)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    W = sla.solve_triangular(L, D, lower=True)
    W = sla.solve_triangular(L, W.T, lower=True)
    lam = np.linalg.eigvalsh((W + W.T) / 2)[0]
    return math.inf if lam >= 0 else -1.0 / lam


class _Schur:
    """Assembles M_ij = <A_i, X A_j S^-1> column by column."""

    def __init__(self, A: sp.csc_matrix, n: int):
        self.A = A
        self.AT = A.T.tocsr()
        self.n = n
        self.cols = []
        for i in range(A.shape[1]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            r, c = np.divmod(A.indices[lo:hi], n)
            self.cols.append((r, c, A.data[lo:hi]))

    def build(self, X: np.ndarray, Sinv: np.ndarray) -> np.ndarray:
        m = self.A.shape[1]
        M = np.empty((m, m))
        for i, (r, c, v) in enumerate(self.cols):
            G = (X[:, r] * v) @ Sinv[c, :]
            M[:, i] = self.AT @ G.ravel()
        return (M + M.T) / 2




@dataclass
class _Run:
    status: str
    message: str
    X: np.ndarray
    S: np.ndarray
    z: np.ndarray
    iterations: int
    pobj: float
    dobj: float
    pinf: float
    dinf: float
    relgap: float
    history: list


def _ipm(C: np.ndarray, A: sp.csc_matrix, b: np.ndarray, cfg: SolverConfig) -> _Run:
    """min <C,X> s.t. A(X) = b, X >= 0  and its dual max b.z, C - A^T z >= 0."""
    n, m = C.shape[0], A.shape[1]
    AT = A.T.tocsr()

    def Aop(X):
        return AT @ X.ravel()

    def ATop(z):
        return (A @ z).reshape(n, n)

    normC = np.linalg.norm(C)
    normb = np.linalg.norm(b)
    normA = np.sqrt(np.asarray(A.multiply(A).sum(axis=0))).ravel() if m else np.zeros(0)
    xi = max(10.0, math.sqrt(n), n * max(((1 + np.abs(b)) / (1 + normA)).max(initial=0.0), 1.0))
    eta = max(10.0, math.sqrt(n), normC, normA.max(initial=0.0))
    X = xi * np.eye(n)
    S = eta * np.eye(n)
    z = np.zeros(m)
    schur = _Schur(A, n) if m else None
    gram = _factor((AT @ A).toarray()) if m else None
    gamma = cfg.step_damping
    history: list = []
    status, message = ITERATION_LIMIT, "iteration limit reached"
    best = None

    def measures(X, S, z):
        Rp = b - Aop(X)
        Rd = C - S - ATop(z)
        pobj = float(np.vdot(C, X))
        dobj = float(b @ z)
        pinf = float(np.linalg.norm(Rp) / (1 + normb))
        dinf = float(np.linalg.norm(Rd) / (1 + normC))
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        return Rp, Rd, pobj, dobj, pinf, dinf, relgap

    it = 0
    for it in range(1, cfg.max_iter + 1):
        Rp, Rd, pobj, dobj, pinf, dinf, relgap = measures(X, S, z)
        mu = float(np.vdot(X, S)) / n
        history.append((pobj, dobj, pinf, dinf, relgap))
        if cfg.verbose:
            log.info("it %3d pobj %+.9e dobj %+.9e gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, relgap, pinf, dinf)
        score = max(relgap, pinf, dinf)
        if best is None or score < best[0]:
            best = (score, it, X.copy(), S.copy(), z.copy())
        if relgap <= cfg.gap_tol and pinf <= cfg.feas_tol and dinf <= cfg.feas_tol:
            status, message = OPTIMAL, "converged"
            break
        # infeasibility certificates: a large X with negative cost and nearly
        # homogeneous constraints, or a large z with improving ray
        if pobj < 0 and np.linalg.norm(X) > 1e8 and normb / -pobj < 1e-8:
            status, message = INFEASIBLE, "moment constraints admit no PSD completion"
            break
        if dobj > 1e8 * (1 + normC) and dinf * (1 + normC) / dobj < 1e-8:
            status, message = UNBOUNDED, "objective unbounded on the feasible set"
            break
        try:
            if cfg.direction == "nt":
                step = _nt_directions(X, S, Rp, Rd, mu, Aop, ATop, schur, gram, m, gamma)
            else:
                step = _hkm_directions(X, S, Rp, Rd, mu, Aop, ATop, schur, gram, m, gamma)
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            status, message = NUMERICAL_FAILURE, f"factorization failed: {exc}"
            break
        dX, dS, dz, sigma = step
        ap = min(1.0, gamma * _max_step(X, dX))
        ad = min(1.0, gamma * _max_step(S, dS))
        if cfg.verbose:
            log.info("    mu %.2e sigma %.2e ap %.3f ad %.3f", mu, sigma, ap, ad)
        if ap < 1e-12 and ad < 1e-12:
            status, message = NUMERICAL_FAILURE, "step length collapsed"
            break
        X = X + ap * dX
        X = (X + X.T) / 2
        S = S + ad * dS
        S = (S + S.T) / 2
        z = z + ad * dz
        if score > 1e3 * best[0] and it - best[1] > 5:
            status, message = NUMERICAL_FAILURE, "progress stalled; returning the best iterate"
            break

    if status not in (OPTIMAL, INFEASIBLE, UNBOUNDED) and best is not None:
        _, _, X, S, z = best
    _, _, pobj, dobj, pinf, dinf, relgap = measures(X, S, z)
    return _Run(status, message, X, S, z, it, pobj, dobj, pinf, dinf, relgap, history)


_RESTORE = True


def _restore(dX, Rp, Aop, ATop, gram, m):
    """Project dX so that A(dX) = Rp holds to rounding."""
    dX = (dX + dX.T) / 2
    if m and _RESTORE:
        dX = dX + ATop(sla.cho_solve(gram, Rp - Aop(dX)))
    return dX


def _sigma(X, S, dXa, dSa, mu, gamma):
    ap = min(1.0, gamma * _max_step(X, dXa))
    ad = min(1.0, gamma * _max_step(S, dSa))
    mu_aff = float(np.vdot(X + ap * dXa, S + ad * dSa)) / X.shape[0]
    return min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0


def _hkm_directions(X, S, Rp, Rd, mu, Aop, ATop, schur, gram, m, gamma):
    n = X.shape[0]
    Ls = np.linalg.cholesky(S)
    Linv = sla.solve_triangular(Ls, np.eye(n), lower=True)
    Sinv = Linv.T @ Linv
    cho = _factor(schur.build(X, Sinv)) if m else None
    base = Rp + Aop(X) + Aop(X @ Rd @ Sinv)

    def direction(rhs, extra):
        dz = sla.cho_solve(cho, rhs) if m else np.zeros(0)
        dS = Rd - ATop(dz)
        dX = _restore(extra - X @ dS @ Sinv, Rp, Aop, ATop, gram, m)
        return dX, dS, dz

    dXa, dSa, _ = direction(base, -X)
    sigma = _sigma(X, S, dXa, dSa, mu, gamma)
    cross = dXa @ dSa @ Sinv
    rhs = base - sigma * mu * Aop(Sinv) + Aop(cross)
    dX, dS, dz = direction(rhs, sigma * mu * Sinv - X - cross)
    return dX, dS, dz, sigma


def _nt_directions(X, S, Rp, Rd, mu, Aop, ATop, schur, gram, m, gamma):
    """Nesterov-Todd direction in the scaled space where X and S both equal
    diag(lam); the linearized complementarity is solved elementwise."""
    Lx = np.linalg.cholesky(X)
    Ls = np.linalg.cholesky(S)
    U, lam, Vt = np.linalg.svd(Ls.T @ Lx)
    G = Lx @ Vt.T / np.sqrt(lam)  # W = G G^T, G^-1 X G^-T = G^T S G = diag(lam)
    Ginv = (np.sqrt(lam)[:, None] * Vt) @ sla.solve_triangular(Lx, np.eye(len(lam)), lower=True)
    W = G @ G.T
    W = (W + W.T) / 2
    cho = _factor(schur.build(W, W)) if m else None
    lsum = lam[:, None] + lam[None, :]
    WRdW = W @ Rd @ W

    def direction(Rc_scaled):
        Rc = G @ Rc_scaled @ G.T
        rhs = Rp - Aop(Rc) + Aop(WRdW)
        dz = sla.cho_solve(cho, rhs) if m else np.zeros(0)
        dS = Rd - ATop(dz)
        dX = _restore(Rc - W @ dS @ W, Rp, Aop, ATop, gram, m)
        return dX, dS, dz

    dXa, dSa, _ = direction(-np.diag(lam))
    sigma = _sigma(X, S, dXa, dSa, mu, gamma)
    dXs = Ginv @ dXa @ Ginv.T
    dSs = G.T @ dSa @ G
    jordan = (dXs @ dSs + dSs @ dXs) / 2
    target = sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) - jordan
    dX, dS, dz = direction(2 * target / lsum)
    return dX, dS, dz, sigma


def _factor(M: np.ndarray):
    try:
        return sla.cho_factor(M, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        reg = 1e-12 * max(1.0, float(np.abs(np.diag(M)).max()))
        return sla.cho_factor(M + reg * np.eye(len(M)), lower=True, check_finite=False)


def solve(problem, config: SolverConfig | None = None) -> Solution:
    """Solve an SDPProblem; see the module docstring for the value conventions."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    try:
        red = reduce_problem(problem)
    except _Infeasible as exc:
        nan = float("nan")
        empty = np.zeros((problem.size, problem.size))
        return Solution(INFEASIBLE, problem.sense, nan, nan, nan, 0, np.full(problem.nvars, nan),
                        empty, empty, nan, nan, str(exc))
    if cfg.precision == "dd":
        from .extended import ipm_dd

        run = ipm_dd(red.C, red.A, red.b, cfg, log.info if cfg.verbose else None)
    else:
        run = _ipm(red.C, red.A, red.b, cfg)
    sol = _package(red, run)
    sol.precision = cfg.precision
    sol.seconds = time.perf_counter() - t0
    return sol


def relax_lmi(problem, eps: float):
    """Copy of ``problem`` with the LMI loosened to F(y) + eps I >= 0.

    The feasible set only grows, so the certified (outer) value of the
    relaxed problem is still a valid outer bound for the original one.
    """
    const = list(problem.const) + [(i, i, float(eps)) for i in range(problem.size)]
    return replace(problem, const=const)


def solve_robust(problem, config: SolverConfig | None = None, eps: float = 1e-16,
                 max_size: int = 80, max_vars: int = 600) -> Solution:
    """Solve in double precision, escalating when that does not converge.

    Moment problems whose constraints sit exactly on the quantum boundary
    have no strictly feasible moment matrix, and the double engine stalls
    with a gap around 1e-5. Small problems are then re-solved with the LMI
    loosened by ``eps`` (which restores a strict interior) in double-double
    arithmetic. The bias this adds to the outer bound is conservative and
    shrinks like a fractional power of eps.
    """
    cfg = config or SolverConfig()
    first = solve(problem, cfg)
    if first.status in (OPTIMAL, INFEASIBLE, UNBOUNDED) or problem.size > max_size or problem.nvars > max_vars:
        return first
    dd_cfg = replace(cfg, precision="dd", direction="hkm")
    second = solve(relax_lmi(problem, eps), dd_cfg)
    second.relaxation = eps
    second.seconds += first.seconds
    second.message = f"{second.message} (double run: {first.status}, gap {first.gap:.1e}; retried in double-double with eps={eps:g})"
    if second.status == INFEASIBLE or not np.isfinite(second.dual_value):
        return first
    return second


def _package(red: ReducedProblem, run: _Run) -> Solution:
    y = red.y0 + red.N @ run.z
    inner = red.sign * run.dobj + red.offset
    outer = red.sign * run.pobj + red.offset
    return Solution(
        status=run.status,
        sense="max" if red.sign > 0 else "min",
        primal_value=float(inner),
        dual_value=float(outer),
        gap=float(run.relgap),
        iterations=run.iterations,
        y=np.asarray(y).ravel(),
        X=run.X,
        S=run.S,
        primal_infeasibility=run.dinf,  # moment side (LMI)
        dual_infeasibility=run.pinf,  # certificate side (X)
        message=run.message,
        history=run.history,
    )
