"""Double-double interior point engine for small degenerate problems.

Moment problems pinned at an ideal Bell value have no strictly feasible
moment matrix. Interior-point iterates then need ever larger condition
numbers, and in plain double precision the Schur complement stops being
factorizable around a relative gap of 1e-5. Carrying X, S, z and every
Newton system in double-double arithmetic (about 32 digits, via the
``xprec`` dtype) moves that wall far enough for the guessing programs.

The engine mirrors :func:`povmcert.sdp._ipm` with the HKM direction and
Mehrotra predictor-corrector. It is roughly a hundred times slower than the
double engine, so it is meant for moment matrices of at most ~60 rows and a
few hundred free variables.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from xprec import ddouble

DD = ddouble


def to_dd(a) -> np.ndarray:
    return np.asarray(a, dtype=float).astype(DD)


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, raising LinAlgError if A is not positive definite."""
    L = A.copy()
    n = len(L)
    for j in range(n):
        d = L[j, j]
        if not d > 0:
            raise np.linalg.LinAlgError("matrix is not positive definite")
        d = np.sqrt(d)
        L[j, j] = d
        if j + 1 < n:
            col = L[j + 1:, j] / d
            L[j + 1:, j] = col
            L[j + 1:, j + 1:] -= np.outer(col, col)
    return np.tril(L)


def solve_lower(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    X = B.copy()
    for j in range(len(L)):
        X[j] = X[j] / L[j, j]
        if j + 1 < len(L):
            X[j + 1:] -= np.multiply.outer(L[j + 1:, j], X[j])
    return X


def solve_upper(U: np.ndarray, B: np.ndarray) -> np.ndarray:
    X = B.copy()
    for j in range(len(U) - 1, -1, -1):
        X[j] = X[j] / U[j, j]
        if j:
            X[:j] -= np.multiply.outer(U[:j, j], X[j])
    return X


def cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_upper(L.T.copy(), solve_lower(L, b))


def factor(M: np.ndarray) -> np.ndarray:
    try:
        return cholesky(M)
    except np.linalg.LinAlgError:
        reg = 1e-24 * max(1.0, float(np.abs(np.diag(M)).max()))
        return cholesky(M + reg * np.eye(len(M)).astype(DD))


class _Operator:
    """A(X) = A^T vec(X) and its adjoint for a sparse n^2 x m matrix."""

    def __init__(self, A: sp.csc_matrix, n: int):
        A = A.tocsc()
        A.sort_indices()
        self.n, self.m = n, A.shape[1]
        self.idx = A.indices
        self.data = to_dd(A.data)
        self.starts = A.indptr[:-1]
        self.nonempty = np.diff(A.indptr) > 0
        self.col_of = np.repeat(np.arange(self.m), np.diff(A.indptr))
        self.cols = []
        for i in range(self.m):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            r, c = np.divmod(A.indices[lo:hi], n)
            self.cols.append((r, c, self.data[lo:hi]))
        self.gram = sla.cho_factor((A.T @ A).toarray() + 1e-300 * np.eye(self.m), lower=True)

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m, dtype=DD)
        if len(self.idx):
            vals = np.add.reduceat(X.ravel()[self.idx] * self.data, self.starts[self.nonempty])
            out[self.nonempty] = vals
        return out

    def adjoint(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n * self.n, dtype=DD)
        np.add.at(out, self.idx, self.data * z[self.col_of])
        return out.reshape(self.n, self.n)

    def schur(self, X: np.ndarray, Sinv: np.ndarray) -> np.ndarray:
        M = np.empty((self.m, self.m), dtype=DD)
        for i, (r, c, v) in enumerate(self.cols):
            G = (X[:, r] * v) @ Sinv[c, :]
            M[:, i] = self.apply(G)
        return (M + M.T) / 2

    def project(self, dX: np.ndarray, target: np.ndarray, sweeps: int = 3) -> np.ndarray:
        """Least-change correction so that A(dX) = target, refined in dd."""
        for _ in range(sweeps):
            r = target - self.apply(dX)
            w = sla.cho_solve(self.gram, r.astype(float))
            dX = dX + self.adjoint(to_dd(w))
        return dX


def _max_step(X: np.ndarray, D: np.ndarray) -> float:
    try:
        L = cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    W = solve_lower(L, D)
    W = solve_lower(L, W.T.copy())
    lam = np.linalg.eigvalsh(((W + W.T) / 2).astype(float))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _vdot(A: np.ndarray, B: np.ndarray):
    return (A * B).sum()


def ipm_dd(C, A: sp.csc_matrix, b, cfg, verbose_log=None):
    """Same contract as the double engine; returns float arrays and values."""
    from .sdp import INFEASIBLE, ITERATION_LIMIT, NUMERICAL_FAILURE, OPTIMAL, _Run

    n, m = C.shape[0], A.shape[1]
    op = _Operator(A, n)
    Cd, bd = to_dd(C), to_dd(b)
    normC = float(np.linalg.norm(C))
    normb = float(np.linalg.norm(b))
    normA = np.sqrt(np.asarray(A.multiply(A).sum(axis=0))).ravel() if m else np.zeros(0)
    xi = max(10.0, math.sqrt(n), n * max(((1 + np.abs(b)) / (1 + normA)).max(initial=0.0), 1.0))
    eta = max(10.0, math.sqrt(n), normC, normA.max(initial=0.0))
    eye = np.eye(n).astype(DD)
    X = xi * eye
    S = eta * eye
    z = np.zeros(m, dtype=DD)
    gamma = cfg.step_damping
    history: list = []
    status, message = ITERATION_LIMIT, "iteration limit reached"
    best = None

    def measures(X, S, z):
        Rp = bd - op.apply(X)
        Rd = Cd - S - op.adjoint(z)
        pobj, dobj = _vdot(Cd, X), (bd * z).sum()
        pinf = float(np.sqrt((Rp * Rp).sum())) / (1 + normb)
        dinf = float(np.sqrt((Rd * Rd).sum())) / (1 + normC)
        relgap = float(abs(pobj - dobj)) / (1 + float(abs(pobj)) + float(abs(dobj)))
        return Rp, Rd, pobj, dobj, pinf, dinf, relgap

    it = 0
    for it in range(1, cfg.max_iter + 1):
        Rp, Rd, pobj, dobj, pinf, dinf, relgap = measures(X, S, z)
        mu = _vdot(X, S) / n
        history.append((float(pobj), float(dobj), pinf, dinf, relgap))
        if verbose_log:
            verbose_log("dd it %3d pobj %+.12e dobj %+.12e gap %.2e pinf %.2e dinf %.2e",
                        it, float(pobj), float(dobj), relgap, pinf, dinf)
        score = max(relgap, pinf, dinf)
        if best is None or score < best[0]:
            best = (score, it, X.copy(), S.copy(), z.copy())
        if relgap <= cfg.gap_tol and pinf <= cfg.feas_tol and dinf <= cfg.feas_tol:
            status, message = OPTIMAL, "converged"
            break
        if float(pobj) < 0 and float(np.abs(X).max()) > 1e12 and normb / -float(pobj) < 1e-12:
            status, message = INFEASIBLE, "moment constraints admit no PSD completion"
            break
        try:
            Ls = cholesky(S)
            Linv = solve_lower(Ls, eye)
            Sinv = Linv.T @ Linv
            Lm = factor(op.schur(X, Sinv)) if m else None
        except np.linalg.LinAlgError as exc:
            status, message = NUMERICAL_FAILURE, f"factorization failed: {exc}"
            break
        base = Rp + op.apply(X) + op.apply(X @ Rd @ Sinv)

        def direction(rhs, extra):
            dz = cho_solve(Lm, rhs) if m else np.zeros(0, dtype=DD)
            dS = Rd - op.adjoint(dz)
            dX = extra - X @ dS @ Sinv
            dX = op.project((dX + dX.T) / 2, Rp) if m else (dX + dX.T) / 2
            return dX, dS, dz

        dXa, dSa, _ = direction(base, -X)
        ap = min(1.0, gamma * _max_step(X, dXa))
        ad = min(1.0, gamma * _max_step(S, dSa))
        mu_aff = _vdot(X + ap * dXa, S + ad * dSa) / n
        sigma = min(1.0, max(0.0, float(mu_aff / mu) ** 3)) if mu > 0 else 0.0
        cross = dXa @ dSa @ Sinv
        rhs = base - sigma * mu * op.apply(Sinv) + op.apply(cross)
        dX, dS, dz = direction(rhs, sigma * mu * Sinv - X - cross)
        ap = min(1.0, gamma * _max_step(X, dX))
        ad = min(1.0, gamma * _max_step(S, dS))
        if verbose_log:
            verbose_log("    mu %.2e sigma %.2e ap %.3f ad %.3f", float(mu), sigma, ap, ad)
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

    if status not in (OPTIMAL, INFEASIBLE) and best is not None:
        _, _, X, S, z = best
    _, _, pobj, dobj, pinf, dinf, relgap = measures(X, S, z)
    return _Run(status, message, X.astype(float), S.astype(float), z.astype(float), it,
                float(pobj), float(dobj), pinf, dinf, relgap, history)
