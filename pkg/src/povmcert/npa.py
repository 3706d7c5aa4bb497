"""Moment-matrix relaxations for guessing-probability and entropy programs.

The LMI convention used throughout is

    F0 + sum_k y_k F_k  >= 0,     E y = f,

where ``y`` are moment variables (one per canonical word, identified with its
adjoint in the default real mode), ``F0`` carries the identity moment and the
objective is ``c . y + c0`` with a maximize/minimize sense.

Real mode
---------
All programs assembled here have real coefficients and hermitian objective and
constraint polynomials. If L is a feasible moment functional then so is
w -> conj(L(w)) = L(w^dag), with the same objective, so their average is a
feasible real functional with L(w) = L(w^dag). Identifying each word with its
adjoint and using real variables therefore loses nothing. The complex mode
(real symmetric embedding of doubled dimension) is kept for cross-checks.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IncompleteData, InvalidInput, LevelTooLow
from .ncpoly import (
    ALICE,
    BOB,
    EVE,
    IDENTITY,
    Measurement,
    NCPolynomial,
    OpSymbol,
    Word,
    adjoint,
    canonicalize,
    dichotomic_observable,
    monomial_basis,
    outcome_projector,
    word_str,
    z_symbol,
)

log = logging.getLogger(__name__)

CHSH_INPUTS = (0, 1)


def _rep(word: Word) -> Word:
    """Representative of the pair {w, w^dag}."""
    a = adjoint(word)
    return min(word, a)


# --------------------------------------------------------------------------
# scenario description


@dataclass(frozen=True)
class NPAScenario:
    """Operator content of a relaxation.

    Alice has dichotomic inputs ``alice_inputs``; Bob has dichotomic inputs
    0 and 1 plus a d-outcome measurement at ``povm_input``. Eve is either a
    d-outcome projective measurement (``eve="measure"``), a set of d
    nonhermitian operators Z_b (``eve="z"``) or absent.
    """

    d: int
    alice_inputs: tuple[int, ...] = (1, 3)
    povm_input: int = 2
    eve: str | None = "measure"

    def __post_init__(self):
        if self.d < 2:
            raise InvalidInput("the POVM needs at least two outcomes")
        if self.eve not in (None, "measure", "z"):
            raise InvalidInput(f"unknown Eve model {self.eve!r}")

    def alice(self, x: int) -> Measurement:
        if x not in self.alice_inputs:
            raise IncompleteData(f"scenario has no Alice input x={x}")
        return Measurement(ALICE, x, 2)

    def bob(self, y: int) -> Measurement:
        if y in CHSH_INPUTS:
            return Measurement(BOB, y, 2)
        if y == self.povm_input:
            return Measurement(BOB, y, self.d)
        raise IncompleteData(f"scenario has no Bob input y={y}")

    def eve_measurement(self) -> Measurement:
        if self.eve != "measure":
            raise InvalidInput("scenario has no Eve measurement")
        return Measurement(EVE, 0, self.d)

    def symbols(self) -> list[OpSymbol]:
        out: list[OpSymbol] = []
        for x in self.alice_inputs:
            out += self.alice(x).symbols()
        for y in (*CHSH_INPUTS, self.povm_input):
            out += self.bob(y).symbols()
        if self.eve == "measure":
            out += self.eve_measurement().symbols()
        elif self.eve == "z":
            for b in range(self.d):
                out += [z_symbol(b), z_symbol(b, dagger=True)]
        return out

    # polynomial helpers
    def A(self, x: int) -> NCPolynomial:
        return dichotomic_observable(self.alice(x))

    def B(self, y: int) -> NCPolynomial:
        return dichotomic_observable(self.bob(y))

    def Pi(self, b: int) -> NCPolynomial:
        return outcome_projector(self.bob(self.povm_input), b)

    def E(self, e: int) -> NCPolynomial:
        return outcome_projector(self.eve_measurement(), e)

    def Z(self, b: int, dagger: bool = False) -> NCPolynomial:
        return NCPolynomial.word(z_symbol(b, dagger))

    def chsh(self) -> NCPolynomial:
        return self.A(3) * self.B(0) + self.A(3) * self.B(1) + self.A(1) * self.B(0) - self.A(1) * self.B(1)

    def bell_boundary(self, n: np.ndarray) -> NCPolynomial:
        """S = sum_b (sum_j n_jb A_j) Pi_b for coefficient rows n (d x 3)."""
        n = np.asarray(n, dtype=float)
        if n.shape != (self.d, 3):
            raise InvalidInput(f"coefficients have shape {n.shape}, expected ({self.d}, 3)")
        total = NCPolynomial()
        for b in range(self.d):
            for j in (1, 2, 3):
                c = float(n[b, j - 1])
                if c == 0.0:
                    continue
                if j not in self.alice_inputs:
                    if abs(c) > 1e-12:
                        raise IncompleteData(f"n_{j}{b} != 0 requires Alice input x={j}")
                    continue
                total = total + c * (self.A(j) * self.Pi(b))
        return total


# --------------------------------------------------------------------------
# constraints


@dataclass
class ConstraintSet:
    """Named expectation targets <poly> = value."""

    items: dict[str, tuple[NCPolynomial, float]] = field(default_factory=dict)
    mode: str = "custom"

    def add(self, name: str, poly: NCPolynomial, value: float) -> None:
        if not np.isfinite(value):
            raise InvalidInput(f"constraint {name} has non-finite target")
        self.items[name] = (poly, float(value))

    def __len__(self) -> int:
        return len(self.items)

    def targets(self) -> dict[str, float]:
        return {k: v for k, (_, v) in self.items.items()}

    @classmethod
    def boundary(cls, scen: NPAScenario, n: np.ndarray, chsh: float, a3: float, s: float) -> "ConstraintSet":
        """The experimentally accessible set: <S_CHSH>, <A_3> and <S>."""
        cs = cls(mode="boundary")
        cs.add("S_CHSH", scen.chsh(), chsh)
        cs.add("A3", scen.A(3), a3)
        cs.add("S", scen.bell_boundary(n), s)
        return cs

    @classmethod
    def from_table(cls, scen: NPAScenario, corr, mode: str, n: np.ndarray | None = None) -> "ConstraintSet":
        """Constraints read off a correlation table.

        ``boundary``: <S_CHSH>, <A_3>, <S>. ``standard`` adds Bob's POVM
        marginals. ``full`` pins every degree-one and Alice-Bob degree-two
        projector moment, i.e. the whole table.
        """
        from .scenario import chsh_value  # local to keep module import light

        if mode not in ("boundary", "standard", "full"):
            raise InvalidInput(f"unknown constraint mode {mode!r}")
        if mode == "full":
            return cls._full(scen, corr)
        if n is None:
            raise InvalidInput("boundary constraints need the coefficient matrix n")
        for x in (1, 3):
            for y in (*CHSH_INPUTS, scen.povm_input):
                corr.block(x, y)
        cs = cls.boundary(scen, n, chsh_value(corr), corr.alice_expectation(3), _bell_from_table(n, corr))
        cs.mode = mode
        if mode == "standard":
            marg = corr.bob_marginal(scen.povm_input)
            for b in range(scen.d - 1):
                cs.add(f"Pi{b}", scen.Pi(b), marg[b])
        return cs

    @classmethod
    def _full(cls, scen: NPAScenario, corr) -> "ConstraintSet":
        cs = cls(mode="full")
        bob_ys = (*CHSH_INPUTS, scen.povm_input)
        for x in scen.alice_inputs:
            if x not in corr.alice_inputs:
                raise IncompleteData(f"correlation table lacks Alice input x={x}")
        for y in bob_ys:
            if y not in corr.bob_inputs:
                raise IncompleteData(f"correlation table lacks Bob input y={y}")
        x0 = scen.alice_inputs[0]
        for x in scen.alice_inputs:
            pa = corr.block(x, bob_ys[0]).sum(axis=1)
            cs.add(f"A{x}^0", NCPolynomial.word(*scen.alice(x).symbols()), pa[0])
        for y in bob_ys:
            meas = scen.bob(y)
            pb = corr.block(x0, y).sum(axis=0)
            for b, sym in enumerate(meas.symbols()):
                cs.add(f"B{y}^{b}", NCPolynomial.word(sym), pb[b])
            for x in scen.alice_inputs:
                blk = corr.block(x, y)
                (asym,) = scen.alice(x).symbols()
                for b, sym in enumerate(meas.symbols()):
                    cs.add(f"A{x}^0B{y}^{b}", NCPolynomial.word(asym, sym), blk[0, b])
        return cs


def _bell_from_table(n: np.ndarray, corr) -> float:
    total = 0.0
    for j in (1, 2, 3):
        col = np.asarray(n)[:, j - 1]
        if np.abs(col).max() <= 1e-12:
            continue
        total += sum(col[b] * corr.correlator(j, corr.povm_input, b) for b in range(len(col)))
    return float(total)


# --------------------------------------------------------------------------
# moment matrix


class MomentMatrix:
    """Moment matrix M[u, v] = <u^dag v> over a canonical basis.

    ``entries`` lists (var, row, col, value) for row <= col in the real
    block; ``const`` lists the identity contributions. Variable 0 is never
    the identity: the identity moment is the constant 1.
    """

    def __init__(self, basis: Sequence[Word], complex_mode: bool = False):
        self.basis = [canonicalize(w) for w in basis]
        if any(w is None for w in self.basis):
            raise InvalidInput("basis contains a zero word")
        if len(set(self.basis)) != len(self.basis):
            raise InvalidInput("basis contains duplicate words")
        self.complex_mode = complex_mode
        self.words: list[Word] = []  # representative word of each real variable
        self.parts: list[str] = []  # "re" or "im"
        self._re: dict[Word, int] = {}
        self._im: dict[Word, int] = {}
        n = len(self.basis)
        var, row, col, val = [], [], [], []
        const: list[tuple[int, int, float]] = []

        def emit(v, i, j, x):
            if v is None:
                const.append((i, j, x))
            else:
                var.append(v)
                row.append(i)
                col.append(j)
                val.append(x)

        for i, u in enumerate(self.basis):
            ua = adjoint(u)
            for j in range(i, n):
                w = canonicalize(ua + self.basis[j])
                if w is None:
                    continue
                rep = _rep(w)
                sign = 1.0 if w == rep else -1.0
                re_var = None if rep == IDENTITY else self._var(rep, "re")
                if not complex_mode:
                    emit(re_var, i, j, 1.0)
                    continue
                # [[Re, -Im], [Im, Re]] on indices (i, j), (n+i, n+j), ...
                emit(re_var, i, j, 1.0)
                emit(re_var, n + i, n + j, 1.0)
                if rep != adjoint(rep):
                    im_var = self._var(rep, "im")
                    emit(im_var, i, n + j, -sign)  # -Im M[i, j]
                    emit(im_var, j, n + i, sign)  # -Im M[j, i] = +Im M[i, j]
        self.const = const
        self.var = np.array(var, dtype=int)
        self.row = np.array(row, dtype=int)
        self.col = np.array(col, dtype=int)
        self.val = np.array(val, dtype=float)
        self.size = 2 * n if complex_mode else n
        log.debug("moment matrix: %d basis words, %d variables", n, self.nvars)

    def _var(self, rep: Word, part: str) -> int:
        table = self._re if part == "re" else self._im
        if rep not in table:
            table[rep] = len(self.words)
            self.words.append(rep)
            self.parts.append(part)
        return table[rep]

    @property
    def nvars(self) -> int:
        return len(self.words)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def has_word(self, word: Word) -> bool:
        w = canonicalize(word)
        return w is None or w == IDENTITY or _rep(w) in self._re

    def functional(self, poly: NCPolynomial) -> tuple[np.ndarray, float]:
        """Real part of <poly> as (coefficients over variables, constant)."""
        coef = np.zeros(self.nvars)
        const = 0.0
        for w, c in poly.terms.items():
            c = complex(c)
            if w == IDENTITY:
                const += c.real
                continue
            rep = _rep(w)
            if rep not in self._re:
                raise LevelTooLow(
                    f"word [{word_str(w)}] is not a moment of this matrix; raise the level or add extras"
                )
            coef[self._re[rep]] += c.real
            if self.complex_mode and rep in self._im:
                # L(w) = Re + i s Im with s = +1 for w == rep
                s = 1.0 if w == rep else -1.0
                coef[self._im[rep]] -= c.imag * s
        return coef, const

    def dense(self, y: np.ndarray) -> np.ndarray:
        """The (embedded) real moment matrix at variables y."""
        m = np.zeros((self.size, self.size))
        for i, j, x in self.const:
            m[i, j] += x
        np.add.at(m, (self.row, self.col), self.val * np.asarray(y)[self.var])
        return np.triu(m) + np.triu(m, 1).T

    def dump_basis(self) -> str:
        return "\n".join(word_str(w) for w in self.basis)


def build_moment_matrix(basis: Sequence[Word], complex_mode: bool = False) -> MomentMatrix:
    return MomentMatrix(basis, complex_mode)


def expectation_functional(poly: NCPolynomial, mm: MomentMatrix) -> tuple[np.ndarray, float]:
    return mm.functional(poly)


# --------------------------------------------------------------------------
# SDP problem container


@dataclass
class SDPProblem:
    """max/min c.y + c0 s.t. F0 + sum_k y_k F_k >= 0 (single block) and E y = f.

    Sparse data lists upper-triangle entries; ``block_sizes`` partitions the
    matrix into independent PSD blocks (entries never straddle blocks).
    """

    size: int
    var: np.ndarray
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray
    const: list
    c: np.ndarray
    c0: float = 0.0
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    sense: str = "max"
    names: list[str] = field(default_factory=list)
    constraint_names: list[str] = field(default_factory=list)
    block_sizes: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)
    eq_rank_tol: float = 1e-12  # relative pivot threshold when eliminating equalities
    eq_consistency_tol: float = 1e-9

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise InvalidInput("sense must be 'max' or 'min'")
        self.c = np.asarray(self.c, dtype=float)
        if self.eq_matrix is None:
            self.eq_matrix = np.zeros((0, self.nvars))
            self.eq_rhs = np.zeros(0)
        self.eq_matrix = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float)).reshape(-1, self.nvars)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float)
        if not self.block_sizes:
            self.block_sizes = (self.size,)
        if len(self.var) and (self.var.max() >= self.nvars or self.var.min() < 0):
            raise InvalidInput("entry references a nonexistent variable")
        if not (np.all(np.isfinite(self.eq_rhs)) and np.all(np.isfinite(self.c))):
            raise InvalidInput("problem data must be finite")

    @property
    def nvars(self) -> int:
        return len(self.c)

    def lmi(self, y: np.ndarray) -> np.ndarray:
        m = np.zeros((self.size, self.size))
        for i, j, x in self.const:
            m[i, j] += x
        np.add.at(m, (self.row, self.col), self.val * np.asarray(y)[self.var])
        return np.triu(m) + np.triu(m, 1).T

    def objective(self, y: np.ndarray) -> float:
        return float(self.c @ y + self.c0)

    def feasibility_residual(self, y: np.ndarray) -> float:
        """max(equality violation, -lambda_min of the LMI)."""
        y = np.asarray(y, dtype=float)
        eq = float(np.abs(self.eq_matrix @ y - self.eq_rhs).max()) if len(self.eq_rhs) else 0.0
        lam = float(np.linalg.eigvalsh(self.lmi(y)).min())
        return max(eq, -lam, 0.0)

    # SDPA sparse export -------------------------------------------------
    def to_sdpa(self) -> str:
        """Write the problem in SDPA sparse format after eliminating equalities.

        SDPA form: minimize c.x s.t. sum_i x_i F_i - F_0 >= 0. Header
        comments record the sense and objective offset so that reading the
        file back recovers the original optimum.
        """
        from .sdp import eliminate_equalities

        red = eliminate_equalities(self)
        sign = -1.0 if self.sense == "max" else 1.0
        out = io.StringIO()
        out.write(f'"povmcert SDP; sense={self.sense}; offset={float(red.c0)!r}"\n')
        out.write(f"{red.nvars}\n{len(red.block_sizes)}\n")
        out.write(" ".join(str(b) for b in red.block_sizes) + "\n")
        out.write(" ".join(repr(float(sign * v)) for v in red.c) + "\n")
        offsets = np.cumsum((0,) + tuple(red.block_sizes))

        def locate(i, j):
            blk = int(np.searchsorted(offsets, i, side="right")) - 1
            return blk + 1, i - offsets[blk] + 1, j - offsets[blk] + 1

        f0: dict[tuple[int, int], float] = {}
        for i, j, x in red.const:
            f0[(i, j)] = f0.get((i, j), 0.0) + x
        for (i, j), x in sorted(f0.items()):
            if x != 0:
                blk, a, b = locate(i, j)
                out.write(f"0 {blk} {a} {b} {float(-x)!r}\n")
        agg: dict[tuple[int, int, int], float] = {}
        for k, i, j, x in zip(red.var, red.row, red.col, red.val):
            key = (int(k), int(i), int(j))
            agg[key] = agg.get(key, 0.0) + float(x)
        for (k, i, j), x in sorted(agg.items()):
            if x != 0:
                blk, a, b = locate(i, j)
                out.write(f"{k + 1} {blk} {a} {b} {x!r}\n")
        return out.getvalue()


def read_sdpa(text: str) -> SDPProblem:
    """Parse SDPA sparse format into a minimization SDPProblem.

    The povmcert header comment, if present, restores sense and offset.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    sense, offset = "min", 0.0
    body = []
    for ln in lines:
        if not ln:
            continue
        if ln[0] in '"*':
            if "sense=max" in ln:
                sense = "max"
            if "offset=" in ln:
                try:
                    offset = float(ln.split("offset=")[1].split('"')[0])
                except ValueError:
                    pass
            continue
        body.append(ln.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    try:
        m = int(body[0].split()[0])
        nblocks = int(body[1].split()[0])
        sizes = [int(s) for s in body[2].split()[:nblocks]]
        c = np.array([float(s) for s in body[3].split()[:m]])
    except (IndexError, ValueError) as exc:
        raise InvalidInput(f"malformed SDPA header: {exc}") from exc
    if any(s < 0 for s in sizes):
        raise InvalidInput("diagonal (negative size) SDPA blocks are not supported")
    offsets = np.cumsum([0] + sizes)
    var, row, col, val, const = [], [], [], [], []
    for ln in body[4:]:
        parts = ln.split()
        if len(parts) < 5:
            raise InvalidInput(f"malformed SDPA entry: {ln!r}")
        k, blk, i, j = (int(p) for p in parts[:4])
        x = float(parts[4])
        i, j = sorted((i, j))
        gi, gj = offsets[blk - 1] + i - 1, offsets[blk - 1] + j - 1
        if k == 0:
            const.append((gi, gj, -x))
        else:
            var.append(k - 1)
            row.append(gi)
            col.append(gj)
            val.append(x)
    sign = -1.0 if sense == "max" else 1.0
    return SDPProblem(
        size=int(offsets[-1]),
        var=np.array(var, dtype=int),
        row=np.array(row, dtype=int),
        col=np.array(col, dtype=int),
        val=np.array(val, dtype=float),
        const=const,
        c=sign * c,
        c0=offset,
        sense=sense,
        block_sizes=tuple(sizes),
    )


def _problem_from_moments(
    mm: MomentMatrix, objective: NCPolynomial, constraints: ConstraintSet, sense: str, meta: dict
) -> SDPProblem:
    c, c0 = mm.functional(objective)
    rows, rhs, names = [], [], []
    for name, (poly, value) in constraints.items.items():
        coef, const = mm.functional(poly)
        if not np.any(coef):
            if abs(value - const) > 1e-9:
                raise InvalidInput(f"constraint {name} is constant {const} but targets {value}")
            continue
        rows.append(coef)
        rhs.append(value - const)
        names.append(name)
    names_v = [("Im " if p == "im" else "") + word_str(w) for w, p in zip(mm.words, mm.parts)]
    return SDPProblem(
        size=mm.size,
        var=mm.var,
        row=mm.row,
        col=mm.col,
        val=mm.val,
        const=mm.const,
        c=c,
        c0=c0,
        eq_matrix=np.array(rows).reshape(len(rows), mm.nvars),
        eq_rhs=np.array(rhs),
        sense=sense,
        names=names_v,
        constraint_names=names,
        meta=meta,
    )


def guessing_objective(scen: NPAScenario) -> NCPolynomial:
    return sum((scen.Pi(b) * scen.E(b) for b in range(scen.d)), NCPolynomial())


def assemble_guessing_sdp(
    constraints: ConstraintSet,
    level: int,
    d: int,
    scenario: NPAScenario | None = None,
    complex_mode: bool = False,
) -> tuple[SDPProblem, MomentMatrix]:
    """Maximize sum_b <Pi_b E_b> with Eve holding a d-outcome measurement."""
    scen = scenario or NPAScenario(d, eve="measure")
    if scen.eve != "measure":
        scen = NPAScenario(scen.d, scen.alice_inputs, scen.povm_input, "measure")
    basis = monomial_basis(scen.symbols(), level)
    mm = MomentMatrix(basis, complex_mode)
    meta = {"program": "guessing", "level": level, "d": d, "basis": len(basis), "mode": constraints.mode}
    prob = _problem_from_moments(mm, guessing_objective(scen), constraints, "max", meta)
    return prob, mm


def bff_objective(scen: NPAScenario, t: float) -> NCPolynomial:
    total = NCPolynomial()
    for b in range(scen.d):
        z, zd = scen.Z(b), scen.Z(b, True)
        total = total + scen.Pi(b) * (z + zd + (1 - t) * (zd * z)) + t * (z * zd)
    return total


def default_bff_extras(scen: NPAScenario) -> list[Word]:
    """Products Pi_b Z_b, written in the independent POVM symbols.

    The last element is 1 - sum_a Pi_a, so Pi_{d-1} Z_{d-1} contributes
    Z_{d-1} (already in the level-1 basis) and Pi_a Z_{d-1} for every a.
    """
    meas = scen.bob(scen.povm_input)
    syms = meas.symbols()
    words = [(s, z_symbol(b)) for b, s in enumerate(syms)]
    words += [(s, z_symbol(scen.d - 1)) for s in syms]
    return words


def extended_bff_extras(scen: NPAScenario) -> list[Word]:
    """Default extras plus A_x B_y Z_b and A_x B_y Z_b^dag for the CHSH inputs.

    These degree-three words tighten the node programs at ideal points
    considerably, at about ten times the cost of the default set.
    """
    words = default_bff_extras(scen)
    alice = [scen.alice(x).symbols()[0] for x in scen.alice_inputs]
    bob = [scen.bob(y).symbols()[0] for y in (0, 1)]
    for dag in (False, True):
        words += [(a, b, z_symbol(c, dag)) for a in alice for b in bob for c in range(scen.d)]
    return words


def assemble_bff_sdp(
    constraints: ConstraintSet,
    level: int,
    t: float,
    d: int,
    extras: Iterable[Word] | None = None,
    scenario: NPAScenario | None = None,
    complex_mode: bool = False,
) -> tuple[SDPProblem, MomentMatrix]:
    """Minimize sum_b <Pi_b (Z_b + Z_b^dag + (1-t) Z_b^dag Z_b) + t Z_b Z_b^dag>."""
    if not 0 < t <= 1:
        raise InvalidInput(f"quadrature node must lie in (0, 1], got {t}")
    scen = scenario or NPAScenario(d, eve="z")
    if scen.eve != "z":
        scen = NPAScenario(scen.d, scen.alice_inputs, scen.povm_input, "z")
    if extras is None:
        extras = default_bff_extras(scen)
    basis = monomial_basis(scen.symbols(), level, extras)
    mm = MomentMatrix(basis, complex_mode)
    meta = {"program": "bff", "level": level, "d": d, "t": t, "basis": len(basis), "mode": constraints.mode}
    prob = _problem_from_moments(mm, bff_objective(scen, t), constraints, "min", meta)
    return prob, mm


# --------------------------------------------------------------------------
# exact qubit model


@dataclass
class ExactModel:
    """Explicit operators for every symbol, used to evaluate moments.

    Bob's POVM is dilated with a Naimark isometry V: C^2 -> C^d so that every
    Bob symbol is a projector on C^d; Eve is trivial (scalars).
    """

    rho: np.ndarray  # on Alice (x) Bob (x) Eve
    ops: dict[OpSymbol, np.ndarray]

    def word_operator(self, word: Word) -> np.ndarray:
        out = np.eye(self.rho.shape[0], dtype=complex)
        for s in word:
            out = out @ self.ops[s]
        return out

    def moment(self, word: Word) -> complex:
        return complex(np.trace(self.rho @ self.word_operator(word)))

    def moment_vector(self, mm: MomentMatrix) -> np.ndarray:
        y = np.zeros(mm.nvars)
        for k, (w, part) in enumerate(zip(mm.words, mm.parts)):
            val = self.moment(w)
            y[k] = val.real if part == "re" else val.imag
        return y


def exact_model(
    scen: NPAScenario,
    rho_ab: np.ndarray,
    povm,
    theta_meas: float,
    eve_scalars: Sequence[complex] | None = None,
    sigma2_branch: int = 1,
) -> ExactModel:
    """Qubit realization of the protocol with trivial Eve."""
    from .qubit import PAULI, naimark_isometry
    from .scenario import bob_observables, dichotomic_projectors

    d = scen.d
    v = naimark_isometry(povm)  # d x 2
    dim_a, dim_b = 2, d
    alice_obs = {1: PAULI[0], 2: sigma2_branch * PAULI[1], 3: PAULI[2]}
    b0, b1 = bob_observables(theta_meas)
    ia, ib = np.eye(dim_a), np.eye(dim_b)
    ops: dict[OpSymbol, np.ndarray] = {}
    for x in scen.alice_inputs:
        (sym,) = scen.alice(x).symbols()
        ops[sym] = np.kron(dichotomic_projectors(alice_obs[x])[0], ib)
    for y, obs in zip(CHSH_INPUTS, (b0, b1)):
        (sym,) = scen.bob(y).symbols()
        ops[sym] = np.kron(ia, v @ dichotomic_projectors(obs)[0] @ v.conj().T)
    for b, sym in enumerate(scen.bob(scen.povm_input).symbols()):
        e = np.zeros((d, d))
        e[b, b] = 1
        ops[sym] = np.kron(ia, e)
    if scen.eve == "measure":
        for e, sym in enumerate(scen.eve_measurement().symbols()):
            ops[sym] = np.eye(dim_a * dim_b) * (1.0 if e == 0 else 0.0)
    elif scen.eve == "z":
        zs = list(eve_scalars) if eve_scalars is not None else [0.0] * d
        for b in range(d):
            ops[z_symbol(b)] = np.eye(dim_a * dim_b) * zs[b]
            ops[z_symbol(b, True)] = np.eye(dim_a * dim_b) * np.conj(zs[b])
    iso = np.kron(np.eye(2), v)
    rho = iso @ np.asarray(rho_ab) @ iso.conj().T
    return ExactModel(rho, ops)
