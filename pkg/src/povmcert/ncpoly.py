"""Noncommutative words over party-local operators.

Relations used for reduction:

* operators of different parties commute, so words are sorted party-blockwise
  (Alice < Bob < Eve) with the relative order inside each party preserved;
* projectors are idempotent, P P = P;
* projectors for different outcomes of the same measurement are orthogonal,
  so such a product is zero;
* nonhermitian symbols (Eve's Z operators) satisfy no relation at all.

A d-outcome measurement is represented by d-1 projector symbols; the last
outcome is ``1 - sum(others)`` (see :func:`outcome_projector`).
"""
from __future__ import annotations

from itertools import product
from typing import Iterable, Mapping, NamedTuple, Sequence

ALICE, BOB, EVE = 0, 1, 2
PARTY_NAMES = ("A", "B", "E")


class OpSymbol(NamedTuple):
    party: int
    input: int
    outcome: int
    hermitian: bool = True  # projector if True
    dagger: bool = False

    def adjoint(self) -> "OpSymbol":
        if self.hermitian:
            return self
        return self._replace(dagger=not self.dagger)

    def __str__(self) -> str:
        if self.hermitian:
            return f"{PARTY_NAMES[self.party]}{self.input}^{self.outcome}"
        return f"Z{self.outcome}" + ("'" if self.dagger else "")


Word = tuple  # tuple[OpSymbol, ...]; the empty tuple is the identity
IDENTITY: Word = ()


def projector_symbol(party: int, input: int, outcome: int) -> OpSymbol:
    return OpSymbol(party, input, outcome, True, False)


def z_symbol(outcome: int, dagger: bool = False, input: int = 0) -> OpSymbol:
    return OpSymbol(EVE, input, outcome, False, dagger)


def canonicalize(word: Iterable[OpSymbol]) -> Word | None:
    """Normal form of a word, or None when the product vanishes."""
    ordered = sorted(word, key=lambda s: s.party)
    stack: list[OpSymbol] = []
    for s in ordered:
        if stack and s.hermitian:
            top = stack[-1]
            if top.hermitian and top.party == s.party and top.input == s.input:
                if top.outcome == s.outcome:
                    continue
                return None
        stack.append(s)
    return tuple(stack)


def adjoint(word: Iterable[OpSymbol]) -> Word | None:
    return canonicalize(s.adjoint() for s in reversed(tuple(word)))


def word_str(word: Word | None) -> str:
    if word is None:
        return "0"
    if not word:
        return "1"
    return " ".join(str(s) for s in word)


class NCPolynomial:
    """Finite linear combination of canonical words with complex coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Word, complex] | None = None):
        self.terms: dict[Word, complex] = {}
        for w, c in (terms or {}).items():
            self._add(w, c)

    def _add(self, word, coeff) -> None:
        if coeff == 0:
            return
        w = canonicalize(word)
        if w is None:
            return
        c = self.terms.get(w, 0) + coeff
        if c == 0:
            self.terms.pop(w, None)
        else:
            self.terms[w] = c

    @classmethod
    def constant(cls, value: complex) -> "NCPolynomial":
        return cls({IDENTITY: value})

    @classmethod
    def word(cls, *symbols: OpSymbol) -> "NCPolynomial":
        return cls({tuple(symbols): 1})

    def copy(self) -> "NCPolynomial":
        out = NCPolynomial()
        out.terms = dict(self.terms)
        return out

    def __add__(self, other):
        other = _as_poly(other)
        out = self.copy()
        for w, c in other.terms.items():
            out._add(w, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return NCPolynomial({w: -c for w, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        if isinstance(other, NCPolynomial):
            out = NCPolynomial()
            for (w1, c1), (w2, c2) in product(self.terms.items(), other.terms.items()):
                out._add(w1 + w2, c1 * c2)
            return out
        return NCPolynomial({w: c * other for w, c in self.terms.items()})

    def __rmul__(self, other):
        if isinstance(other, NCPolynomial):
            return other.__mul__(self)
        return NCPolynomial({w: other * c for w, c in self.terms.items()})

    def __eq__(self, other):
        other = _as_poly(other)
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0) - other.terms.get(k, 0)) < 1e-12 for k in keys)

    def adjoint(self) -> "NCPolynomial":
        out = NCPolynomial()
        for w, c in self.terms.items():
            aw = adjoint(w)
            if aw is not None:
                out._add(aw, complex(c).conjugate() if isinstance(c, complex) else c)
        return out

    def is_hermitian(self) -> bool:
        return self == self.adjoint()

    def degree(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    def __repr__(self) -> str:
        if not self.terms:
            return "NCPolynomial(0)"
        return "NCPolynomial(" + " + ".join(f"{c}*[{word_str(w)}]" for w, c in self.terms.items()) + ")"


def _as_poly(x) -> NCPolynomial:
    return x if isinstance(x, NCPolynomial) else NCPolynomial.constant(x)


class Measurement(NamedTuple):
    party: int
    input: int
    outcomes: int

    def symbols(self) -> list[OpSymbol]:
        return [projector_symbol(self.party, self.input, b) for b in range(self.outcomes - 1)]


def outcome_projector(meas: Measurement, outcome: int) -> NCPolynomial:
    """Projector for any outcome; the last one is 1 - sum of the others."""
    if not 0 <= outcome < meas.outcomes:
        raise ValueError(f"outcome {outcome} out of range for {meas}")
    if outcome < meas.outcomes - 1:
        return NCPolynomial.word(projector_symbol(meas.party, meas.input, outcome))
    out = NCPolynomial.constant(1)
    for s in meas.symbols():
        out = out - NCPolynomial.word(s)
    return out


def dichotomic_observable(meas: Measurement) -> NCPolynomial:
    """2 P_0 - 1 for a two-outcome measurement."""
    if meas.outcomes != 2:
        raise ValueError("observable form needs a two-outcome measurement")
    return 2 * outcome_projector(meas, 0) - 1


def monomial_basis(symbols: Sequence[OpSymbol], level: int, extras: Iterable[Sequence[OpSymbol]] = ()) -> list[Word]:
    """Identity, every nonzero canonical word of length <= level, then extras.

    Order is by generation (length, then lexicographic in ``symbols``);
    duplicates are dropped keeping the first occurrence.
    """
    if level < 1:
        raise ValueError("level must be at least 1")
    seen: dict[Word, None] = {IDENTITY: None}
    frontier: list[Word] = [IDENTITY]
    for _ in range(level):
        nxt = []
        for w in frontier:
            for s in symbols:
                c = canonicalize(w + (s,))
                if c is None or len(c) != len(w) + 1:
                    continue
                if c not in seen:
                    seen[c] = None
                    nxt.append(c)
        frontier = nxt
    for e in extras:
        c = canonicalize(e)
        if c is not None and c not in seen:
            seen[c] = None
    return list(seen)
