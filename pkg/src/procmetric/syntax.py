"""Process terms: constructors, concrete syntax, canonical ordering, random generation.

Terms are immutable and compared structurally.  Hashes are computed once at
construction so that terms can serve as dictionary keys cheaply even when
they are deep.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Iterable, Sequence

TICK = "tick"
COPY_LEFT, COPY_RIGHT, COPY_SYNC = "l", "r", "s"

KEYWORDS = frozenset({"eps", "star", "pstar", "repl", "bang", "pbang", "cp"})
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class TermError(ValueError):
    """Base class for malformed terms and malformed term text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class ParseError(TermError):
    def __init__(self, message: str, line: int, column: int, expected: Iterable[str] = ()):
        self.expected = frozenset(expected)
        if self.expected:
            message += " (expected " + " or ".join(f"'{x}'" for x in sorted(self.expected)) + ")"
        super().__init__(message, line, column)


class WeightSumError(TermError):
    pass


class RangeError(TermError):
    pass


def _check_action(name: str) -> str:
    if not isinstance(name, str) or not _IDENT.match(name) or name in KEYWORDS:
        raise TermError(f"invalid action name {name!r}")
    return name


def _check_p(p) -> Fraction:
    p = Fraction(p)
    if not 0 < p < 1:
        raise RangeError(f"probability parameter {p} outside (0,1)")
    return p


class Term:
    """Common behaviour of all term variants (structural equality, ordering, rendering)."""

    _variant = -1

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash((self._variant, *self._values())))
        object.__setattr__(self, "_skey", None)

    def _values(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Term) or self._variant != other._variant or self._hash != other._hash:
            return False
        return self._values() == other._values()

    def __ne__(self, other) -> bool:
        return not self == other

    def sort_key(self) -> tuple:
        key = self._skey
        if key is None:
            key = (self._variant, *(_key_of(v) for v in self._values()))
            object.__setattr__(self, "_skey", key)
        return key

    def __lt__(self, other: Term) -> bool:
        return self.sort_key() < other.sort_key()

    def __repr__(self) -> str:
        return f"{type(self).__name__}<{render(self)}>"

    def __str__(self) -> str:
        return render(self)


def _key_of(v):
    if isinstance(v, Term):
        return v.sort_key()
    if isinstance(v, frozenset):
        return tuple(sorted(v))
    if isinstance(v, tuple):  # prefix branches
        return tuple((w, t.sort_key()) for w, t in v)
    return v


_term = dataclass(frozen=True, eq=False, repr=False)


@_term
class Stop(Term):
    _variant = 0


@_term
class Skip(Term):
    _variant = 1


@_term
class Prefix(Term):
    action: str
    branches: tuple  # ((Fraction, Term), ...)
    _variant = 2

    def __post_init__(self):
        _check_action(self.action)
        branches = tuple((Fraction(w), t) for w, t in self.branches)
        if not branches:
            raise TermError("prefix needs at least one branch")
        for w, t in branches:
            if not 0 < w <= 1:
                raise RangeError(f"prefix weight {w} outside (0,1]")
            if not isinstance(t, Term):
                raise TermError(f"prefix branch target {t!r} is not a term")
        if sum(w for w, _ in branches) != 1:
            raise WeightSumError(f"prefix weights sum to {sum(w for w, _ in branches)}, not 1")
        object.__setattr__(self, "branches", branches)
        super().__post_init__()


@_term
class Seq(Term):
    left: Term
    right: Term
    _variant = 3


@_term
class Alt(Term):
    left: Term
    right: Term
    _variant = 4


@_term
class PAlt(Term):
    p: Fraction
    left: Term
    right: Term
    _variant = 5

    def __post_init__(self):
        object.__setattr__(self, "p", _check_p(self.p))
        super().__post_init__()


@_term
class SyncPar(Term):
    left: Term
    right: Term
    _variant = 6


@_term
class Interleave(Term):
    left: Term
    right: Term
    _variant = 7


@_term
class PPar(Term):
    p: Fraction
    left: Term
    right: Term
    _variant = 8

    def __post_init__(self):
        object.__setattr__(self, "p", _check_p(self.p))
        super().__post_init__()


@_term
class CspPar(Term):
    sync: frozenset
    left: Term
    right: Term
    _variant = 9

    def __post_init__(self):
        object.__setattr__(self, "sync", frozenset(_check_action(a) for a in self.sync))
        super().__post_init__()


def _check_count(n) -> int:
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise RangeError(f"iteration count {n!r} must be a natural number")
    return n


@_term
class FinIter(Term):
    body: Term
    n: int
    _variant = 10

    def __post_init__(self):
        _check_count(self.n)
        super().__post_init__()


@_term
class InfIter(Term):
    body: Term
    _variant = 11


@_term
class KleeneStar(Term):
    body: Term
    exit: Term
    _variant = 12


@_term
class PKleeneStar(Term):
    p: Fraction
    body: Term
    exit: Term
    _variant = 13

    def __post_init__(self):
        object.__setattr__(self, "p", _check_p(self.p))
        super().__post_init__()


@_term
class FinRepl(Term):
    n: int
    body: Term
    _variant = 14

    def __post_init__(self):
        _check_count(self.n)
        super().__post_init__()


@_term
class Bang(Term):
    body: Term
    _variant = 15


@_term
class PBang(Term):
    p: Fraction
    body: Term
    _variant = 16

    def __post_init__(self):
        object.__setattr__(self, "p", _check_p(self.p))
        super().__post_init__()


@_term
class Copy(Term):
    body: Term
    _variant = 17


STOP = Stop()
SKIP = Skip()


def prefix(action: str, target: Term | None = None) -> Prefix:
    """Dirac prefix ``action.target`` (target defaults to 0)."""
    return Prefix(action, ((Fraction(1), STOP if target is None else target),))


def choice(action: str, branches: Sequence[tuple]) -> Term:
    """Probabilistic prefix that silently drops zero-weight branches."""
    kept = tuple((Fraction(w), t) for w, t in branches if Fraction(w) != 0)
    return Prefix(action, kept)


def subterms(t: Term) -> tuple[Term, ...]:
    if isinstance(t, Prefix):
        return tuple(u for _, u in t.branches)
    return tuple(v for v in t._values() if isinstance(v, Term))


def depth(t: Term) -> int:
    kids = subterms(t)
    return 1 + (max(depth(k) for k in kids) if kids else 0)


def size(t: Term) -> int:
    return 1 + sum(size(k) for k in subterms(t))


def compare_terms(t1: Term, t2: Term) -> int:
    """Three-way comparison under the canonical term order (-1, 0 or 1)."""
    if t1 == t2:
        return 0
    return -1 if t1.sort_key() < t2.sort_key() else 1


# ---------------------------------------------------------------- rendering

_ATOM, _POST, _SEQ, _PAR, _ALT = range(5)


def _level(t: Term) -> int:
    if isinstance(t, (FinIter, InfIter)):
        return _POST
    if isinstance(t, Seq):
        return _SEQ
    if isinstance(t, (SyncPar, Interleave, PPar, CspPar)):
        return _PAR
    if isinstance(t, (Alt, PAlt)):
        return _ALT
    return _ATOM


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def render(t: Term) -> str:
    """Concrete syntax with as few parentheses as the grammar allows."""
    return _render(t, _ALT)


def _render(t: Term, allowed: int) -> str:
    text = _render_bare(t)
    return f"({text})" if _level(t) > allowed else text


def _render_bare(t: Term) -> str:
    r = _render
    fr = format_rational
    if isinstance(t, Stop):
        return "0"
    if isinstance(t, Skip):
        return "eps"
    if isinstance(t, Prefix):
        if len(t.branches) == 1:
            return f"{t.action}.{r(t.branches[0][1], _ATOM)}"
        inner = " (+) ".join(f"[{fr(w)}]{r(u, _ALT)}" for w, u in t.branches)
        return f"{t.action}.({inner})"
    if isinstance(t, Seq):
        return f"{r(t.left, _SEQ)};{r(t.right, _POST)}"
    if isinstance(t, (Alt, PAlt, SyncPar, Interleave, PPar, CspPar)):
        if isinstance(t, Alt):
            op, lvl = "+", _ALT
        elif isinstance(t, PAlt):
            op, lvl = f"+[{fr(t.p)}]", _ALT
        elif isinstance(t, SyncPar):
            op, lvl = "|", _PAR
        elif isinstance(t, Interleave):
            op, lvl = "|||", _PAR
        elif isinstance(t, PPar):
            op, lvl = f"|||[{fr(t.p)}]", _PAR
        else:
            op, lvl = "||{" + ",".join(sorted(t.sync)) + "}", _PAR
        return f"{r(t.left, lvl)} {op} {r(t.right, lvl - 1)}"
    if isinstance(t, FinIter):
        return f"{r(t.body, _POST)}^{t.n}"
    if isinstance(t, InfIter):
        return f"{r(t.body, _POST)}^w"
    if isinstance(t, KleeneStar):
        return f"star({render(t.body)}, {render(t.exit)})"
    if isinstance(t, PKleeneStar):
        return f"pstar({fr(t.p)}, {render(t.body)}, {render(t.exit)})"
    if isinstance(t, FinRepl):
        return f"repl({t.n}, {render(t.body)})"
    if isinstance(t, Bang):
        return f"bang({render(t.body)})"
    if isinstance(t, PBang):
        return f"pbang({fr(t.p)}, {render(t.body)})"
    if isinstance(t, Copy):
        return f"cp({render(t.body)})"
    raise TypeError(f"not a term: {t!r}")


# ------------------------------------------------------------------ parsing

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>\d+(?:\.\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\(\+\)|\|\|\||\|\||\||[+;^.()\[\]{},/])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num', 'ident', 'op' or 'end'
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            line, col = _position(text, pos)
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "<end of input>", len(text)))
    return toks


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


_ATOM_START = {"0", "eps", "star", "pstar", "repl", "bang", "pbang", "cp", "(", "<action>"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, ahead: int = 1) -> _Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def where(self, tok: _Tok | None = None) -> tuple[int, int]:
        return _position(self.text, (tok or self.tok).offset)

    def fail(self, expected: Iterable[str], tok: _Tok | None = None) -> ParseError:
        tok = tok or self.tok
        line, col = self.where(tok)
        return ParseError(f"unexpected {tok.text!r}", line, col, expected)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident", "num") and self.tok.text == text

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            raise self.fail({text})
        tok = self.tok
        self.i += 1
        return tok

    def parse(self) -> Term:
        t = self.alt_term()
        if self.tok.kind != "end":
            raise self.fail({"+", "|", "|||", "||{", ";", "^", "<end of input>"})
        return t

    def alt_term(self) -> Term:
        left = self.par_term()
        while self.at("+"):
            self.i += 1
            if self.at("["):
                p = self.probability()
                left = PAlt(p, left, self.par_term())
            else:
                left = Alt(left, self.par_term())
        return left

    def par_term(self) -> Term:
        left = self.seq_term()
        while True:
            if self.at("|"):
                self.i += 1
                left = SyncPar(left, self.seq_term())
            elif self.at("|||"):
                self.i += 1
                if self.at("["):
                    p = self.probability()
                    left = PPar(p, left, self.seq_term())
                else:
                    left = Interleave(left, self.seq_term())
            elif self.at("||"):
                self.i += 1
                self.expect("{")
                acts = []
                if not self.at("}"):
                    acts.append(self.action())
                    while self.at(","):
                        self.i += 1
                        acts.append(self.action())
                self.expect("}")
                left = CspPar(frozenset(acts), left, self.seq_term())
            else:
                return left

    def seq_term(self) -> Term:
        left = self.post_term()
        while self.at(";"):
            self.i += 1
            left = Seq(left, self.post_term())
        return left

    def post_term(self) -> Term:
        t = self.atom()
        while self.at("^"):
            self.i += 1
            if self.tok.kind == "num":
                t = FinIter(t, self.natural())
            elif self.at("w"):
                self.i += 1
                t = InfIter(t)
            else:
                raise self.fail({"<natural>", "w"})
        return t

    def atom(self) -> Term:
        tok = self.tok
        if tok.kind == "num":
            if tok.text != "0":
                raise self.fail(_ATOM_START)
            self.i += 1
            return STOP
        if self.at("("):
            self.i += 1
            t = self.alt_term()
            self.expect(")")
            return t
        if tok.kind != "ident":
            raise self.fail(_ATOM_START)
        name = tok.text
        if name == "eps":
            self.i += 1
            return SKIP
        if name in KEYWORDS:
            self.i += 1
            self.expect("(")
            t = self.function_call(name)
            self.expect(")")
            return t
        self.i += 1
        self.expect(".")
        if self.at("(") and self.peek().text == "[":
            return self.branches(name)
        return Prefix(name, ((Fraction(1), self.atom()),))

    def function_call(self, name: str) -> Term:
        if name == "star":
            body = self.alt_term()
            self.expect(",")
            return KleeneStar(body, self.alt_term())
        if name == "cp":
            return Copy(self.alt_term())
        if name == "bang":
            return Bang(self.alt_term())
        if name == "repl":
            n = self.natural()
            self.expect(",")
            return FinRepl(n, self.alt_term())
        p = self.rational(check_open=True)
        self.expect(",")
        if name == "pbang":
            return PBang(p, self.alt_term())
        body = self.alt_term()
        self.expect(",")
        return PKleeneStar(p, body, self.alt_term())

    def branches(self, action: str) -> Term:
        start = self.tok
        self.expect("(")
        branches = []
        while True:
            wtok = self.peek()
            self.expect("[")
            w = self.rational()
            self.expect("]")
            if not 0 < w <= 1:
                raise RangeError(f"prefix weight {format_rational(w)} outside (0,1]", *self.where(wtok))
            branches.append((w, self.alt_term()))
            if self.at("(+)"):
                self.i += 1
                continue
            self.expect(")")
            break
        total = sum(w for w, _ in branches)
        if total != 1:
            raise WeightSumError(f"prefix weights sum to {format_rational(total)}, not 1", *self.where(start))
        return Prefix(action, tuple(branches))

    def probability(self) -> Fraction:
        self.expect("[")
        p = self.rational(check_open=True)
        self.expect("]")
        return p

    def action(self) -> str:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.fail({"<action>"})
        self.i += 1
        return tok.text

    def natural(self) -> int:
        tok = self.tok
        if tok.kind != "num" or "." in tok.text:
            raise self.fail({"<natural>"})
        self.i += 1
        return int(tok.text)

    def rational(self, check_open: bool = False) -> Fraction:
        tok = self.tok
        if tok.kind != "num":
            raise self.fail({"<rational>"})
        self.i += 1
        if "." in tok.text:
            value = Fraction(tok.text)
        elif self.at("/"):
            self.i += 1
            den = self.natural()
            if den == 0:
                raise ParseError("zero denominator", *self.where(self.toks[self.i - 1]))
            value = Fraction(int(tok.text), den)
        else:
            value = Fraction(int(tok.text))
        if check_open and not 0 < value < 1:
            raise RangeError(f"probability parameter {format_rational(value)} outside (0,1)", *self.where(tok))
        return value


def parse(text: str) -> Term:
    """Parse concrete term syntax; raises a TermError subclass on bad input."""
    return _Parser(text).parse()


# ------------------------------------------------------- random generation

WEIGHTS = (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(3, 4))

DEFAULT_OPS = (
    "prefix", "prefix", "prefix", "alt", "palt", "seq", "sync", "interleave",
    "ppar", "csp", "finiter", "finrepl",
)


def random_term(seed: int, max_depth: int, alphabet: Sequence[str],
                ops: Sequence[str] = DEFAULT_OPS) -> Term:
    """Deterministic pseudo-random closed acyclic term of depth at most ``max_depth``.

    ``ops`` picks which constructors may appear; the default covers every
    non-recursive operator plus finite iteration and replication (n <= 2).
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    if not alphabet:
        raise ValueError("alphabet must be nonempty")
    for a in alphabet:
        _check_action(a)
    rng = random.Random(seed)
    return _gen(rng, max_depth, list(alphabet), list(ops))


def _gen(rng: random.Random, d: int, alphabet: list[str], ops: list[str]) -> Term:
    if d <= 1 or rng.random() < 0.15:
        return rng.choice((STOP, SKIP))
    op = rng.choice(ops)
    sub = lambda: _gen(rng, d - 1, alphabet, ops)  # noqa: E731
    if op == "prefix":
        a = rng.choice(alphabet)
        if rng.random() < 0.5:
            return Prefix(a, ((Fraction(1), sub()),))
        w = rng.choice(WEIGHTS)
        return Prefix(a, ((w, sub()), (1 - w, sub())))
    if op == "alt":
        return Alt(sub(), sub())
    if op == "palt":
        return PAlt(rng.choice(WEIGHTS), sub(), sub())
    if op == "seq":
        return Seq(sub(), sub())
    if op == "sync":
        return SyncPar(sub(), sub())
    if op == "interleave":
        return Interleave(sub(), sub())
    if op == "ppar":
        return PPar(rng.choice(WEIGHTS), sub(), sub())
    if op == "csp":
        sync = frozenset(a for a in alphabet if rng.random() < 0.5)
        return CspPar(sync, sub(), sub())
    if op == "finiter":
        return FinIter(sub(), rng.randint(0, 2))
    if op == "finrepl":
        return FinRepl(rng.randint(0, 2), sub())
    raise ValueError(f"unknown operator kind {op!r}")
