"""Compositional distance bounds for every operator, their tightness witnesses,
and a checker that compares a bound against the metric engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .metric import DEFAULT_PAIR_BUDGET, MetricEngine
from .semantics import interleave_normal_form
from .syntax import (
    SKIP, STOP, TICK, Alt, Bang, Copy, CspPar, FinIter, FinRepl, InfIter, Interleave,
    KleeneStar, PAlt, PBang, PKleeneStar, PPar, Prefix, Seq, SyncPar, Term, choice, prefix,
)

HALF = Fraction(1, 2)


class DomainError(ValueError):
    pass


class ArityError(ValueError):
    pass


_KINDS = {
    "prefix": None, "alt": 2, "palt": 2, "seq": 2, "syncpar": 2, "asyncpar": 2,
    "csppar": 2, "ppar": 2, "finiter": 1, "finrepl": 1, "infiter": 1, "bang": 1,
    "kleene": 2, "pkleene": 2, "pbang": 1, "copy": 1,
}
_ALIASES = {"sync": "syncpar", "interleave": "asyncpar", "async": "asyncpar", "csp": "csppar",
            "star": "kleene", "pstar": "pkleene", "repl": "finrepl"}

ALT_FAMILY = frozenset({"prefix", "alt", "palt"})
CYCLIC = frozenset({"infiter", "bang", "kleene", "pkleene", "pbang"})
RECURSIVE = CYCLIC | {"finiter", "finrepl"}


@dataclass(frozen=True)
class Combinator:
    """An operator together with its fixed parameters.

    ``p`` defaults to 1/2 for the probabilistic operators whose bound does not
    depend on it (+_p, |||_p); it only matters when witnesses are composed.
    """

    kind: str
    n: int | None = None
    p: Fraction | None = None
    sync: frozenset = field(default_factory=frozenset)
    weights: tuple[Fraction, ...] | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in _KINDS:
            raise ValueError(f"unknown combinator {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind in ("finiter", "finrepl") and (self.n is None or self.n < 0):
            raise DomainError(f"{kind} needs a natural iteration count")
        if kind in ("palt", "ppar", "pkleene", "pbang"):
            p = HALF if self.p is None else Fraction(self.p)
            if not 0 < p < 1:
                raise DomainError(f"parameter p = {p} outside (0,1)")
            object.__setattr__(self, "p", p)
        if kind == "prefix":
            if not self.weights:
                raise DomainError("prefix needs a weight vector")
            ws = tuple(Fraction(w) for w in self.weights)
            if any(not 0 < w <= 1 for w in ws) or sum(ws) != 1:
                raise DomainError(f"prefix weights {ws} must lie in (0,1] and sum to 1")
            object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "sync", frozenset(self.sync))

    @property
    def arity(self) -> int:
        return len(self.weights) if self.kind == "prefix" else _KINDS[self.kind]

    @property
    def synchronising(self) -> bool:
        """True for a CSP composition that really synchronises on some action."""
        return bool(self.sync - {TICK})

    def compose(self, args: Sequence[Term]) -> Term:
        if len(args) != self.arity:
            raise ArityError(f"{self.kind} takes {self.arity} operands, got {len(args)}")
        k = self.kind
        if k == "prefix":
            return Prefix("a", tuple(zip(self.weights, args)))
        if k == "finiter":
            return FinIter(args[0], self.n)
        if k == "finrepl":
            return FinRepl(self.n, args[0])
        if k == "pbang":
            return PBang(self.p, args[0])
        if k == "pkleene":
            return PKleeneStar(self.p, *args)
        if k in ("palt", "ppar"):
            return (PAlt if k == "palt" else PPar)(self.p, *args)
        if k == "csppar":
            return CspPar(self.sync, *args)
        unary = {"infiter": InfIter, "bang": Bang, "copy": Copy}
        binary = {"alt": Alt, "seq": Seq, "syncpar": SyncPar, "asyncpar": Interleave, "kleene": KleeneStar}
        return (unary.get(k) or binary[k])(*args)

    def __str__(self) -> str:
        extra = []
        if self.n is not None:
            extra.append(f"n={self.n}")
        if self.p is not None:
            extra.append(f"p={self.p}")
        if self.kind == "csppar":
            extra.append("B={" + ",".join(sorted(self.sync)) + "}")
        if self.weights is not None:
            extra.append("w=" + ",".join(str(w) for w in self.weights))
        return self.kind + (f"({', '.join(extra)})" if extra else "")


def combinator(name: str, **params) -> Combinator:
    return Combinator(name, **params)


# ------------------------------------------------------------------ formulas

def d_helper(n: int, lam, e1, e2) -> Fraction:
    """e1 + lam^n (1 - e1/lam) e2, the basic two-component bound.

    ``e1`` must be at most ``lam`` (or exactly 1, a case callers treat apart).
    """
    lam, e1, e2 = Fraction(lam), Fraction(e1), Fraction(e2)
    if e1 > lam and e1 != 1:
        raise DomainError(f"first distance {e1} exceeds the discount factor {lam}")
    value = e1 + lam ** n * (1 - e1 / lam) * e2
    assert 0 <= value <= 1 or e1 == 1, f"bound {value} left [0,1]"
    return min(Fraction(1), max(Fraction(0), value))


def _check_args(op: Combinator, lam: Fraction, eps: Sequence[Fraction]) -> None:
    if len(eps) != op.arity:
        raise ArityError(f"{op.kind} takes {op.arity} component distances, got {len(eps)}")
    for e in eps:
        if not 0 <= e <= 1:
            raise DomainError(f"distance {e} outside [0,1]")
        if op.kind not in ALT_FAMILY and lam < e < 1:
            raise DomainError(f"distance {e} lies strictly between {lam} and 1")


def _iterated(e: Fraction, rate: Fraction, n: int | None) -> Fraction:
    """e (1 + rate + ... + rate^(n-1)), or the full geometric series when n is None."""
    if e in (0, 1):
        return e
    if n is None:
        return e / (1 - rate)
    return e * (1 - rate ** n) / (1 - rate)


def bound(op: Combinator, lam, eps: Sequence) -> Fraction:
    """Upper bound on the distance of two composed terms given the component distances."""
    lam = Fraction(lam)
    if not 0 < lam <= 1:
        raise DomainError(f"discount factor {lam} outside (0,1]")
    eps = [Fraction(e) for e in eps]
    _check_args(op, lam, eps)
    k = op.kind
    if k == "prefix":
        return lam * sum(w * e for w, e in zip(op.weights, eps))
    if k in ("alt", "palt"):
        return max(eps)
    if k == "copy":
        raise DomainError("no compositional bound exists for the copy operator")
    if k in ("finiter", "finrepl") and op.n == 0:
        return Fraction(0)  # the operand never runs
    if 1 in eps:
        return Fraction(1)
    if k == "seq":
        return max(d_helper(1, lam, eps[0], eps[1]), eps[1])
    if k == "syncpar" or (k == "csppar" and op.synchronising):
        return d_helper(0, lam, eps[0], eps[1])
    if k in ("asyncpar", "ppar", "csppar"):
        return max(d_helper(2, lam, eps[0], eps[1]), d_helper(2, lam, eps[1], eps[0]))
    e = eps[0]
    if k == "finiter":
        return _iterated(e, lam - e, op.n)
    if k == "finrepl":
        return _iterated(e, lam * lam - lam * e, op.n)
    if k == "infiter":
        return _iterated(e, lam - e, None)
    if k == "bang":
        return _iterated(e, lam * lam - lam * e, None)
    if k == "pbang":
        return _iterated(e, (1 - op.p) * (lam * lam - lam * e), None)
    # kleene, pkleene
    return max(_iterated(e, lam - e, None), eps[1])


def lipschitz_factor(op: Combinator, lam) -> Fraction | None:
    """Lipschitz constant of the operator, or None when it is not Lipschitz continuous."""
    lam = Fraction(lam)
    k = op.kind
    if k in ("finiter", "finrepl"):
        return Fraction(op.n)
    if k == "pbang":
        return 1 / (1 - (1 - op.p) * lam * lam)
    if k in ("infiter", "kleene", "pkleene"):
        return 1 / (1 - lam) if lam < 1 else None
    if k == "bang":
        return 1 / (1 - lam * lam) if lam < 1 else None
    if k == "copy":
        return None
    return Fraction(1)


# ----------------------------------------------------------------- witnesses

def _regime(lam: Fraction, e: Fraction) -> str:
    if e == 0:
        return "zero"
    if e == 1:
        return "one"
    if e == lam:
        return "lambda"
    if 0 < e < lam:
        return "inside"
    raise DomainError(f"no witness for distance {e} at discount factor {lam}")


def _pair(lam: Fraction, e: Fraction, act: str, good: Term) -> tuple[Term, Term]:
    """Terms ``act.X`` and ``act.good`` at distance ``e``; X degrades ``good`` to 0."""
    regime = _regime(lam, e)
    target = prefix(act, good)
    if regime == "zero":
        return target, target
    if regime == "one":
        return STOP, prefix(act, SKIP)
    if regime == "lambda":
        return prefix(act, STOP), target
    q = e / lam
    return choice(act, [(1 - q, good), (q, STOP)]), target


def family(op: Combinator) -> str:
    k = op.kind
    if k in ALT_FAMILY:
        return "alt"
    if k in ("asyncpar", "ppar", "finrepl", "bang", "pbang") or (k == "csppar" and not op.synchronising):
        return "async"
    if k == "copy":
        return "copy"
    return "seq"


def witness(op: Combinator, lam, eps: Sequence) -> tuple[tuple[Term, ...], tuple[Term, ...]]:
    """Operand pairs (s_i, t_i) with d(s_i, t_i) = eps_i that make ``bound`` an equality."""
    lam = Fraction(lam)
    eps = [Fraction(e) for e in eps]
    if len(eps) != op.arity:
        raise ArityError(f"{op.kind} takes {op.arity} component distances, got {len(eps)}")
    fam = family(op)
    if fam == "copy":
        raise DomainError("use copy_ladder for the copy operator")
    pairs = []
    for i, e in enumerate(eps):
        if fam == "alt":
            pairs.append(_pair(lam, e, f"a{i + 1}", SKIP))
        elif fam == "seq":
            shared = min(op.sync - {TICK}) if op.kind == "csppar" else "a"
            pairs.append(_pair(lam, e, shared, SKIP))
        else:
            pairs.append(_pair(lam, e, f"a{i + 1}", prefix("a")))
    return tuple(s for s, _ in pairs), tuple(t for _, t in pairs)


def sharpened_witness(op: Combinator, lam, eps: Sequence) -> tuple[tuple[Term, ...], tuple[Term, ...]]:
    """Witnesses that also reach the bound where the standard ones fall short.

    * Kleene stars: body and exit use distinct actions, so the probabilistic
      star never mixes their moves and exit differences show up at once.
    * Sequential composition: the first operands may also terminate
      immediately (``eps + ...``), letting the second operands start without
      a discounted step.  This attains the ``d(s2, t2)`` branch of the max.

    Every other operator gets the standard witnesses.
    """
    lam = Fraction(lam)
    eps = [Fraction(e) for e in eps]
    if op.kind in ("kleene", "pkleene"):
        if len(eps) != 2:
            raise ArityError(f"{op.kind} takes 2 component distances, got {len(eps)}")
        pairs = [_pair(lam, e, f"a{i + 1}", SKIP) for i, e in enumerate(eps)]
        return tuple(s for s, _ in pairs), tuple(t for _, t in pairs)
    if op.kind == "seq":
        if len(eps) != 2:
            raise ArityError(f"seq takes 2 component distances, got {len(eps)}")
        s1, t1 = _pair(lam, eps[0], "a1", SKIP)
        if eps[0] != 1:
            s1, t1 = Alt(SKIP, s1), Alt(SKIP, t1)
        s2, t2 = _pair(lam, eps[1], "a", SKIP)
        return (s1, s2), (t1, t2)
    return witness(op, lam, eps)


def copy_ladder(k: int, eps) -> tuple[Term, Term]:
    """Terms s_k, t_k at distance lambda^k eps whose copies drift apart as 1 - (1 - eps)^(2^k)."""
    eps = Fraction(eps)
    if k < 1:
        raise DomainError("ladder starts at k = 1")
    if not 0 <= eps <= 1:
        raise DomainError(f"distance {eps} outside [0,1]")
    body = choice("l", [(1 - eps, prefix("a")), (eps, STOP)])
    s = Alt(body, choice("r", [(1 - eps, prefix("a")), (eps, STOP)]))
    t = Alt(prefix("l", prefix("a")), prefix("r", prefix("a")))
    for _ in range(k - 1):
        s = Alt(prefix("l", s), prefix("r", s))
        t = Alt(prefix("l", t), prefix("r", t))
    return s, t


# -------------------------------------------------------------- verification

@dataclass(frozen=True)
class BoundReport:
    formula_value: Fraction
    engine_lower: Fraction
    engine_upper: Fraction
    tight: bool
    depth_used: int
    witness: str = "standard"

    @property
    def sound(self) -> bool:
        return self.engine_lower <= self.formula_value


def verify_tightness(op: Combinator, lam, eps: Sequence, depth: int = 30,
                     budget: int = DEFAULT_PAIR_BUDGET, sharpened: bool = True) -> BoundReport:
    """Compose the witnesses under ``op`` and compare the engine with ``bound``.

    The standard witnesses are tried first.  If they are not tight and
    ``sharpened`` is set, the sharpened witnesses are tried, and the report
    records which family was used.

    Acyclic compositions are solved exactly.  Cyclic ones are iterated to
    ``depth``; they count as tight when the iteration stabilises on the
    formula value, or at a discount below 1 when the bracket
    ``[d_depth, d_depth + lam^depth]`` contains it.  Replication terms are
    explored modulo reordering of their interleaved copies (see
    ``interleave_normal_form``), which keeps the state space polynomial.
    """
    report = _check(op, Fraction(lam), eps, depth, budget, witness(op, lam, eps), "standard")
    if report.tight or not sharpened or op.kind not in ("seq", "kleene", "pkleene"):
        return report
    better = _check(op, Fraction(lam), eps, depth, budget, sharpened_witness(op, lam, eps), "sharpened")
    return better if better.tight else report


def _check(op, lam, eps, depth, budget, pairs, label) -> BoundReport:
    formula = bound(op, lam, eps)
    ss, ts = pairs
    s, t = op.compose(ss), op.compose(ts)
    if op.kind in CYCLIC:
        reduce = interleave_normal_form if op.kind in ("bang", "pbang") else None
        engine = MetricEngine(lam, budget, normalize=reduce)
        lower = engine.upto(s, t, depth)
        if engine.table.stable_at is not None:
            return BoundReport(formula, lower, lower, lower == formula, engine.table.stable_at, label)
        upper = min(Fraction(1), lower + lam ** depth)
        tight = lam < 1 and lower <= formula <= upper
        return BoundReport(formula, lower, upper, tight, depth, label)
    result = MetricEngine(lam, budget).exact(s, t)
    tight = result.exact and result.lower == formula
    return BoundReport(formula, result.lower, result.upper, tight, result.depth_used, label)
