"""Transition semantics of closed terms.

``derive`` applies the operational rules of every operator directly (there is
no rule interpreter).  Targets are evaluated into ``Distribution`` values with
exact rational masses; duplicate support terms are merged by addition.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple

from .syntax import (
    COPY_LEFT, COPY_RIGHT, COPY_SYNC, STOP, TICK,
    Alt, Bang, Copy, CspPar, FinIter, FinRepl, InfIter, Interleave, KleeneStar,
    PAlt, PBang, PKleeneStar, PPar, Prefix, Seq, Skip, Stop, SyncPar, Term,
)


class BudgetExceeded(RuntimeError):
    """Exploration or iteration hit its configured limit.

    ``partial`` holds whatever was collected so far (a state set for
    reachability, a ``(lower, upper)`` interval for distance queries).
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class Distribution:
    """Finitely supported probability distribution over terms with exact masses."""

    __slots__ = ("_items", "_hash", "_map", "_skey")

    def __init__(self, masses: Mapping[Term, Fraction] | Iterable[tuple[Term, Fraction]]):
        merged: dict[Term, Fraction] = {}
        pairs = masses.items() if isinstance(masses, Mapping) else masses
        for term, w in pairs:
            w = Fraction(w)
            if w < 0:
                raise ValueError(f"negative mass {w}")
            if w:
                merged[term] = merged.get(term, 0) + w
        if sum(merged.values()) != 1:
            raise ValueError(f"masses sum to {sum(merged.values())}, not 1")
        self._init(merged)

    def _init(self, merged: dict[Term, Fraction]) -> None:
        self._items = tuple(sorted(merged.items(), key=lambda kv: kv[0].sort_key()))
        self._map = merged
        self._hash = hash(self._items)
        self._skey = None

    @classmethod
    def _trusted(cls, merged: dict[Term, Fraction]) -> Distribution:
        d = cls.__new__(cls)
        d._init(merged)
        return d

    @classmethod
    def dirac(cls, t: Term) -> Distribution:
        return cls._trusted({t: Fraction(1)})

    @classmethod
    def mix(cls, p: Fraction, left: Distribution, right: Distribution) -> Distribution:
        """p * left + (1 - p) * right."""
        merged: dict[Term, Fraction] = {}
        for t, w in left._items:
            merged[t] = merged.get(t, 0) + p * w
        for t, w in right._items:
            merged[t] = merged.get(t, 0) + (1 - p) * w
        return cls._trusted(merged)

    @classmethod
    def product(cls, build: Callable[[Term, Term], Term],
                left: Distribution, right: Distribution) -> Distribution:
        merged: dict[Term, Fraction] = {}
        for u, wu in left._items:
            for v, wv in right._items:
                t = build(u, v)
                merged[t] = merged.get(t, 0) + wu * wv
        return cls._trusted(merged)

    def map(self, relabel: Callable[[Term], Term]) -> Distribution:
        merged: dict[Term, Fraction] = {}
        for t, w in self._items:
            u = relabel(t)
            merged[u] = merged.get(u, 0) + w
        return Distribution._trusted(merged)

    def items(self) -> tuple[tuple[Term, Fraction], ...]:
        """Support with masses, in canonical term order."""
        return self._items

    @property
    def support(self) -> tuple[Term, ...]:
        return tuple(t for t, _ in self._items)

    def __getitem__(self, t: Term) -> Fraction:
        return self._map.get(t, Fraction(0))

    def __contains__(self, t: Term) -> bool:
        return t in self._map

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Term]:
        return iter(self.support)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return isinstance(other, Distribution) and self._hash == other._hash and self._items == other._items

    def sort_key(self) -> tuple:
        if self._skey is None:
            self._skey = tuple((t.sort_key(), w) for t, w in self._items)
        return self._skey

    def __repr__(self) -> str:
        inner = ", ".join(f"{t} -> {w}" for t, w in self._items)
        return "{" + inner + "}"


dirac = Distribution.dirac
_DEAD = Distribution.dirac(STOP)


class TransitionSet:
    """The outgoing transitions of a term, deduplicated and canonically ordered."""

    __slots__ = ("transitions", "_by_action")

    def __init__(self, pairs: Iterable[tuple[str, Distribution]]):
        unique = set(pairs)
        self.transitions = tuple(sorted(unique, key=lambda ad: (ad[0], ad[1].sort_key())))
        by_action: dict[str, list[Distribution]] = {}
        for a, mu in self.transitions:
            by_action.setdefault(a, []).append(mu)
        self._by_action = {a: tuple(ds) for a, ds in by_action.items()}

    @property
    def actions(self) -> frozenset[str]:
        return frozenset(self._by_action)

    def der(self, action: str) -> tuple[Distribution, ...]:
        return self._by_action.get(action, ())

    def can(self, action: str) -> bool:
        return action in self._by_action

    def __iter__(self):
        return iter(self.transitions)

    def __len__(self) -> int:
        return len(self.transitions)

    def __eq__(self, other) -> bool:
        return isinstance(other, TransitionSet) and self.transitions == other.transitions

    def __hash__(self) -> int:
        return hash(self.transitions)

    def __repr__(self) -> str:
        return "TransitionSet(" + ", ".join(f"{a}: {mu!r}" for a, mu in self.transitions) + ")"


def derive(t: Term, cache: dict | None = None) -> TransitionSet:
    """All transitions of ``t``.

    Pass a dict as ``cache`` to memoize derivations of subterms; the caller
    owns it, so nothing is shared between unrelated queries.
    """
    if cache is None:
        return TransitionSet(_rules(t, derive))
    hit = cache.get(t)
    if hit is None:
        hit = TransitionSet(_rules(t, lambda u: derive(u, cache)))
        cache[t] = hit
    return hit


def enabled(t: Term, cache: dict | None = None) -> frozenset[str]:
    return derive(t, cache).actions


def _rules(t: Term, der: Callable[[Term], TransitionSet]) -> list[tuple[str, Distribution]]:
    if isinstance(t, Stop):
        return []
    if isinstance(t, Skip):
        return [(TICK, _DEAD)]
    if isinstance(t, Prefix):
        return [(t.action, Distribution._trusted(_merge((u, w) for w, u in t.branches)))]
    if isinstance(t, Seq):
        return _seq(der(t.left), der(t.right), t.right)
    if isinstance(t, Alt):
        return list(der(t.left)) + list(der(t.right))
    if isinstance(t, PAlt):
        return _palt(t, der(t.left), der(t.right))
    if isinstance(t, SyncPar):
        return _sync(der(t.left), der(t.right))
    if isinstance(t, Interleave):
        return _interleave(t, der(t.left), der(t.right))
    if isinstance(t, PPar):
        return _ppar(t, der(t.left), der(t.right))
    if isinstance(t, CspPar):
        return _csp(t, der(t.left), der(t.right))
    if isinstance(t, FinIter):
        return _finiter(t, der(t.body))
    if isinstance(t, InfIter):
        then_loop = lambda u: Seq(u, t)  # noqa: E731
        return [(a, mu.map(then_loop)) for a, mu in der(t.body) if a != TICK]
    if isinstance(t, KleeneStar):
        then_loop = lambda u: Seq(u, t)  # noqa: E731
        out = [(a, mu.map(then_loop)) for a, mu in der(t.body) if a != TICK]
        return out + list(der(t.exit))
    if isinstance(t, PKleeneStar):
        return _pkleene(t, der(t.body), der(t.exit))
    if isinstance(t, FinRepl):
        if t.n == 0:
            return [(TICK, _DEAD)]
        rest = FinRepl(t.n - 1, t.body)
        out = []
        for a, mu in der(t.body):
            out.append((a, mu) if a == TICK else (a, mu.map(lambda u: Interleave(u, rest))))
        return out
    if isinstance(t, Bang):
        return [(a, mu.map(lambda u: Interleave(u, t))) for a, mu in der(t.body) if a != TICK]
    if isinstance(t, PBang):
        return [(a, Distribution.mix(t.p, mu, mu.map(lambda u: Interleave(u, t))))
                for a, mu in der(t.body) if a != TICK]
    if isinstance(t, Copy):
        return _copy(der(t.body))
    raise TypeError(f"not a term: {t!r}")


def _merge(pairs: Iterable[tuple[Term, Fraction]]) -> dict[Term, Fraction]:
    merged: dict[Term, Fraction] = {}
    for u, w in pairs:
        merged[u] = merged.get(u, 0) + w
    return merged


def _seq(x: TransitionSet, y: TransitionSet, right: Term):
    out = [(a, mu.map(lambda u: Seq(u, right))) for a, mu in x if a != TICK]
    if x.can(TICK):
        out.extend(y)
    return out


def _palt(t: PAlt, x: TransitionSet, y: TransitionSet):
    out = []
    for a in x.actions | y.actions:
        xs, ys = x.der(a), y.der(a)
        if xs and ys:
            out.extend((a, Distribution.mix(t.p, mu, nu)) for mu in xs for nu in ys)
        else:
            out.extend((a, mu) for mu in xs or ys)
    return out


def _both_tick(x: TransitionSet, y: TransitionSet):
    return [(TICK, _DEAD)] if x.can(TICK) and y.can(TICK) else []


def _sync(x: TransitionSet, y: TransitionSet):
    out = _both_tick(x, y)
    for a in (x.actions & y.actions) - {TICK}:
        out.extend((a, Distribution.product(SyncPar, mu, nu)) for mu in x.der(a) for nu in y.der(a))
    return out


def _interleave(t: Interleave, x: TransitionSet, y: TransitionSet):
    out = _both_tick(x, y)
    out.extend((a, mu.map(lambda u: Interleave(u, t.right))) for a, mu in x if a != TICK)
    out.extend((a, nu.map(lambda v: Interleave(t.left, v))) for a, nu in y if a != TICK)
    return out


def _ppar(t: PPar, x: TransitionSet, y: TransitionSet):
    p = t.p
    left_moves = lambda mu: mu.map(lambda u: PPar(p, u, t.right))  # noqa: E731
    right_moves = lambda nu: nu.map(lambda v: PPar(p, t.left, v))  # noqa: E731
    out = _both_tick(x, y)
    for a in (x.actions | y.actions) - {TICK}:
        xs, ys = x.der(a), y.der(a)
        if xs and ys:
            out.extend((a, Distribution.mix(p, left_moves(mu), right_moves(nu))) for mu in xs for nu in ys)
        elif xs:
            out.extend((a, left_moves(mu)) for mu in xs)
        else:
            out.extend((a, right_moves(nu)) for nu in ys)
    return out


def _csp(t: CspPar, x: TransitionSet, y: TransitionSet):
    sync = t.sync
    out = _both_tick(x, y)
    for a in (x.actions | y.actions) - {TICK}:
        if a in sync:
            build = lambda u, v: CspPar(sync, u, v)  # noqa: E731
            out.extend((a, Distribution.product(build, mu, nu)) for mu in x.der(a) for nu in y.der(a))
        else:
            out.extend((a, mu.map(lambda u: CspPar(sync, u, t.right))) for mu in x.der(a))
            out.extend((a, nu.map(lambda v: CspPar(sync, t.left, v))) for nu in y.der(a))
    return out


def _finiter(t: FinIter, x: TransitionSet):
    if t.n == 0:
        return [(TICK, _DEAD)]
    out = []
    for a, mu in x:
        if a == TICK:
            out.append((a, mu))
        else:
            rest = FinIter(t.body, t.n - 1)
            out.append((a, mu.map(lambda u: Seq(u, rest))))
    # A body that may terminate immediately lets any later round start now;
    # every number m < n of remaining rounds is offered.
    if x.can(TICK):
        for m in range(t.n):
            rest_m = FinIter(t.body, m)
            out.extend((a, nu.map(lambda u: Seq(u, rest_m))) for a, nu in x if a != TICK)
    return out


def _pkleene(t: PKleeneStar, x: TransitionSet, y: TransitionSet):
    loop = lambda mu: mu.map(lambda u: Seq(u, t))  # noqa: E731
    out = [(TICK, nu) for nu in y.der(TICK)]
    for a in (x.actions | y.actions) - {TICK}:
        xs, ys = x.der(a), y.der(a)
        if xs and ys:
            out.extend((a, Distribution.mix(t.p, nu, loop(mu))) for mu in xs for nu in ys)
        elif xs:
            out.extend((a, loop(mu)) for mu in xs)
        else:
            out.extend((a, nu) for nu in ys)
    return out


def _copy(x: TransitionSet):
    out = [(a, mu) for a, mu in x if a not in (COPY_LEFT, COPY_RIGHT)]
    for mu in x.der(COPY_LEFT):
        for nu in x.der(COPY_RIGHT):
            out.append((COPY_SYNC, Distribution.product(SyncPar, mu.map(Copy), nu.map(Copy))))
    return out


def interleave_normal_form(t: Term) -> Term:
    """Reorder a top-level chain of ``|||`` into a canonical right-nested chain.

    Interleaving is associative and commutative up to bisimilarity, so the
    result is bisimilar to ``t``.  Used only where exploring every syntactic
    ordering of replicated copies is infeasible.
    """
    if not isinstance(t, Interleave):
        return t
    parts = []
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, Interleave):
            stack.append(u.right)
            stack.append(u.left)
        else:
            parts.append(u)
    parts.sort(key=lambda u: u.sort_key())
    out = parts[-1]
    for u in reversed(parts[:-1]):
        out = Interleave(u, out)
    return out


class Reach(NamedTuple):
    states: frozenset
    truncated: bool


def reachable(t: Term, depth: int | None = None, budget: int = 100_000,
              strict: bool = False, cache: dict | None = None) -> Reach:
    """States reachable from ``t`` within ``depth`` steps (unbounded if None).

    Exploration stops once ``budget`` distinct states are known; the result is
    then flagged as truncated, or ``BudgetExceeded`` is raised when ``strict``.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    cache = {} if cache is None else cache
    seen = {t}
    frontier = deque([(t, 0)])
    while frontier:
        u, k = frontier.popleft()
        if depth is not None and k >= depth:
            continue
        for _, mu in derive(u, cache):
            for v in mu.support:
                if v in seen:
                    continue
                if len(seen) >= budget:
                    if strict:
                        raise BudgetExceeded(f"more than {budget} reachable states", frozenset(seen))
                    return Reach(frozenset(seen), True)
                seen.add(v)
                frontier.append((v, k + 1))
    return Reach(frozenset(seen), False)
