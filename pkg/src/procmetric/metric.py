"""Discounted bisimulation distances by value iteration.

``d_k`` is the k-th iterate of the bisimulation functional starting from the
zero distance.  Every query explores the space of term pairs reachable from
the root pair and then iterates over that table.  Only pairs with a changed
successor are recomputed in the next round.  When two consecutive iterates
agree on the whole (closed) table, the least fixed point has been reached and
the answer is exact.  Otherwise an interval ``[d_k, d_k + lambda^k]`` is
reported.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator

from .lifting import transport
from .semantics import BudgetExceeded, Distribution, derive
from .syntax import Term

DEFAULT_PAIR_BUDGET = 100_000
DEFAULT_MAX_ITER = 1000

Pair = tuple[Term, Term]

__all__ = [
    "BudgetExceeded", "DistanceResult", "DistanceTable", "MetricEngine",
    "approx", "canonical", "exact_distance", "upto_k",
]


def canonical(u: Term, v: Term) -> Pair:
    return (u, v) if u.sort_key() <= v.sort_key() else (v, u)


@dataclass(frozen=True)
class DistanceResult:
    lower: Fraction
    upper: Fraction
    depth_used: int
    exact: bool

    @property
    def value(self) -> Fraction:
        if not self.exact:
            raise ValueError("distance only known up to an interval")
        return self.lower


class DistanceTable:
    """History of the iterates on every explored pair of one query.

    Only changes are stored: the value at depth k is the last recorded value
    at a depth <= k (0 if none).
    """

    def __init__(self, lam: Fraction):
        self.lam = lam
        self._hist: dict[Pair, tuple[list[int], list[Fraction]]] = {}
        self._valid: dict[Pair, int] = {}
        self.stable_at: int | None = None  # depth from which the iterates no longer change

    def _record(self, key: Pair, depth: int, value: Fraction) -> None:
        depths, values = self._hist.setdefault(key, ([], []))
        depths.append(depth)
        values.append(value)

    def known_depth(self, key: Pair) -> int | None:
        """Largest depth stored for ``key``, or None when every depth is known."""
        if self.stable_at is not None:
            return None
        return self._valid[key]

    def get(self, s: Term, t: Term, k: int) -> Fraction:
        if s == t:
            return Fraction(0)
        key = canonical(s, t)
        if key not in self._valid:
            raise KeyError(f"pair ({s}, {t}) was not explored")
        if self.stable_at is None and k > self._valid[key]:
            raise KeyError(f"depth {k} not computed for ({s}, {t})")
        depths, values = self._hist.get(key, ((), ()))
        i = bisect_right(depths, k)
        return values[i - 1] if i else Fraction(0)

    def pairs(self) -> Iterator[Pair]:
        return iter(self._valid)

    def history(self, s: Term, t: Term) -> list[tuple[int, Fraction]]:
        """(depth, value) change points for a pair, in increasing depth."""
        depths, values = self._hist.get(canonical(s, t), ((), ()))
        return list(zip(depths, values))

    def __len__(self) -> int:
        return len(self._valid)


class _PairInfo:
    """Structural data of a term pair, independent of the discount factor."""

    __slots__ = ("const", "moves", "succ")

    def __init__(self, const, moves, succ):
        self.const = const  # fixed value from depth 1 on, or None
        self.moves = moves  # per action: list of (supply, demand, key matrix) per (mu, nu)
        self.succ = succ    # tuple of successor pair keys


class _Overflow(Exception):
    def __init__(self, level: int):
        self.level = level


class MetricEngine:
    """Distance queries for one discount factor.

    Derivations and pair structure are cached across queries, distance
    tables are not.  The table of the latest query is kept in ``table``.
    States are syntactic terms unless a ``normalize`` map is supplied.
    """

    def __init__(self, lam, budget: int = DEFAULT_PAIR_BUDGET, max_iter: int = DEFAULT_MAX_ITER,
                 normalize: Callable[[Term], Term] | None = None):
        lam = Fraction(lam)
        if not 0 < lam <= 1:
            raise ValueError(f"discount factor {lam} outside (0,1]")
        self.lam = lam
        self.budget = budget
        self.max_iter = max_iter
        # Optional map to bisimilar representatives; distances are unchanged
        # as long as every term is bisimilar to its image.
        self.normalize = normalize
        self.derivations: dict = {}
        self._info: dict[Pair, _PairInfo] = {}
        self.table: DistanceTable | None = None

    # -------------------------------------------------------------- queries

    def upto(self, s: Term, t: Term, k: int) -> Fraction:
        """d_k(s, t)."""
        if k < 0:
            raise ValueError("depth must be nonnegative")
        s, t = self._rep(s), self._rep(t)
        if s == t or k == 0:
            self.table = DistanceTable(self.lam)
            return Fraction(0)
        root = canonical(s, t)
        level, complete = self._explore_bounded(root, k)
        table = self._iterate(root, level, k, restricted=not complete)
        return table.get(s, t, k)

    def approx(self, s: Term, t: Term, tol) -> DistanceResult:
        tol = Fraction(tol)
        if self.lam >= 1:
            raise ValueError("approximation by depth needs a discount factor below 1")
        if tol <= 0:
            raise ValueError("tolerance must be positive")
        k, width = 0, Fraction(1)
        while width > tol:
            k, width = k + 1, width * self.lam
        lower = self.upto(s, t, k)
        if self.table.stable_at is not None:
            return DistanceResult(lower, lower, k, True)
        return DistanceResult(lower, min(Fraction(1), lower + width), k, False)

    def exact(self, s: Term, t: Term) -> DistanceResult:
        """Least fixed point if the iteration stabilises within ``max_iter`` rounds."""
        s, t = self._rep(s), self._rep(t)
        if s == t:
            self.table = DistanceTable(self.lam)
            self.table.stable_at = 0
            return DistanceResult(Fraction(0), Fraction(0), 0, True)
        root = canonical(s, t)
        try:
            level = self._explore(root, None)
        except _Overflow as over:
            k = over.level
            partial = (Fraction(0), Fraction(1))
            if k > 0:
                level, _ = self._explore_bounded(root, k)
                table = self._iterate(root, level, k, restricted=True)
                lo = table.get(s, t, k)
                partial = (lo, min(Fraction(1), lo + self.lam ** k))
            raise BudgetExceeded(f"more than {self.budget} term pairs", partial) from None
        table = self._iterate(root, level, self.max_iter, restricted=False)
        if table.stable_at is not None:
            v = table.get(s, t, table.stable_at)
            return DistanceResult(v, v, table.stable_at, True)
        k = self.max_iter
        lo = table.get(s, t, k)
        return DistanceResult(lo, min(Fraction(1), lo + self.lam ** k), k, False)

    # ---------------------------------------------------------- exploration

    def _rep(self, t: Term) -> Term:
        return t if self.normalize is None else self.normalize(t)

    def _pair_info(self, key: Pair) -> _PairInfo:
        info = self._info.get(key)
        if info is not None:
            return info
        u, v = key
        du, dv = derive(u, self.derivations), derive(v, self.derivations)
        if du.actions != dv.actions:
            info = _PairInfo(Fraction(1), (), ())
        elif not du.actions:
            info = _PairInfo(Fraction(0), (), ())
        else:
            succ: dict[Pair, None] = {}
            moves = []
            for a in sorted(du.actions):
                mus, nus = du.der(a), dv.der(a)
                if self.normalize is not None:
                    mus = tuple(dict.fromkeys(mu.map(self.normalize) for mu in mus))
                    nus = tuple(dict.fromkeys(nu.map(self.normalize) for nu in nus))
                moves.append([[self._coupling(mu, nu, succ) for nu in nus] for mu in mus])
            info = _PairInfo(None, moves, tuple(sorted(succ, key=lambda p: (p[0].sort_key(), p[1].sort_key()))))
        self._info[key] = info
        return info

    @staticmethod
    def _coupling(mu: Distribution, nu: Distribution, succ: dict):
        if mu == nu:
            return None  # identical distributions are at distance 0
        keys = []
        for x in mu.support:
            row = []
            for y in nu.support:
                if x == y:
                    row.append(None)
                else:
                    key = canonical(x, y)
                    succ[key] = None
                    row.append(key)
            keys.append(row)
        return [w for _, w in mu.items()], [w for _, w in nu.items()], keys

    def _explore(self, root: Pair, max_level: int | None) -> dict[Pair, int]:
        """Breadth-first pair levels; pairs at ``max_level`` are not expanded."""
        level = {root: 0}
        queue = deque([root])
        while queue:
            key = queue.popleft()
            lv = level[key]
            if max_level is not None and lv >= max_level:
                continue
            for q in self._pair_info(key).succ:
                if q not in level:
                    if len(level) >= self.budget:
                        raise _Overflow(lv)
                    level[q] = lv + 1
                    queue.append(q)
        return level

    def _explore_bounded(self, root: Pair, k: int) -> tuple[dict[Pair, int], bool]:
        """Levels up to ``k`` plus whether they already form a closed pair set."""
        try:
            level = self._explore(root, k)
        except _Overflow as over:
            raise BudgetExceeded(f"more than {self.budget} term pairs within depth {k}",
                                 (Fraction(0), Fraction(1))) from None
        frontier = [p for p, lv in level.items() if lv >= k]
        complete = all(q in level for p in frontier for q in self._pair_info(p).succ)
        return level, complete

    # ------------------------------------------------------------ iteration

    def _iterate(self, root: Pair, level: dict[Pair, int], k: int, restricted: bool) -> DistanceTable:
        """Run up to ``k`` rounds.

        In restricted mode a pair at level j is updated only while the round
        number is at most k - j, which is all that d_k at the root needs.
        Otherwise every pair is updated each round and stabilisation is
        detected.
        """
        table = DistanceTable(self.lam)
        self.table = table
        expanded = [p for p, lv in level.items() if not restricted or lv < k]
        dependents: dict[Pair, list[Pair]] = {}
        for p in expanded:
            for q in self._info[p].succ:
                dependents.setdefault(q, []).append(p)
        values: dict[Pair, Fraction] = {}
        lam = self.lam
        dirty = set(expanded)
        rounds = 0
        for i in range(1, k + 1):
            limit = k - i
            changed = {}
            for p in dirty:
                if restricted and level[p] > limit:
                    continue
                v = self._step(p, values, lam)
                if v != values.get(p, 0):
                    changed[p] = v
            rounds = i
            if not changed and not restricted:
                table.stable_at = i - 1
                break
            values.update(changed)
            for p, v in changed.items():
                table._record(p, i, v)
            dirty = {d for p in changed for d in dependents.get(p, ())}
            if restricted:
                dirty = {d for d in dirty if level[d] <= limit - 1}
        for p, lv in level.items():
            table._valid[p] = rounds if not restricted else max(0, k - lv)
        return table

    def _step(self, key: Pair, values: dict[Pair, Fraction], lam: Fraction) -> Fraction:
        info = self._info[key]
        if info.const is not None:
            return info.const
        best = Fraction(0)
        for grid in info.moves:
            k_values = [[_lift(c, values) for c in row] for row in grid]
            forward = max(min(row) for row in k_values)
            backward = max(min(col) for col in zip(*k_values))
            h = lam * max(forward, backward)
            if h > best:
                best = h
                if best >= 1:
                    break
        return best


def _lift(coupling, values: dict[Pair, Fraction]) -> Fraction:
    if coupling is None:
        return Fraction(0)
    supply, demand, keys = coupling
    cost = [[Fraction(0) if key is None else values.get(key, Fraction(0)) for key in row] for row in keys]
    return transport(supply, demand, cost)[0]


def upto_k(s: Term, t: Term, k: int, lam, budget: int = DEFAULT_PAIR_BUDGET) -> Fraction:
    return MetricEngine(lam, budget).upto(s, t, k)


def approx(s: Term, t: Term, lam, tol, budget: int = DEFAULT_PAIR_BUDGET) -> DistanceResult:
    return MetricEngine(lam, budget).approx(s, t, tol)


def exact_distance(s: Term, t: Term, lam, budget: int = DEFAULT_PAIR_BUDGET,
                   max_iter: int = DEFAULT_MAX_ITER) -> DistanceResult:
    return MetricEngine(lam, budget, max_iter).exact(s, t)
