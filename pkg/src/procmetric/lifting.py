"""Liftings of a distance on terms to distributions and to sets of distributions.

The Kantorovich lifting is computed exactly: marginals and costs are scaled to
integers and the transportation problem is solved by successive shortest
augmenting paths.  No floating point is involved anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Callable, Iterable, Sequence

from .semantics import Distribution
from .syntax import Term

DistanceOracle = Callable[[Term, Term], Fraction]


@dataclass(frozen=True)
class TransportPlan:
    rows: tuple[Term, ...]
    cols: tuple[Term, ...]
    mass: tuple[tuple[Fraction, ...], ...]

    def __getitem__(self, key: tuple[Term, Term]) -> Fraction:
        u, v = key
        return self.mass[self.rows.index(u)][self.cols.index(v)]

    def entries(self) -> list[tuple[Term, Term, Fraction]]:
        """Nonzero shipments as (row term, column term, mass)."""
        return [(u, v, w)
                for u, row in zip(self.rows, self.mass)
                for v, w in zip(self.cols, row) if w]

    def cost(self, d: DistanceOracle) -> Fraction:
        return sum((w * Fraction(d(u, v)) for u, v, w in self.entries()), Fraction(0))


def kantorovich(d: DistanceOracle, left: Distribution, right: Distribution) -> tuple[Fraction, TransportPlan]:
    """Optimal transport cost between two distributions under ``d``, with an optimal plan."""
    rows, cols = left.support, right.support
    cost = [[Fraction(d(u, v)) for v in cols] for u in rows]
    value, flow = transport([w for _, w in left.items()], [w for _, w in right.items()], cost)
    plan = TransportPlan(rows, cols, tuple(tuple(r) for r in flow))
    return value, plan


def transport(supply: Sequence[Fraction], demand: Sequence[Fraction],
              cost: Sequence[Sequence[Fraction]]) -> tuple[Fraction, list[list[Fraction]]]:
    """Minimum-cost transportation between two rational marginals of equal total mass.

    Returns the optimal cost and an optimal flow matrix.  Ties between
    equally short augmenting paths go to the lowest row/column index, so the
    plan is deterministic for a given input order.
    """
    n, m = len(supply), len(demand)
    if sum(supply) != sum(demand):
        raise ValueError("marginals carry different total mass")
    if n == 1 or m == 1:
        flow = [[Fraction(b) if n == 1 else Fraction(a) for b in demand] for a in supply]
        value = sum((flow[i][j] * cost[i][j] for i in range(n) for j in range(m)), Fraction(0))
        return value, flow

    scale = lcm(*(Fraction(w).denominator for w in (*supply, *demand)))
    cscale = lcm(*(Fraction(c).denominator for row in cost for c in row))
    s = [int(Fraction(w) * scale) for w in supply]
    t = [int(Fraction(w) * scale) for w in demand]
    c = [[int(Fraction(x) * cscale) for x in row] for row in cost]
    x = _successive_shortest_paths(s, t, c)
    total = sum(x[i][j] * c[i][j] for i in range(n) for j in range(m))
    value = Fraction(total, scale * cscale)
    return value, [[Fraction(x[i][j], scale) for j in range(m)] for i in range(n)]


def _successive_shortest_paths(s: list[int], t: list[int], c: list[list[int]]) -> list[list[int]]:
    n, m = len(s), len(t)
    x = [[0] * m for _ in range(n)]
    rem_s, rem_t = list(s), list(t)
    inf = None
    while any(rem_s):
        # Bellman-Ford over the residual network; every row with spare supply
        # is a source at distance 0.  Arcs row->col always exist (uncapacitated);
        # col->row exists where flow can be pushed back.
        dr = [0 if rem_s[i] else inf for i in range(n)]
        dc = [inf] * m
        pred_c = [-1] * m  # row feeding each column
        pred_r = [-1] * n  # column feeding each row (via a backward arc)
        changed = True
        while changed:
            changed = False
            for i in range(n):
                di = dr[i]
                if di is None:
                    continue
                ci = c[i]
                for j in range(m):
                    nd = di + ci[j]
                    if dc[j] is None or nd < dc[j]:
                        dc[j] = nd
                        pred_c[j] = i
                        changed = True
            for j in range(m):
                dj = dc[j]
                if dj is None:
                    continue
                for i in range(n):
                    if x[i][j] > 0:
                        nd = dj - c[i][j]
                        if dr[i] is None or nd < dr[i]:
                            dr[i] = nd
                            pred_r[i] = j
                            changed = True
        end = min((j for j in range(m) if rem_t[j] and dc[j] is not None), key=lambda j: (dc[j], j))
        # Walk back to a source row, collecting the path and its bottleneck.
        path = []
        j = end
        while True:
            i = pred_c[j]
            path.append((i, j))
            if pred_r[i] == -1:
                break
            j = pred_r[i]
        start = path[-1][0]
        push = min(rem_s[start], rem_t[end])
        backward = [(path[k][0], path[k + 1][1]) for k in range(len(path) - 1)]
        for i, j in backward:
            push = min(push, x[i][j])
        for i, j in path:
            x[i][j] += push
        for i, j in backward:
            x[i][j] -= push
        rem_s[start] -= push
        rem_t[end] -= push
    return x


def hausdorff(dd: Callable[[Distribution, Distribution], Fraction],
              left: Iterable[Distribution], right: Iterable[Distribution]) -> Fraction:
    """Hausdorff lifting of a distance on distributions to finite sets of them.

    The infimum over an empty set is 1 and the supremum over an empty set is 0.
    """
    left, right = list(left), list(right)
    forward = _sup_inf(left, right, dd)
    backward = _sup_inf(right, left, lambda a, b: dd(b, a))
    return max(forward, backward)


def _sup_inf(xs, ys, dd) -> Fraction:
    worst = Fraction(0)
    for a in xs:
        best = None
        for b in ys:
            v = dd(a, b)
            if best is None or v < best:
                best = v
                if best == 0:
                    break
        best = Fraction(1) if best is None else best
        if best > worst:
            worst = best
    return worst
