"""Bounded retransmission protocol: model builders, performance translations
and distance bounds.

The model is a remote control RC sending a stream of up to N data items to a
TV over lossy channels.  Each datum may be retransmitted T times; p is the
probability that a datum is lost and q the probability that its
acknowledgement is lost.  ``p = q = 0`` gives the reference model with
perfect channels.

A lossy channel step picks its outcome with a probabilistic choice between
two processes.  That choice is encoded as an internal prefix (``try`` for the
datum, ``try2`` for the acknowledgement) whose distribution selects the
continuation, so the whole model stays inside the term language.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .bounds import BoundReport
from .metric import DEFAULT_PAIR_BUDGET, MetricEngine
from .syntax import (
    SKIP, STOP, Alt, CspPar, FinIter, InfIter, KleeneStar, Seq, Term, choice, prefix,
)

ACK, LOST, BOT = "ack", "lost", "bot"
RES_OK, RES_NOK = "res_OK", "res_NOK"
TRY, TRY2 = "try", "try2"


class ParamError(ValueError):
    pass


class NoSolution(ValueError):
    pass


def send_action(d: int, b: int) -> str:
    return f"c_d{d}_b{b}"


def input_action(d: int) -> str:
    return f"i_d{d}"


def length_action(n: int) -> str:
    return f"i_n{n}"


def output_action(d: int) -> str:
    return f"o_d{d}"


@dataclass(frozen=True)
class BrpParams:
    n: int
    t: int
    p: Fraction = Fraction(0)
    q: Fraction = Fraction(0)
    domain_size: int = 1

    def __post_init__(self):
        for name in ("n", "t", "domain_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ParamError(f"{name} must be a natural number >= 1, got {v!r}")
        for name in ("p", "q"):
            v = Fraction(getattr(self, name))
            if not 0 <= v <= 1:
                raise ParamError(f"{name} = {v} outside [0,1]")
            object.__setattr__(self, name, v)

    @property
    def reference(self) -> "BrpParams":
        """The same protocol with perfect channels."""
        return BrpParams(self.n, self.t, Fraction(0), Fraction(0), self.domain_size)


# ------------------------------------------------------------------ builders

def _nok() -> Term:
    return prefix(RES_NOK, STOP)


def build_ch_prime(d: int, b: int, t: int, p, q) -> Term:
    """Transmission attempt of datum ``d`` with bit ``b`` and ``t`` tries left."""
    if t == 0:
        return _nok()
    p = Fraction(p)
    lose = prefix(BOT, build_ch_prime(d, b, t - 1, p, q))
    send = prefix(send_action(d, b), build_ch2(d, b, t, p, q))
    return choice(TRY, [(p, lose), (1 - p, send)])


def build_ch2(d: int, b: int, t: int, p, q) -> Term:
    """Acknowledgement stage after datum ``d`` went through."""
    if t == 0:
        return _nok()
    q = Fraction(q)
    lost = prefix(LOST, build_ch_prime(d, b, t - 1, p, q))
    acked = prefix(ACK, SKIP)
    return choice(TRY2, [(q, lost), (1 - q, acked)])


def build_ch(b: int, t: int, p, q, domain_size: int = 1) -> Term:
    """Channel for one datum with alternating bit ``b``; the datum is chosen first."""
    branches = [prefix(input_action(d), build_ch_prime(d, b, t, p, q)) for d in range(domain_size)]
    return _alt_all(branches)


def build_rc(params: BrpParams) -> Term:
    """Sender: pick a stream length, push that many data through alternating channels."""
    ch0 = build_ch(0, params.t, params.p, params.q, params.domain_size)
    ch1 = build_ch(1, params.t, params.p, params.q, params.domain_size)
    pair = Seq(ch0, ch1)
    even, odd = [], []
    for n in range(1, params.n + 1):
        if n % 2 == 0:
            even.append(prefix(length_action(n), FinIter(pair, n // 2)))
        else:
            odd.append(prefix(length_action(n), Seq(FinIter(pair, (n - 1) // 2), ch0)))
    streams = [_alt_all(xs) for xs in (even, odd) if xs]
    return Seq(_alt_all(streams), prefix(RES_OK, SKIP))


def build_tv(domain_size: int = 1) -> Term:
    """Receiver: drop repeated bits, output fresh data, alternate the expected bit."""
    reply = Alt(prefix(ACK, SKIP), prefix(LOST, SKIP))

    def half(expected: int) -> Term:
        stale = _alt_all([prefix(send_action(d, 1 - expected), reply) for d in range(domain_size)])
        fresh = _alt_all([prefix(send_action(d, expected), prefix(output_action(d), reply))
                          for d in range(domain_size)])
        return KleeneStar(stale, fresh)

    return InfIter(Seq(half(0), half(1)))


def sync_set(domain_size: int = 1) -> frozenset[str]:
    sends = {send_action(d, b) for d in range(domain_size) for b in (0, 1)}
    return frozenset(sends | {ACK, LOST})


def build_brp(params: BrpParams) -> Term:
    return CspPar(sync_set(params.domain_size), build_rc(params), build_tv(params.domain_size))


def _alt_all(terms: list[Term]) -> Term:
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Alt(t, out)
    return out


# ------------------------------------------------- performance translations

class StreamPerf(NamedTuple):
    no_retry: float
    exactly_k: float
    at_most_k: float
    at_least_n: float
    all_items: float


class ChannelPerf(NamedTuple):
    no_retry: float
    exactly_k: float
    at_most_k: float
    delivered: float


def _at_most(eps: float, items: int, k: int) -> float:
    """(1-eps) * sum_{i<=k} (1 - (1-eps)^(1/items))^i, in closed form."""
    root = (1.0 - eps) ** (1.0 / items)
    if root == 0.0:
        return 0.0
    return (1.0 - eps) * (1.0 - (1.0 - root) ** (k + 1)) / root


def perf_from_epsilon(eps, n: int, t: int, k: int | None = None, items: int | None = None) -> StreamPerf:
    """Stream-level likelihoods implied by the distance ``eps`` between the
    reference protocol and an implementation.

    ``k`` (retries) defaults to 0 and ``items`` (the "at least" count)
    defaults to ``n``.
    """
    eps = float(eps)
    if not 0.0 <= eps <= 1.0:
        raise ParamError(f"eps = {eps} outside [0,1]")
    k = 0 if k is None else k
    items = n if items is None else items
    if not 0 <= k <= n * t or not 1 <= items <= n:
        raise ParamError(f"need 0 <= k <= {n * t} and 1 <= items <= {n}")
    per_item_fail = 1.0 - (1.0 - eps) ** (1.0 / n)
    return StreamPerf(
        no_retry=1.0 - eps,
        exactly_k=(1.0 - eps) * per_item_fail ** k,
        at_most_k=_at_most(eps, n, k),
        at_least_n=_at_most(eps, items, items * t),
        all_items=_at_most(eps, n, n * t),
    )


def perf_channel_from_delta(delta, t: int, k: int | None = None) -> ChannelPerf:
    """Channel-level likelihoods implied by the channel distance ``delta``;
    ``k`` defaults to 0."""
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise ParamError(f"delta = {delta} outside [0,1]")
    k = 0 if k is None else k
    return ChannelPerf(
        no_retry=1.0 - delta,
        exactly_k=(1.0 - delta) * delta ** k,
        at_most_k=1.0 - delta ** (k + 1),
        delivered=1.0 - delta ** (t + 1),
    )


def solve_for_epsilon(target, n: int, t: int, tol: float = 1e-9) -> float:
    """Largest distance whose all-items likelihood still reaches ``target``.

    The likelihood is strictly decreasing in eps, so plain bisection on [0,1]
    finds the crossing.
    """
    target = float(target)
    top = perf_from_epsilon(0.0, n, t).all_items
    if target > top:
        raise NoSolution(f"target {target} exceeds the best attainable likelihood {top}")
    if target == top:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if perf_from_epsilon(mid, n, t).all_items >= target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def channel_requirement(eps, n: int) -> float:
    """Channel distance that keeps an n-item stream within ``eps``."""
    return 1.0 - (1.0 - float(eps)) ** (1.0 / n)


# ------------------------------------------------------------------ bounds

def ch_bound(p, q) -> Fraction:
    p, q = Fraction(p), Fraction(q)
    return 1 - (1 - p) * (1 - q)


def brp_bound_from_delta(delta, n: int) -> Fraction:
    return 1 - (1 - Fraction(delta)) ** n


def brp_bound(n: int, p, q) -> Fraction:
    return brp_bound_from_delta(ch_bound(p, q), n)


def uniform_bound(n: int, p, q) -> Fraction:
    """Coarser linear bound n * (p + q - pq); can exceed 1."""
    return n * ch_bound(p, q)


@dataclass(frozen=True)
class BrpReport:
    params: BrpParams
    lam: Fraction
    depth: int
    channel: BoundReport
    protocol: BoundReport
    uniform: Fraction

    @property
    def ok(self) -> bool:
        return (self.channel.sound and self.protocol.sound
                and self.protocol.engine_lower <= self.uniform)


def verify_brp_bound(params: BrpParams, lam=1, depth: int = 20,
                     budget: int = DEFAULT_PAIR_BUDGET) -> BrpReport:
    """Compare up-to-``depth`` distances of the channel and the full protocol
    against their bounds.

    The internal ``try``/``try2`` steps delay every observable action, so
    discounted distances come out smaller than the bounds suggest; the check
    is one-sided (engine value <= bound) and most informative at ``lam = 1``.
    """
    lam = Fraction(lam)
    ref = params.reference
    engine = MetricEngine(lam, budget)
    ch_ref = build_ch(0, ref.t, 0, 0, ref.domain_size)
    ch_impl = build_ch(0, params.t, params.p, params.q, params.domain_size)
    ch_value = engine.upto(ch_ref, ch_impl, depth)
    engine = MetricEngine(lam, budget)
    brp_value = engine.upto(build_brp(ref), build_brp(params), depth)
    ch_formula = ch_bound(params.p, params.q)
    brp_formula = brp_bound(params.n, params.p, params.q)
    width = lam ** depth
    return BrpReport(
        params, lam, depth,
        channel=BoundReport(ch_formula, ch_value, min(Fraction(1), ch_value + width),
                            ch_value == ch_formula, depth),
        protocol=BoundReport(brp_formula, brp_value, min(Fraction(1), brp_value + width),
                             brp_value == brp_formula, depth),
        uniform=uniform_bound(params.n, params.p, params.q),
    )
