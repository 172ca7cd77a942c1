"""Acceptance suite: one check per criterion, each reporting pass or fail.

``run_all`` runs every criterion; each ``criterion_*`` function can also run
alone.  Criterion 5 re-inspects the engine tables produced while checking
criteria 2 to 4, so those are memoised per process.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, fields
from fractions import Fraction
from functools import lru_cache
from math import lcm

from . import brp
from .bounds import CYCLIC, Combinator, copy_ladder, verify_tightness, witness
from .lifting import kantorovich, transport
from .metric import MetricEngine
from .semantics import Distribution, derive
from .syntax import STOP, Alt, Copy, KleeneStar, Prefix, Term, choice, parse, prefix, random_term

F = Fraction


@dataclass(frozen=True)
class Outcome:
    ident: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.ident}: {self.name} | {self.detail} ({self.seconds:.1f}s)"


# --------------------------------------------------------- brute-force oracle

def brute_force_transport(supply, demand, cost) -> Fraction:
    """Minimum transport cost by exhaustive search over integer flow matrices.

    Masses are scaled to a common denominator; every row is split over the
    columns in every possible way, memoised on the remaining column demand.
    Exponential in general but fine for supports of size 4 and denominators
    up to 12.
    """
    scale = lcm(*(F(w).denominator for w in (*supply, *demand)))
    s = [int(F(w) * scale) for w in supply]
    t = tuple(int(F(w) * scale) for w in demand)
    m = len(t)

    def splits(total, caps):
        if len(caps) == 1:
            if total <= caps[0]:
                yield (total,)
            return
        for x in range(min(total, caps[0]) + 1):
            for rest in splits(total - x, caps[1:]):
                yield (x, *rest)

    @lru_cache(maxsize=None)
    def best(i: int, remaining: tuple) -> Fraction | None:
        if i == len(s):
            return F(0) if not any(remaining) else None
        out = None
        for row in splits(s[i], remaining):
            tail = best(i + 1, tuple(r - x for r, x in zip(remaining, row)))
            if tail is None:
                continue
            here = sum((F(x) * F(cost[i][j]) for j, x in enumerate(row) if x), F(0)) + tail
            if out is None or here < out:
                out = here
        return out

    assert len(cost) == len(s) and all(len(r) == m for r in cost)
    return best(0, t) / scale


def _random_marginal(rng: random.Random, denom: int, size: int) -> list[Fraction]:
    cuts = sorted(rng.sample(range(1, denom), size - 1))
    parts = [b - a for a, b in zip([0, *cuts], [*cuts, denom])]
    return [F(x, denom) for x in parts]


def criterion_1(instances: int = 200, seed: int = 1) -> Outcome:
    rng = random.Random(seed)
    atoms = [prefix(f"x{i}") for i in range(4)] + [prefix(f"y{i}") for i in range(4)]
    mismatches = infeasible = 0
    for _ in range(instances):
        denom = rng.randint(1, 12)
        n, m = rng.randint(1, min(4, denom)), rng.randint(1, min(4, denom))
        supply, demand = _random_marginal(rng, denom, n), _random_marginal(rng, denom, m)
        cost = [[F(rng.randint(0, 12), 12) for _ in range(m)] for _ in range(n)]
        rows, cols = atoms[:n], atoms[4:4 + m]
        table = {(u, v): cost[i][j] for i, u in enumerate(rows) for j, v in enumerate(cols)}
        mu = Distribution(zip(rows, supply))
        nu = Distribution(zip(cols, demand))
        value, plan = kantorovich(lambda u, v: table[(u, v)], mu, nu)
        if value != brute_force_transport(supply, demand, cost):
            mismatches += 1
        row_ok = all(sum(plan[(u, v)] for v in cols) == mu[u] for u in rows)
        col_ok = all(sum(plan[(u, v)] for u in rows) == nu[v] for v in cols)
        nonneg = all(w >= 0 for r in plan.mass for w in r)
        if not (row_ok and col_ok and nonneg and plan.cost(lambda u, v: table[(u, v)]) == value):
            infeasible += 1
    # Dirac case: transporting a point mass costs exactly the point distance.
    dirac_ok = all(transport([F(1)], [F(1)], [[F(k, 7)]])[0] == F(k, 7) for k in range(8))
    a, b = prefix("a"), prefix("b")
    dirac_ok &= kantorovich(lambda u, v: F(3, 5), Distribution.dirac(a), Distribution.dirac(b))[0] == F(3, 5)
    passed = mismatches == 0 and infeasible == 0 and dirac_ok
    return Outcome(1, "Kantorovich solver vs brute force", passed,
                   f"{instances} instances, {mismatches} value mismatches, "
                   f"{infeasible} bad plans, Dirac case {'ok' if dirac_ok else 'wrong'}")


# ------------------------------------------------------------------ shared pool

# (lam, s, t, engine) for every exact distance computed by criteria 2 to 4;
# criterion 5 inspects their tables.
_pool: list[tuple[Fraction, Term, Term, MetricEngine]] = []
_done: dict[int, Outcome] = {}


def _exact(lam, s, t, **kw):
    engine = MetricEngine(lam, **kw)
    result = engine.exact(s, t)
    _pool.append((F(lam), s, t, engine))
    return result


def example_pair() -> tuple[Term, Term]:
    """A state that loses half its mass per step, and a state that starts
    with a quarter of its mass lost before behaving like it."""
    s = KleeneStar(choice("a", [(F(1, 2), parse("eps")), (F(1, 2), STOP)]), STOP)
    t = choice("a", [(F(3, 4), s), (F(1, 4), STOP)])
    return s, t


def criterion_2() -> Outcome:
    s, t = example_pair()
    result = _exact(F(1, 2), s, t)
    passed = result.exact and result.value == F(1, 8)
    shown = result.lower if result.exact else f"[{result.lower}, {result.upper}]"
    return Outcome(2, "discounted example distance", passed, f"exact distance {shown}, expected 1/8")


# ------------------------------------------------------------------ tightness

def tightness_grid() -> list[tuple[Combinator, Fraction, tuple]]:
    half = F(1, 2)
    ops = [
        Combinator("prefix", weights=(half, half)), Combinator("prefix", weights=(F(1, 3), F(2, 3))),
        Combinator("alt"), Combinator("palt", p=F(1, 3)), Combinator("seq"), Combinator("syncpar"),
        Combinator("asyncpar"), Combinator("csppar", sync={"a"}), Combinator("csppar"),
        Combinator("ppar", p=F(1, 3)),
        *(Combinator("finiter", n=n) for n in range(4)),
        *(Combinator("finrepl", n=n) for n in range(3)),
        Combinator("infiter"), Combinator("bang"), Combinator("kleene"),
        Combinator("pkleene", p=half), Combinator("pbang", p=half),
    ]
    grid = []
    for lam in (F(1), F(4, 5)):
        regimes = sorted({F(0), F(1, 4), lam, F(1)})
        for op in ops:
            for eps in itertools.product(regimes, repeat=op.arity):
                grid.append((op, lam, eps))
    return grid


def criterion_3(depth: int = 30) -> Outcome:
    failures, sound_only, sharpened, checked = [], 0, [], 0
    for op, lam, eps in tightness_grid():
        report = verify_tightness(op, lam, eps, depth=depth)
        checked += 1
        label = f"{op}@{lam}{[str(e) for e in eps]}"
        if op.kind in CYCLIC and lam == 1:
            # Undiscounted cycles never stabilise; only d_k <= bound is decidable.
            sound_only += 1
            if not report.sound:
                failures.append(label + " unsound")
            continue
        if not report.tight:
            failures.append(label)
        elif report.witness == "sharpened":
            sharpened.append(label)
    detail = f"{checked} cases, {len(failures)} not tight, {sound_only} soundness-only (cyclic at lambda=1)"
    if sharpened:
        detail += f", {len(sharpened)} needed sharpened witnesses (seq/kleene/pkleene at lambda<1)"
    if failures:
        detail += "; failing: " + ", ".join(failures[:6])
    return Outcome(3, "bounds are attained by witnesses", not failures, detail)


# ------------------------------------------------------------ non-expansive

NON_RECURSIVE = ("prefix", "alt", "palt", "seq", "syncpar", "asyncpar", "csppar-sync", "csppar-free", "ppar")
ALPHABET = ("a", "b")
WEIGHTS = (F(1, 4), F(1, 3), F(1, 2), F(2, 3), F(3, 4))
# Prefix-heavy mix: more probabilistic branching, so distances strictly
# between 0 and 1 are common.
OPERAND_OPS = ("prefix",) * 6 + ("alt", "palt", "seq", "interleave", "sync", "ppar", "csp", "finiter")


def _subterm_slots(t: Term):
    """(index, child) for every direct subterm, in field order."""
    out = []
    for f in fields(t):
        v = getattr(t, f.name)
        if isinstance(v, Term):
            out.append(((f.name, None), v))
        elif f.name == "branches":
            out.extend(((f.name, i), u) for i, (_, u) in enumerate(v))
    return out


def _with_child(t: Term, slot, child: Term) -> Term:
    name, i = slot
    if i is None:
        return type(t)(**{f.name: (child if f.name == name else getattr(t, f.name)) for f in fields(t)})
    branches = list(t.branches)
    branches[i] = (branches[i][0], child)
    return Prefix(t.action, tuple(branches))


def perturb(t: Term, rng: random.Random) -> Term:
    """A nearby term: usually some prefix weights shift, sometimes one
    subterm is replaced by a fresh random term."""
    if rng.random() < 0.25:
        return _replace_somewhere(t, rng)
    out = _reweight(t, rng)
    return out if out != t else _replace_somewhere(t, rng)


def _reweight(t: Term, rng: random.Random) -> Term:
    for slot, child in _subterm_slots(t):
        t = _with_child(t, slot, _reweight(child, rng))
    if isinstance(t, Prefix) and len(t.branches) == 2 and rng.random() < 0.5:
        w = rng.choice([w for w in WEIGHTS if w != t.branches[0][0]])
        return Prefix(t.action, ((w, t.branches[0][1]), (1 - w, t.branches[1][1])))
    return t


def _replace_somewhere(t: Term, rng: random.Random) -> Term:
    slots = _subterm_slots(t)
    if not slots or rng.random() < 0.3:
        return random_term(rng.randrange(10**9), 2, ALPHABET)
    slot, child = rng.choice(slots)
    return _with_child(t, slot, _replace_somewhere(child, rng))


def _operand_pair(rng: random.Random) -> tuple[Term, Term]:
    s = random_term(rng.randrange(10**9), 4, ALPHABET, OPERAND_OPS)
    t = random_term(rng.randrange(10**9), 4, ALPHABET, OPERAND_OPS) if rng.random() < 0.3 else perturb(s, rng)
    return s, t


def _combinator_for(name: str, rng: random.Random) -> Combinator:
    w = rng.choice(WEIGHTS)
    if name == "prefix":
        return Combinator("prefix", weights=(w, 1 - w))
    if name in ("palt", "ppar"):
        return Combinator(name, p=w)
    if name == "csppar-sync":
        return Combinator("csppar", sync={"a"})
    if name == "csppar-free":
        return Combinator("csppar")
    return Combinator(name)


def criterion_4(samples: int = 200, seed: int = 4) -> Outcome:
    violations, counted = [], 0
    lams = (F(1), F(4, 5), F(1, 2))
    for name in NON_RECURSIVE:
        rng = random.Random(f"{seed}-{name}")
        for i in range(samples):
            lam = lams[i % len(lams)]
            op = _combinator_for(name, rng)
            (s1, t1), (s2, t2) = _operand_pair(rng), _operand_pair(rng)
            d1 = _exact(lam, s1, t1).value
            d2 = _exact(lam, s2, t2).value
            d = _exact(lam, op.compose((s1, s2)), op.compose((t1, t2))).value
            counted += 1
            if d > min(F(1), d1 + d2):
                violations.append(f"{name} sum #{i}")
            if name in ("prefix", "alt", "palt") and d > max(d1, d2):
                violations.append(f"{name} max #{i}")
    detail = f"{counted} quadruples over {len(NON_RECURSIVE)} combinators, {len(violations)} violations"
    if violations:
        detail += ": " + ", ".join(violations[:6])
    return Outcome(4, "non-expansive and non-extensive combinators", not violations, detail)


# ------------------------------------------------------------- pseudometric

def _acyclic_witness_pairs():
    for op, lam, eps in tightness_grid():
        if op.kind in CYCLIC:
            continue
        ss, ts = witness(op, lam, eps)
        yield lam, op.compose(ss), op.compose(ts)


def criterion_5() -> Outcome:
    if 2 not in _done:
        _done[2] = criterion_2()
    if 4 not in _done:
        _done[4] = criterion_4()
    for lam, s, t in _acyclic_witness_pairs():
        _exact(lam, s, t)
    problems: list[str] = []
    roots = pairs = 0
    for lam, s, t, engine in _pool:
        table = engine.table
        roots += 1
        if table.stable_at is None:
            problems.append(f"unstable root {s} / {t}")
            continue
        mirror = MetricEngine(lam).exact(t, s).value
        if mirror != table.get(s, t, table.stable_at):
            problems.append(f"asymmetric {s} / {t}")
        if MetricEngine(lam).exact(s, s).value != 0:
            problems.append(f"self-distance {s}")
        for u, v in table.pairs():
            pairs += 1
            hist = table.history(u, v)
            values = [x for _, x in hist]
            final = values[-1] if values else F(0)
            if any(a > b for a, b in zip(values, values[1:])):
                problems.append(f"non-monotone {u} / {v}")
            # d_k is the value of the last change at depth <= k; the widest
            # gap for a value is at the depth just before the next change.
            for (k, x), nxt in zip(hist, [*(h[0] for h in hist[1:]), None]):
                last_k = (nxt - 1) if nxt is not None else k
                if x + lam ** last_k < final:
                    problems.append(f"projection bound {u} / {v} at {last_k}")
            if lam == F(4, 5) and not (final <= lam or final == 1):
                problems.append(f"value {final} outside [0, lambda] u {{1}}")
            if final < 1 and derive(u, engine.derivations).actions != derive(v, engine.derivations).actions:
                problems.append(f"distance {final} < 1 with different enabled actions: {u} / {v}")
    detail = f"{roots} queries, {pairs} explored pairs, {len(problems)} problems"
    if problems:
        detail += ": " + "; ".join(problems[:4])
    return Outcome(5, "pseudometric and structural properties", not problems, detail)


# -------------------------------------------------------------------- copy

def forking_term(rng: random.Random, depth: int) -> Term:
    """Random term offering both forking actions at every level.

    The two sides get the same body, or a perturbed one: the copies run in
    lockstep afterwards, and unrelated bodies would simply deadlock.
    """
    if depth <= 1:
        body = random_term(rng.randrange(10**9), 3, ("a", "b"), OPERAND_OPS)
    else:
        body = forking_term(rng, depth - 1)
    if rng.random() < 0.5:
        other = forking_term(rng, depth - 1) if depth > 1 else body
        w = rng.choice(WEIGHTS)
        body = Prefix("a", ((w, body), (1 - w, other)))
    mirror = body if rng.random() < 0.5 else perturb(body, rng)
    return Alt(Prefix("l", ((F(1), body),)), Prefix("r", ((F(1), mirror),)))


def criterion_6(samples: int = 100, seed: int = 6) -> Outcome:
    problems = []
    eps = F(1, 2)
    for lam in (F(1), F(1, 2)):
        for k in (1, 2):
            s, t = copy_ladder(k, eps)
            base = MetricEngine(lam).exact(s, t).value
            value = MetricEngine(lam).exact(Copy(s), Copy(t)).value
            if base != lam ** k * eps:
                problems.append(f"ladder distance {base} at k={k}, lambda={lam}")
            if value != lam ** k * (1 - (1 - eps) ** (2 ** k)):
                problems.append(f"copy distance {value} at k={k}, lambda={lam}")
    rng = random.Random(seed)
    for i in range(samples):
        lam = (F(1), F(1, 2))[i % 2]
        s = forking_term(rng, 2)
        t = forking_term(rng, 2) if rng.random() < 0.3 else perturb(s, rng)
        for k in range(1, 5):
            d_plain = MetricEngine(lam).upto(s, t, k)
            d_copy = MetricEngine(lam).upto(Copy(s), Copy(t), k)
            if d_copy > 2 ** k * d_plain:
                problems.append(f"sample {i}, k={k}: {d_copy} > 2^{k} * {d_plain}")
    detail = f"ladder k=1,2 at lambda 1 and 1/2, {samples} sampled pairs for k<=4, {len(problems)} problems"
    if problems:
        detail += ": " + "; ".join(problems[:4])
    return Outcome(6, "copy operator distances", not problems, detail)


# --------------------------------------------------------------------- BRP

def criterion_7() -> Outcome:
    problems, parts = [], []
    for n, t, size in ((1, 1, 1), (2, 1, 1)):
        params = brp.BrpParams(n, t, F(1, 10), F(1, 10), size)
        rep = brp.verify_brp_bound(params, 1, 20)
        parts.append(f"N={n}: channel {rep.channel.engine_lower} <= {rep.channel.formula_value}, "
                     f"protocol {rep.protocol.engine_lower} <= {rep.protocol.formula_value}")
        if not (rep.channel.sound and rep.protocol.sound):
            problems.append(f"bound violated at N={n}")
        if rep.channel.formula_value != 1 - F(9, 10) * F(9, 10):
            problems.append("channel bound formula")
        if rep.protocol.formula_value != 1 - (F(9, 10) * F(9, 10)) ** n:
            problems.append("protocol bound formula")
        ref = params.reference
        engine = MetricEngine(1)
        if engine.upto(brp.build_brp(ref), brp.build_brp(brp.BrpParams(n, t, 0, 0, size)), 20) != 0:
            problems.append(f"reference vs itself nonzero at N={n}")
    return Outcome(7, "protocol distances within bounds", not problems, "; ".join(parts + problems))


def criterion_8() -> Outcome:
    eps = brp.solve_for_epsilon(0.99, 20, 1)
    delta = brp.channel_requirement(eps, 20)
    ch = brp.ch_bound(F("0.0002"), F("0.00032"))
    perf = brp.perf_channel_from_delta(0.00053, 1).delivered
    checks = {
        "epsilon": abs(eps - 0.01052) <= 1e-4,
        "channel requirement": abs(delta - 0.00053) <= 1e-5,
        "channel bound": ch <= F("0.00053"),
        "channel likelihood": perf >= 0.9995 - 1e-4,
    }
    detail = (f"epsilon {eps:.6f}, channel requirement {delta:.7f}, channel bound {float(ch):.9f}, "
              f"channel delivery likelihood {perf:.7f}")
    bad = [k for k, ok in checks.items() if not ok]
    if bad:
        detail += "; off: " + ", ".join(bad)
    return Outcome(8, "stream-length-20 requirement translation", not bad, detail)


def criterion_9() -> Outcome:
    """The N = 20 claim through the bound formulas, cross-checked directly.

    Originally expected to be out of reach for the engine; for a one-element
    data domain the protocol has a few hundred states and the exact distance
    is computable, so it is compared with the formula route.
    """
    p, q = F("0.0002"), F("0.00032")
    formula = brp.brp_bound(20, p, q)
    uniform = brp.uniform_bound(20, p, q)
    requirement = F("0.01052")
    formula_ok = formula <= uniform < requirement
    params = brp.BrpParams(20, 1, p, q)
    result = MetricEngine(1).exact(brp.build_brp(params.reference), brp.build_brp(params))
    direct_ok = result.exact and result.value <= formula
    detail = (f"bound {float(formula):.6f} <= linear bound {float(uniform):.6f} < 0.01052; "
              f"direct exact distance {float(result.lower):.6f}"
              f" ({'equals' if result.exact and result.value == formula else 'vs'} bound, "
              f"depth {result.depth_used})")
    return Outcome(9, "stream-length-20 claim", formula_ok and direct_ok, detail)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def run(ident: int) -> Outcome:
    if ident not in _done:
        start = time.perf_counter()
        out = CRITERIA[ident]()
        _done[ident] = Outcome(out.ident, out.name, out.passed, out.detail, time.perf_counter() - start)
    return _done[ident]


def run_all() -> list[Outcome]:
    return [run(i) for i in sorted(CRITERIA)]
