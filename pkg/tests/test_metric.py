import random
from fractions import Fraction as F
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from procmetric.acceptance import example_pair
from procmetric.bounds import Combinator, witness
from procmetric.lifting import hausdorff, kantorovich
from procmetric.metric import DistanceTable, MetricEngine, approx, exact_distance, upto_k
from procmetric.semantics import BudgetExceeded, derive, interleave_normal_form
from procmetric.syntax import Copy, FinIter, InfIter, Seq, parse, random_term

T = parse


def naive_upto(s, t, k, lam):
    """d_k straight from the definition: no pair graph, no semi-naive updates."""
    lam = F(lam)

    @lru_cache(maxsize=None)
    def d(u, v, j):
        if j == 0 or u == v:
            return F(0)
        du, dv = derive(u), derive(v)
        if du.actions != dv.actions:
            return F(1)
        worst = F(0)
        for a in du.actions:
            kd = lambda mu, nu: lam * kantorovich(lambda x, y: d(x, y, j - 1), mu, nu)[0]  # noqa: E731
            worst = max(worst, hausdorff(kd, du.der(a), dv.der(a)))
        return worst

    return d(s, t, k)


def test_depth_zero_is_zero():
    assert upto_k(T("a.0"), T("b.0"), 0, 1) == 0


def test_distinct_actions_are_at_distance_one():
    assert upto_k(T("a.0"), T("b.0"), 1, F(1, 2)) == 1


def test_discounted_example():
    s, t = example_pair()
    for k in range(2, 8):
        assert upto_k(s, t, k, F(1, 2)) == F(1, 8)
    assert exact_distance(s, t, F(1, 2)).value == F(1, 8)


def test_probabilistic_witness():
    s, t = T("a.([3/4]eps (+) [1/4]0)"), T("a.eps")
    assert upto_k(s, t, 2, 1) == F(1, 4)
    res = exact_distance(s, t, 1)
    assert res.exact and res.value == F(1, 4) and res.depth_used == 2


def test_copy_distance():
    s1 = T("l.([3/4]a.0 (+) [1/4]0) + r.([3/4]a.0 (+) [1/4]0)")
    t1 = T("l.a.0 + r.a.0")
    assert exact_distance(Copy(s1), Copy(t1), 1).value == F(7, 16)


def test_identical_terms():
    res = exact_distance(T("a.0"), T("a.0"), 1)
    assert res.exact and res.value == 0


def test_approx_depth_and_bracket():
    res = approx(T("a.0 + b.0"), T("a.0 + b.0"), F(1, 2), F(1, 8))
    assert res.lower == 0 and res.upper - res.lower <= F(1, 8)
    res = approx(T("a.b.c.d.0"), T("a.b.c.e.0"), F(1, 2), F(1, 8))
    assert res.depth_used == 3
    assert res.lower == 0 and res.upper == F(1, 8) and not res.exact


def test_infinite_iteration_bracket():
    ss, ts = witness(Combinator("infiter"), F(4, 5), [F(1, 10)])
    res = approx(InfIter(ss[0]), InfIter(ts[0]), F(4, 5), F(4, 5) ** 30)
    assert res.lower <= F(1, 3) <= res.upper
    assert res.upper - res.lower <= F(4, 5) ** 30


def test_undiscounted_cycle_returns_interval():
    # a loop that loses a quarter of its mass each round only converges in the limit
    s = T("star(a.([3/4]eps (+) [1/4]0), 0)")
    t = T("star(a.eps, 0)")
    res = MetricEngine(1, max_iter=50).exact(s, t)
    assert not res.exact and res.lower < res.upper
    with pytest.raises(ValueError):
        res.value


def test_budget_exceeded_reports_partial_interval():
    s, t = T("bang(a.([1/2]eps (+) [1/2]0))"), T("bang(a.eps)")
    with pytest.raises(BudgetExceeded) as info:
        MetricEngine(F(1, 2), budget=30).exact(s, t)
    lo, hi = info.value.partial
    assert 0 <= lo <= hi <= 1


def test_table_shares_symmetric_pairs():
    engine = MetricEngine(1)
    s, t = T("a.([1/2]b.0 (+) [1/2]0)"), T("a.b.0")
    engine.exact(s, t)
    table = engine.table
    assert table.get(s, t, 5) == table.get(t, s, 5) == F(1, 2)
    assert table.get(s, s, 3) == 0
    assert table.history(s, t) == [(2, F(1, 2))]


def test_empty_table():
    table = DistanceTable(F(1))
    with pytest.raises(KeyError):
        table.get(T("a.0"), T("b.0"), 1)


def test_bisimilar_encodings_are_at_distance_zero():
    x = T("a.([1/2]eps (+) [1/2]b.0)")
    for n in range(4):
        assert exact_distance(FinIter(x, n + 1), Seq(x, FinIter(x, n)), 1).value == 0
    assert exact_distance(T("a.0 + a.0"), T("a.0"), 1).value == 0
    assert exact_distance(T("a.0 +[1/3] a.0"), T("a.0"), F(1, 2)).value == 0


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9), st.sampled_from([F(1), F(4, 5), F(1, 2)]),
       st.integers(1, 4))
def test_engine_matches_the_naive_recursion(seed1, seed2, lam, k):
    s = random_term(seed1, 4, ["a", "b"])
    t = random_term(seed2, 4, ["a", "b"])
    assert upto_k(s, t, k, lam) == naive_upto(s, t, k, lam)


def test_engine_matches_the_naive_recursion_on_loops():
    pairs = [
        ("star(a.([1/2]eps (+) [1/2]0), 0)", "a.([3/4]star(a.([1/2]eps (+) [1/2]0), 0) (+) [1/4]0)"),
        ("bang(a.([1/2]eps (+) [1/2]0))", "bang(a.eps)"),
        ("(a.eps + b.0)^w", "(a.([1/3]eps (+) [2/3]0) + b.0)^w"),
        ("pbang(1/2, a.b.0)", "pbang(1/2, a.([1/2]b.0 (+) [1/2]0))"),
    ]
    for ls, rs in pairs:
        for lam in (F(1), F(4, 5)):
            for k in range(1, 6):
                assert upto_k(T(ls), T(rs), k, lam) == naive_upto(T(ls), T(rs), k, lam)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9), st.sampled_from([F(1), F(4, 5)]))
def test_monotone_convergence(seed1, seed2, lam):
    s, t = random_term(seed1, 4, ["a", "b"]), random_term(seed2, 4, ["a", "b"])
    values = [upto_k(s, t, k, lam) for k in range(8)]
    for k in range(7):
        assert values[k] <= values[k + 1] <= values[k] + lam ** k
    exact = exact_distance(s, t, lam)
    assert exact.exact and all(v <= exact.value for v in values)


def test_triangle_inequality_and_symmetry():
    rng = random.Random(11)
    for _ in range(150):
        a, b, c = (random_term(rng.randrange(10**9), 3, ["a", "b"]) for _ in range(3))
        lam = rng.choice([F(1), F(4, 5), F(1, 2)])
        ab, bc, ac = (exact_distance(x, y, lam).value for x, y in ((a, b), (b, c), (a, c)))
        assert ac <= ab + bc
        assert exact_distance(b, a, lam).value == ab


def test_normalised_engine_agrees_with_structural_engine():
    pairs = [("bang(a.([1/2]eps (+) [1/2]0))", "bang(a.eps)"),
             ("pbang(1/2, a.([3/4]eps (+) [1/4]0))", "pbang(1/2, a.eps)"),
             ("bang(a.0 + b.([1/2]a.0 (+) [1/2]0))", "bang(a.0 + b.a.0)")]
    for ls, rs in pairs:
        for lam in (F(1), F(4, 5)):
            plain = MetricEngine(lam)
            normal = MetricEngine(lam, normalize=interleave_normal_form)
            for k in range(1, 7):
                assert plain.upto(T(ls), T(rs), k) == normal.upto(T(ls), T(rs), k)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        MetricEngine(0)
    with pytest.raises(ValueError):
        MetricEngine(F(3, 2))
    with pytest.raises(ValueError):
        MetricEngine(1).approx(T("a.0"), T("b.0"), F(1, 8))
    with pytest.raises(ValueError):
        MetricEngine(F(1, 2)).upto(T("a.0"), T("b.0"), -1)
