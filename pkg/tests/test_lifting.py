import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from procmetric.acceptance import brute_force_transport
from procmetric.lifting import hausdorff, kantorovich, transport
from procmetric.semantics import Distribution, dirac
from procmetric.syntax import STOP, prefix

X, Y, U, V = (prefix(n) for n in ("x", "y", "u", "v"))


def table_distance(table):
    def d(p, q):
        if p == q:
            return F(0)
        return table.get((p, q), table.get((q, p)))
    return d


def test_dirac_cost_is_the_point_distance():
    d = table_distance({(X, Y): F(2, 7)})
    assert kantorovich(d, dirac(X), dirac(Y))[0] == F(2, 7)


def test_discounted_example_mass_shift():
    s = prefix("s")
    d = table_distance({(s, STOP): F(1)})
    left = Distribution({s: F(1, 2), STOP: F(1, 2)})
    right = Distribution({s: F(3, 4), STOP: F(1, 4)})
    assert kantorovich(d, left, right)[0] == F(1, 4)


def test_identical_distributions_cost_nothing():
    d = table_distance({(X, Y): F(1)})
    mu = Distribution({X: F(1, 3), Y: F(2, 3)})
    assert kantorovich(d, mu, mu)[0] == 0


def test_two_by_two_instance():
    d = table_distance({(X, U): F(0), (X, V): F(1), (Y, U): F(1), (Y, V): F(0)})
    value, plan = kantorovich(d, Distribution({X: F(1, 3), Y: F(2, 3)}), Distribution({U: F(1, 2), V: F(1, 2)}))
    assert value == F(1, 6)
    assert plan[(X, U)] == F(1, 3) and plan[(Y, V)] == F(1, 2) and plan[(Y, U)] == F(1, 6)


def test_unequal_masses_rejected():
    with pytest.raises(ValueError):
        transport([F(1, 2)], [F(1)], [[F(0)]])


def _random_instance(rng):
    denom = rng.randint(1, 12)
    n, m = rng.randint(1, min(4, denom)), rng.randint(1, min(4, denom))

    def marginal(size):
        cuts = sorted(rng.sample(range(1, denom), size - 1))
        return [F(b - a, denom) for a, b in zip([0, *cuts], [*cuts, denom])]

    cost = [[F(rng.randint(0, 12), rng.randint(1, 12)) for _ in range(m)] for _ in range(n)]
    return marginal(n), marginal(m), cost


def test_solver_matches_brute_force():
    rng = random.Random(2024)
    for _ in range(300):
        supply, demand, cost = _random_instance(rng)
        value, flow = transport(supply, demand, cost)
        assert value == brute_force_transport(supply, demand, cost)
        assert [sum(r) for r in flow] == supply
        assert [sum(c) for c in zip(*flow)] == demand
        assert all(x >= 0 for r in flow for x in r)
        assert sum(flow[i][j] * cost[i][j] for i in range(len(supply)) for j in range(len(demand))) == value


def test_brute_force_oracle_on_hand_instance():
    assert brute_force_transport([F(1, 2), F(1, 2)], [F(1, 2), F(1, 2)], [[1, 0], [0, 1]]) == 0
    assert brute_force_transport([F(1)], [F(1, 3), F(2, 3)], [[F(1), F(1, 2)]]) == F(2, 3)


def test_plan_is_deterministic():
    rng = random.Random(5)
    for _ in range(50):
        supply, demand, cost = _random_instance(rng)
        assert transport(supply, demand, cost) == transport(supply, demand, cost)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 12))
def test_monotone_in_the_ground_distance(seed, bump):
    rng = random.Random(seed)
    supply, demand, cost = _random_instance(rng)
    larger = [[c + F(bump, 12) * rng.randint(0, 1) for c in row] for row in cost]
    assert transport(supply, demand, cost)[0] <= transport(supply, demand, larger)[0]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9), st.sampled_from([F(1, 4), F(1, 3), F(1, 2), F(3, 4)]))
def test_convex_in_the_left_marginal(seed, p):
    rng = random.Random(seed)
    atoms = [prefix(f"a{i}") for i in range(4)]
    table = {(a, b): F(rng.randint(0, 6), 6) for a in atoms for b in atoms if a != b}
    d = table_distance(table)

    def rand_dist():
        k = rng.randint(1, 4)
        ws = [rng.randint(1, 6) for _ in range(k)]
        return Distribution({a: F(w, sum(ws)) for a, w in zip(rng.sample(atoms, k), ws)})

    mu1, mu2, nu = rand_dist(), rand_dist(), rand_dist()
    mixed = Distribution.mix(p, mu1, mu2)
    lhs = kantorovich(d, mixed, nu)[0]
    assert lhs <= p * kantorovich(d, mu1, nu)[0] + (1 - p) * kantorovich(d, mu2, nu)[0]


def test_hausdorff_empty_conventions():
    dd = lambda a, b: F(1, 2)  # noqa: E731
    assert hausdorff(dd, [], []) == 0
    assert hausdorff(dd, [dirac(X)], []) == 1
    assert hausdorff(dd, [], [dirac(X)]) == 1
    assert hausdorff(dd, [dirac(X)], [dirac(Y)]) == F(1, 2)


def test_hausdorff_is_sup_inf_both_ways():
    values = {(X, U): F(1, 4), (X, V): F(3, 4), (Y, U): F(1), (Y, V): F(1, 2)}
    dd = lambda a, b: values[(a.support[0], b.support[0])]  # noqa: E731
    left, right = [dirac(X), dirac(Y)], [dirac(U), dirac(V)]
    # forward: x -> 1/4, y -> 1/2; backward: u -> 1/4, v -> 1/2
    assert hausdorff(dd, left, right) == F(1, 2)
