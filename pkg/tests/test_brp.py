from fractions import Fraction as F

import pytest

from procmetric import brp
from procmetric.brp import BrpParams, NoSolution, ParamError
from procmetric.metric import MetricEngine
from procmetric.semantics import derive, reachable
from procmetric.syntax import Prefix, parse, render


def test_params_validation():
    with pytest.raises(ParamError):
        BrpParams(0, 1)
    with pytest.raises(ParamError):
        BrpParams(1, 1, F(3, 2), 0)
    with pytest.raises(ParamError):
        BrpParams(1, 1, domain_size=0)
    assert BrpParams(2, 1, F(1, 10), F(1, 5)).reference == BrpParams(2, 1)


def test_exhausted_channel_aborts():
    assert render(brp.build_ch2(0, 0, 0, F(1, 2), F(1, 2))) == "res_NOK.0"
    assert render(brp.build_ch_prime(0, 1, 0, 0, 0)) == "res_NOK.0"


def test_zero_weight_branches_are_dropped():
    assert render(brp.build_ch2(0, 0, 1, F(1, 3), 0)) == "try2.ack.eps"
    assert render(brp.build_ch_prime(0, 0, 1, 0, 0)) == "try.c_d0_b0.try2.ack.eps"


def test_lossy_channel_shape():
    ch = brp.build_ch_prime(0, 1, 1, F(1, 10), F(1, 5))
    assert render(ch) == ("try.([1/10]bot.res_NOK.0 (+) "
                          "[9/10]c_d0_b1.try2.([1/5]lost.res_NOK.0 (+) [4/5]ack.eps))")
    assert parse(render(ch)) == ch


def _prefixes(t):
    stack, out = [t], []
    while stack:
        u = stack.pop()
        if isinstance(u, Prefix):
            out.append(u)
            stack.extend(v for _, v in u.branches)
        else:
            stack.extend(x for x in vars(u).values() if hasattr(x, "sort_key"))
    return out


def test_reference_protocol_is_dirac():
    for n, t in ((1, 1), (3, 2)):
        assert all(len(p.branches) == 1 for p in _prefixes(brp.build_brp(BrpParams(n, t))))
    lossy = brp.build_brp(BrpParams(2, 1, F(1, 10), F(1, 10)))
    assert any(len(p.branches) == 2 for p in _prefixes(lossy))


def test_protocol_state_space_is_small():
    t = brp.build_brp(BrpParams(1, 1))
    assert derive(t).actions == {"i_n1"}
    r = reachable(t, 20, 10000)
    assert not r.truncated and len(r.states) < 100


def test_sync_set():
    assert brp.sync_set(2) == {"c_d0_b0", "c_d0_b1", "c_d1_b0", "c_d1_b1", "ack", "lost"}


def test_reference_runs_the_stream_to_completion():
    # every move of the perfect protocol is Dirac; output and ack attempt may interleave
    for pick in (0, -1):
        t = brp.build_brp(BrpParams(1, 1))
        trace = []
        for _ in range(20):
            moves = list(derive(t))
            if not moves:
                break
            assert all(len(mu.support) == 1 for _, mu in moves)
            action, mu = moves[pick]
            trace.append(action)
            t = mu.support[0]
        assert trace[:4] == ["i_n1", "i_d0", "try", "c_d0_b0"]
        assert sorted(trace[4:6]) == ["o_d0", "try2"]
        assert trace[6:] == ["ack", "res_OK"]


def test_bound_formulas():
    assert brp.ch_bound(F(1, 10), F(1, 10)) == F(19, 100)
    assert brp.brp_bound(2, F(1, 10), F(1, 10)) == F(3439, 10000)
    assert brp.brp_bound_from_delta(F(19, 100), 2) == F(3439, 10000)
    assert brp.uniform_bound(5, 0, 0) == 0
    assert brp.brp_bound(20, F(1, 5000), F(2, 6250)) <= F("0.01052")
    for n in range(1, 8):
        for p in (0, F(1, 10), F(1, 2), 1):
            for q in (0, F(1, 3), 1):
                assert brp.uniform_bound(n, p, q) >= brp.brp_bound(n, p, q)


def test_stream_likelihoods():
    assert brp.perf_from_epsilon(0, 5, 2) == (1.0,) * 5
    assert brp.perf_from_epsilon(1, 5, 2).no_retry == 0.0
    assert brp.perf_from_epsilon(0.01052, 20, 1).all_items == pytest.approx(0.99, abs=1e-4)
    for eps in (0.001, 0.1, 0.5):
        perf = brp.perf_from_epsilon(eps, 4, 2, k=8)
        assert perf.at_most_k == pytest.approx(perf.all_items, rel=1e-12)
        summed = sum(brp.perf_from_epsilon(eps, 4, 2, k=i).exactly_k for i in range(9))
        assert perf.at_most_k == pytest.approx(summed, rel=1e-12)
    with pytest.raises(ParamError):
        brp.perf_from_epsilon(1.5, 2, 1)


def test_channel_likelihoods():
    assert brp.perf_channel_from_delta(0, 3) == (1.0,) * 4
    assert brp.perf_channel_from_delta(0.5, 1, k=1).exactly_k == 0.25
    assert brp.perf_channel_from_delta(0.00053, 1).delivered == pytest.approx(1 - 0.00053 ** 2, abs=1e-12)


def test_solve_for_epsilon():
    eps = brp.solve_for_epsilon(0.99, 20, 1)
    assert eps == pytest.approx(0.01052, abs=1e-4)
    assert brp.perf_from_epsilon(eps, 20, 1).all_items == pytest.approx(0.99, abs=1e-8)
    assert brp.channel_requirement(eps, 20) == pytest.approx(0.00053, abs=1e-5)
    assert brp.solve_for_epsilon(1.0, 3, 1) == 0.0
    with pytest.raises(NoSolution):
        brp.solve_for_epsilon(1.5, 3, 1)
    # one item, one retry: all-items likelihood is 1 - eps^2
    assert brp.solve_for_epsilon(0.9995, 1, 1) == pytest.approx(0.0005 ** 0.5, abs=1e-8)


def test_verify_reference_against_itself():
    for lam in (F(1), F(1, 2)):
        rep = brp.verify_brp_bound(BrpParams(1, 1), lam, 10)
        assert rep.channel.engine_lower == rep.protocol.engine_lower == 0 and rep.ok


@pytest.mark.parametrize("n, bound", [(1, F(19, 100)), (2, F(3439, 10000))])
def test_verify_lossy_protocol(n, bound):
    rep = brp.verify_brp_bound(BrpParams(n, 1, F(1, 10), F(1, 10)), 1, 20)
    assert rep.ok
    assert rep.channel.engine_lower <= F(19, 100)
    assert rep.protocol.engine_lower <= bound


def test_discounting_shrinks_protocol_distance():
    rep = brp.verify_brp_bound(BrpParams(1, 1, F(1, 10), F(1, 10)), F(1, 2), 20)
    assert rep.ok and 0 < rep.protocol.engine_lower < F(19, 100)


def test_full_length_stream_distance_is_computable():
    p, q = F(1, 5000), F(2, 6250)
    params = BrpParams(20, 1, p, q)
    res = MetricEngine(1).exact(brp.build_brp(params.reference), brp.build_brp(params))
    assert res.exact and res.value == brp.brp_bound(20, p, q)
