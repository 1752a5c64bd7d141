import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltmnod import (
    LtmInstance,
    WeightedDigraph,
    agent_thresholds,
    check_nondegenerate,
    delta_gap,
    gamma_star,
    random_instance,
    relax,
)
from ltmnod.nod import ParameterError
from ltmnod.relaxation import DegenerateInstanceError, EnumerationCapError, reconstruct_tau

from conftest import global_gap


def cycle_instance(tau=(0.4, 0.7), c=1.0):
    g = WeightedDigraph.from_edges(2, [(0, 1, c), (1, 0, c)])
    return LtmInstance(g, [t * c for t in tau])


class TestRelax:
    def test_example(self, two_cycle):
        ltm = LtmInstance(two_cycle, [0.5, 0.5])
        nod, params = relax(ltm, 0.04, 1.0)
        assert nod.mu == pytest.approx([1 - 2 * math.sqrt(0.02)] * 2, rel=1e-12)
        assert nod.mu[0] == pytest.approx(0.71716, abs=1e-5)
        assert agent_thresholds(nod).b_star == pytest.approx([0.02, 0.02], rel=1e-12)
        assert nod.schedule.is_zero()
        assert params.mu_positive and params.product_bound and params.k_ge_one

    def test_boundary_rejected(self, two_cycle):
        ltm = LtmInstance(two_cycle, [0.5, 0.5])
        with pytest.raises(ParameterError, match="1/4"):
            relax(ltm, 0.5, 1.0)

    def test_bad_k_and_gamma(self, two_cycle):
        ltm = LtmInstance(two_cycle, [0.5, 0.5])
        with pytest.raises(ParameterError, match="k must be"):
            relax(ltm, 0.01, 0.5)
        with pytest.raises(ParameterError, match="gamma must be"):
            relax(ltm, 0.0, 1.0)

    def test_b_star_equals_gamma_tau(self):
        ltm = random_instance(8, 0.3, (0.2, 1.0), ("uniform", 0.1, 2.0), 11)
        k = 1.7
        gamma = 0.9 / (4 * k * ltm.tau.max())
        nod, _ = relax(ltm, gamma, k)
        assert agent_thresholds(nod).b_star == pytest.approx(gamma * ltm.tau, rel=1e-12)

    def test_round_trip_thousand_triples(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            tau = rng.uniform(0.01, 10.0)
            k = rng.uniform(1.0, 5.0)
            gamma = rng.uniform(0.001, 0.999) / (4 * k * tau)
            g = WeightedDigraph(1, np.zeros((1, 1)))
            nod, _ = relax(LtmInstance(g, [tau]), gamma, k)
            assert reconstruct_tau(nod.mu, gamma, k)[0] == pytest.approx(tau, rel=1e-12)


class TestDeltaGap:
    def test_two_cycle(self):
        res = delta_gap(cycle_instance())
        assert res.delta_gap == pytest.approx(0.4, abs=1e-15)
        assert not res.degenerate
        assert res.enumeration_cost == 4

    def test_edgeless(self):
        g = WeightedDigraph(1, np.zeros((1, 1)))
        res = delta_gap(LtmInstance(g, [0.3]))
        assert res.delta_gap == 0.3 and res.enumeration_cost == 1

    def test_degenerate(self):
        g = WeightedDigraph.from_edges(3, [(0, 2, 0.25), (1, 2, 0.25)])
        ltm = LtmInstance(g, [0.3, 0.3, 0.5])
        res = delta_gap(ltm)
        assert res.degenerate
        # shortfalls 0.5 and 0.25 at node 2; the tie 0.5 - 0.5 is excluded
        assert res.delta_gap == pytest.approx(0.25)
        assert not check_nondegenerate(ltm)
        with pytest.raises(DegenerateInstanceError, match="equals a threshold"):
            gamma_star(ltm, 1.0)

    def test_cap(self):
        n = 6
        g = WeightedDigraph.from_edges(n, [(j, 0, 0.1) for j in range(1, n)])
        ltm = LtmInstance(g, [0.33] * n)
        with pytest.raises(EnumerationCapError, match="cap"):
            delta_gap(ltm, cap=4)
        assert delta_gap(ltm, cap=5).delta_gap == pytest.approx(0.03)

    def test_chunked_enumeration(self):
        # in-degree 22 forces more than one enumeration chunk
        d = 22
        rng = np.random.default_rng(3)
        w = rng.uniform(0.5, 1.5, d)
        g = WeightedDigraph.from_edges(d + 1, [(j + 1, 0, float(w[j])) for j in range(d)])
        tau = np.full(d + 1, 0.7)
        tau[0] = float(w.sum() / 2 + 1e-3)
        res = delta_gap(LtmInstance(g, tau))
        assert res.enumeration_cost == (1 << d) + d
        sums = np.zeros(1)
        for x in w:
            sums = np.concatenate([sums, sums + x])
        diff = tau[0] - sums
        assert res.delta_gap == pytest.approx(min(diff[diff > 0].min(), 0.7), abs=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_per_node_equals_global(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 13))
    ltm = random_instance(n, float(rng.uniform(0.1, 0.5)), (0.1, 1.0), ("uniform", 0.1, 2.0), seed)
    gap, tie = global_gap(ltm.graph.dense(), ltm.tau)
    res = delta_gap(ltm)
    assert res.degenerate == tie
    assert abs(res.delta_gap - gap) <= 1e-12


class TestGammaStar:
    def test_two_cycle(self):
        res = gamma_star(cycle_instance(), 1.0)
        assert res.gamma_star == pytest.approx(0.16 / 0.7, rel=1e-12)
        assert res.gamma_star == pytest.approx(0.22857, abs=1e-5)
        assert res.gamma_upper == pytest.approx(min(0.16 / 0.7, 1 / 2.8))

    @pytest.mark.parametrize("c", [0.1, 3.0, 17.5])
    def test_scaling(self, c):
        base = gamma_star(cycle_instance(), 1.0).gamma_star
        scaled = gamma_star(cycle_instance(c=c), 1.0).gamma_star
        assert scaled == pytest.approx(base / c, rel=1e-10)

    def test_linear_in_k(self):
        a = gamma_star(cycle_instance(), 1.0)
        b = gamma_star(cycle_instance(), 2.0)
        assert b.gamma_star == pytest.approx(2 * a.gamma_star, rel=1e-12)
        assert 1 / (4 * 2.0 * b.tau_inf) == pytest.approx(0.5 / (4 * a.tau_inf))

    def test_edgeless_infinite(self):
        g = WeightedDigraph(2, np.zeros((2, 2)))
        res = gamma_star(LtmInstance(g, [0.3, 0.6]), 1.0)
        assert math.isinf(res.gamma_star)
        assert res.gamma_upper == pytest.approx(1 / 2.4)
        obj = res.to_json_obj()
        assert obj["gamma_star"] is None and obj["gamma_star_infinite"]

    def test_k_below_one(self):
        with pytest.raises(ParameterError):
            gamma_star(cycle_instance(), 0.9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32), st.floats(1.0, 5.0), st.floats(0.001, 0.999))
    def test_endorsed_gamma_accepted_by_relax(self, seed, k, frac):
        ltm = random_instance(6, 0.4, (0.1, 1.0), ("uniform", 0.1, 2.0), seed)
        res = gamma_star(ltm, k)
        _, params = relax(ltm, frac * res.gamma_upper, k)
        assert params.mu_positive

    @pytest.mark.parametrize("seed", range(20))
    def test_adding_edge_never_raises_gamma_star(self, seed):
        rng = np.random.default_rng(seed)
        ltm = random_instance(6, 0.3, (0.1, 1.0), ("uniform", 0.1, 2.0), seed)
        w = ltm.graph.dense().copy()
        zero = [(i, j) for i in range(6) for j in range(6) if i != j and w[i, j] == 0]
        if not zero:
            pytest.skip("complete graph")
        i, j = zero[int(rng.integers(len(zero)))]
        w[i, j] = float(rng.uniform(0.1, 1.0))
        bigger = LtmInstance(WeightedDigraph(6, w), ltm.tau)
        if not check_nondegenerate(bigger):
            pytest.skip("edge created a tie")
        assert delta_gap(bigger).delta_gap <= delta_gap(ltm).delta_gap
        assert gamma_star(bigger, 1.0).gamma_star <= gamma_star(ltm, 1.0).gamma_star
