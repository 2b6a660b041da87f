import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from ogasched.model import BipartiteGraph
from ogasched.projection import project
from ogasched.reward import (RewardModel, UtilityKind, UtilitySpec, dominant_overhead_index, dominant_overhead_indices,
                             port_reward, port_reward_multi, replicate_ports, reward_gradient, total_reward,
                             utility_grad, utility_value)

from conftest import random_problem

KINDS = ["linear", "log", "reciprocal", "poly"]


def scalar_reward(model, graph, x, y):
    """Reward evaluated one port, channel and resource at a time with math-module formulas."""
    formulas = {
        0: lambda a, v: a * v,
        1: lambda a, v: a * math.log(v + 1.0),
        2: lambda a, v: 1.0 / a - 1.0 / (v + a),
        3: lambda a, v: a * math.sqrt(v + 1.0) - a,
    }
    total = 0.0
    for l in range(graph.n_ports):
        gain, sums = 0.0, [0.0] * graph.K
        for e, (pl, r) in enumerate(graph.channels):
            if pl != l:
                continue
            for k in range(graph.K):
                gain += formulas[int(model.kinds[r, k])](float(model.alphas[r, k]), float(y[e, k]))
                sums[k] += float(y[e, k])
        total += float(x[l]) * (gain - max(b * s for b, s in zip(model.betas, sums)))
    return total


class TestUtilities:
    @pytest.mark.parametrize("kind,alpha,y,expected", [
        ("log", 1.0, 0.0, 0.0),
        ("linear", 1.5, 2.0, 3.0),
        ("reciprocal", 2.0, 2.0, 0.25),
        ("poly", 1.0, 3.0, 1.0),
    ])
    def test_values(self, kind, alpha, y, expected):
        assert utility_value(UtilitySpec(kind, alpha), y) == pytest.approx(expected)

    @pytest.mark.parametrize("kind,alpha,y,expected", [
        ("linear", 1.2, 7.0, 1.2),
        ("log", 1.0, 0.0, 1.0),
        ("poly", 1.0, 3.0, 0.25),
        ("reciprocal", 2.0, 0.0, 0.25),
    ])
    def test_grads(self, kind, alpha, y, expected):
        assert utility_grad(UtilitySpec(kind, alpha), y) == pytest.approx(expected)

    @pytest.mark.parametrize("kind", KINDS)
    @given(alpha=st.floats(0.1, 5.0), y=st.floats(0.0, 50.0))
    @example(alpha=0.1, y=1e-15)
    def test_grad_matches_finite_difference(self, kind, alpha, y):
        spec = UtilitySpec(kind, alpha)
        h = 1e-6
        if y >= h:
            fd = (utility_value(spec, y + h) - utility_value(spec, y - h)) / (2 * h)
        else:
            # second-order forward stencil; first order is off by h f''/2 when alpha is small
            f0, f1, f2 = (utility_value(spec, y + i * h) for i in range(3))
            fd = (-3 * f0 + 4 * f1 - f2) / (2 * h)
        assert utility_grad(spec, y) == pytest.approx(fd, rel=1e-5, abs=1e-8)

    @pytest.mark.parametrize("kind", KINDS)
    @given(alpha=st.floats(0.1, 5.0))
    def test_zero_startup_and_slope_bound(self, kind, alpha):
        spec = UtilitySpec(kind, alpha)
        assert utility_value(spec, 0.0) == 0.0
        ys = np.linspace(0, 20, 50)
        assert np.all(utility_grad(spec, ys) <= spec.grad_at_zero + 1e-12)

    def test_rejects_negative_input_and_alpha(self):
        with pytest.raises(ValueError):
            utility_value(UtilitySpec("log", 1.0), -0.1)
        with pytest.raises(ValueError):
            utility_grad(UtilitySpec("log", 1.0), -0.1)
        with pytest.raises(ValueError):
            UtilitySpec("linear", 0.0)
        with pytest.raises(ValueError):
            UtilityKind.parse("cubic")


class TestRewardModel:
    def test_beta_domain(self):
        with pytest.raises(ValueError):
            RewardModel.uniform(2, [0.5, 1.5])

    def test_graph_mismatch(self):
        g = BipartiteGraph.from_arrays(np.ones((1, 2)), np.ones((3, 2)))
        with pytest.raises(ValueError):
            RewardModel.uniform(2, [0.5, 0.5]).check_graph(g)

    def test_from_specs_roundtrip(self):
        specs = {(r, k): UtilitySpec(KINDS[(r + k) % 4], 1.0 + r + k) for r in range(2) for k in range(2)}
        m = RewardModel.from_specs(specs, 2, [0.1, 0.2])
        assert m.utility(1, 0) == specs[(1, 0)]


def one_channel(alpha, betas, kind="linear"):
    g = BipartiteGraph.from_arrays(np.full((1, len(betas)), 5.0), np.full((1, len(betas)), 5.0))
    return g, RewardModel.uniform(1, betas, kind, alpha)


class TestDominantOverhead:
    @pytest.mark.parametrize("betas,y,expected", [
        ([0.5, 0.5], [2.0, 2.0], 0),
        ([0.3, 0.5], [10.0, 1.0], 0),
        ([0.3, 0.5], [0.0, 0.0], 0),
        ([0.3, 0.5], [1.0, 1.0], 1),
    ])
    def test_examples(self, betas, y, expected):
        g, m = one_channel(1.0, betas)
        assert dominant_overhead_index(m, g, np.array([y]), 0) == expected

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
    def test_invariant_under_beta_rescaling(self, seed, scale):
        rng = np.random.default_rng(seed)
        g, m = random_problem(rng, 2, 3, 3)
        y = rng.uniform(0, 1, g.shape)
        scaled = m.with_betas(np.clip(m.betas * min(scale, 1 / m.betas.max()), 0, 1))
        assert dominant_overhead_index(m, g, y, 0) == dominant_overhead_index(scaled, g, y, 0)

    def test_port_without_channels(self):
        g = BipartiteGraph.from_arrays(np.ones((2, 1)), np.ones((1, 1)), [(0, 0)])
        with pytest.raises(ValueError):
            dominant_overhead_index(RewardModel.uniform(1, [0.5]), g, g.zeros(), 1)


class TestReward:
    def test_hand_evaluated_port(self):
        g, m = one_channel(1.0, [0.5, 0.2])
        y = np.array([[2.0, 1.0]])
        assert port_reward(m, g, 1, y, 0) == pytest.approx(2.0)
        r = total_reward(m, g, [1], y)
        assert (r.reward, r.gain, r.penalty) == pytest.approx((2.0, 3.0, 1.0))

    def test_zero_arrivals_and_zero_allocation(self, rng):
        g, m = random_problem(rng)
        y = project(g, rng.uniform(0, 2, g.shape))
        assert port_reward(m, g, 0, y, 0) == 0.0
        assert total_reward(m, g, np.zeros(g.n_ports), y).reward == 0.0
        assert total_reward(m, g, np.ones(g.n_ports), g.zeros()).reward == 0.0

    def test_single_port_equals_port_reward(self, rng):
        g, m = random_problem(rng, 1, 3, 2)
        y = project(g, rng.uniform(0, 2, g.shape))
        assert total_reward(m, g, [1], y).reward == pytest.approx(port_reward(m, g, 1, y, 0))

    @given(st.integers(0, 2**32 - 1))
    def test_matches_scalar_oracle(self, seed):
        rng = np.random.default_rng(seed)
        g, m = random_problem(rng, 3, 4, 3, density=0.6)
        y = project(g, rng.uniform(-0.5, 2, g.shape))
        x = rng.integers(0, 3, g.n_ports)
        r = total_reward(m, g, x, y)
        assert r.reward == pytest.approx(scalar_reward(m, g, x, y), rel=1e-12, abs=1e-12)
        assert r.reward == pytest.approx(r.gain - r.penalty, abs=1e-12)
        assert r.reward == pytest.approx(sum(port_reward(m, g, x[l], y, l) for l in range(g.n_ports)))

    @given(st.integers(0, 2**32 - 1), st.floats(0, 1))
    def test_concave_in_allocation(self, seed, lam):
        rng = np.random.default_rng(seed)
        g, m = random_problem(rng, 3, 3, 2)
        x = np.ones(g.n_ports)
        y = project(g, rng.uniform(0, 2, g.shape))
        z = project(g, rng.uniform(0, 2, g.shape))
        mid = total_reward(m, g, x, lam * y + (1 - lam) * z).reward
        assert mid >= lam * total_reward(m, g, x, y).reward + (1 - lam) * total_reward(m, g, x, z).reward - 1e-9

    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 0.5))
    def test_raising_dominant_beta_never_helps(self, seed, bump):
        rng = np.random.default_rng(seed)
        g, m = random_problem(rng, 2, 3, 3)
        y = project(g, rng.uniform(0, 2, g.shape))
        x = np.ones(g.n_ports)
        k = dominant_overhead_indices(m, g, y)[0]
        betas = m.betas.copy()
        betas[k] = min(1.0, betas[k] + bump)
        assert total_reward(m.with_betas(betas), g, x, y).reward <= total_reward(m, g, x, y).reward + 1e-12


class TestGradient:
    def test_zero_arrival_slice(self, rng):
        g, m = random_problem(rng)
        x = np.array([0.0, 1.0, 1.0])
        grad = reward_gradient(m, g, x, rng.uniform(0, 1, g.shape))
        assert np.all(grad[g.channel_ports == 0] == 0)

    def test_linear_entries(self):
        g, m = one_channel(1.3, [0.4, 0.2])
        grad = reward_gradient(m, g, [2.0], np.array([[1.0, 1.0]]))
        assert grad[0] == pytest.approx([2.0 * (1.3 - 0.4), 2.0 * 1.3])

    @pytest.mark.parametrize("kind", range(4))
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_central_differences(self, kind, seed):
        rng = np.random.default_rng(seed)
        g, m = random_problem(rng, 2, 3, 2, kinds=kind)
        y = rng.uniform(0.05, 1.0, g.shape)
        x = rng.integers(1, 3, g.n_ports).astype(float)
        weighted = np.asarray(g.port_incidence @ y) * m.betas
        top = np.sort(weighted, axis=1)
        if np.any(top[:, -1] - top[:, -2] <= 1e-3):
            return
        grad = reward_gradient(m, g, x, y)
        h = 1e-6
        for idx in np.ndindex(g.shape):
            up, dn = y.copy(), y.copy()
            up[idx] += h
            dn[idx] -= h
            fd = (total_reward(m, g, x, up).reward - total_reward(m, g, x, dn).reward) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestMultipleArrivals:
    def test_zero_arrivals(self, rng):
        g, m = random_problem(rng)
        ys = [rng.uniform(0, 1, g.shape) for _ in range(2)]
        assert port_reward_multi(m, g, 0, ys, 0) == 0.0

    def test_single_replica_reduces_to_base(self, rng):
        g, m = random_problem(rng)
        y = project(g, rng.uniform(0, 1, g.shape))
        assert port_reward_multi(m, g, 1, [y], 1) == pytest.approx(port_reward(m, g, 1, y, 1))

    def test_unarrived_replica_contributes_nothing(self, rng):
        g, m = random_problem(rng)
        y1 = project(g, rng.uniform(0, 1, g.shape))
        y2 = project(g, rng.uniform(0, 1, g.shape))
        assert port_reward_multi(m, g, 1, [y1, y2], 0) == pytest.approx(port_reward(m, g, 1, y1, 0))
        assert port_reward_multi(m, g, 2, [y1, y2], 0) == pytest.approx(
            port_reward(m, g, 1, y1, 0) + port_reward(m, g, 1, y2, 0))

    def test_too_many_arrivals(self, rng):
        g, m = random_problem(rng)
        with pytest.raises(ValueError):
            port_reward_multi(m, g, 3, [g.zeros(), g.zeros()], 0)

    def test_replicated_graph_arrivals(self, rng):
        g, _ = random_problem(rng, 2, 2, 1)
        rep = replicate_ports(g, [2, 3])
        assert rep.graph.n_ports == 5
        assert rep.graph.n_channels == 5 * 2
        assert list(rep.arrivals([1, 2])) == [1, 0, 1, 1, 0]
        with pytest.raises(ValueError):
            rep.arrivals([3, 0])
