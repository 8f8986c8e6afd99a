import random

import numpy as np
import pytest

from oracles import lp_remap_oracle
from varlenplan import remapping
from varlenplan.topology import ClusterSpec


def uniform_cost(d, b=1.0):
    t = np.full((d, d), b)
    np.fill_diagonal(t, 0.0)
    return t


def two_node_cost(d, bi, be):
    cluster = ClusterSpec(num_nodes=2, gpus_per_node=d // 2, token_capacity=1000,
                          inv_bw_intra=bi, inv_bw_inter=be)
    return remapping.cost_matrix(cluster)


def check_marginals(counts, matrix):
    d = len(counts)
    total = sum(counts)
    base, extra = divmod(total, d)
    target = [base + 1 if i < extra else base for i in range(d)]
    surplus = [max(counts[i] - target[i], 0) for i in range(d)]
    deficit = [max(target[i] - counts[i], 0) for i in range(d)]
    assert matrix.sum(axis=1).tolist() == surplus
    assert matrix.sum(axis=0).tolist() == deficit
    assert all(matrix[i][i] == 0 for i in range(d))
    assert (matrix >= 0).all()


class TestTargetDistribution:
    def test_already_uniform(self):
        assert remapping.target_distribution([4, 4]) == [4, 4]

    def test_simple_mean(self):
        assert remapping.target_distribution([6, 2]) == [4, 4]

    def test_remainder_conserves_total(self):
        target = remapping.target_distribution([5, 5, 3])
        assert sum(target) == 13
        assert sorted(target) == [4, 4, 5]

    def test_rejects_negatives(self):
        with pytest.raises(ValueError):
            remapping.target_distribution([-1, 2])


class TestSolveRemap:
    def test_two_rank_forced_transfer(self):
        result = remapping.solve_remap([6, 2], uniform_cost(2, b=3.0))
        assert result.matrix.tolist() == [[0, 2], [0, 0]]
        assert result.objective == pytest.approx(6.0, rel=1e-9)

    def test_uniform_input_is_free(self):
        result = remapping.solve_remap([5, 5, 5, 5], uniform_cost(4))
        assert result.objective == 0.0
        assert not result.matrix.any()

    def test_prefers_intra_node_path(self):
        # ranks {0,1} on node 0 and {2,3} on node 1; the surplus at rank 0
        # covers rank 1's deficit without crossing nodes
        cost = two_node_cost(4, bi=1.0, be=10.0)
        result = remapping.solve_remap([8, 0, 4, 4], cost)
        assert result.matrix[0][1] == 4
        assert result.objective == pytest.approx(4.0, rel=1e-9)
        assert result.objective == pytest.approx(lp_remap_oracle([8, 0, 4, 4], cost), rel=1e-6)

    def test_matches_lp_oracle_on_random_instances(self):
        rng = random.Random(7)
        for _ in range(80):
            d = rng.randint(1, 6)
            counts = [rng.randint(0, 40 // d) for _ in range(d)]
            if rng.random() < 0.5 and d % 2 == 0:
                cost = two_node_cost(d, bi=1.0, be=rng.uniform(1.0, 20.0))
            else:
                cost = uniform_cost(d, b=rng.uniform(0.1, 5.0))
            result = remapping.solve_remap(counts, cost)
            oracle = lp_remap_oracle(counts, cost)
            assert result.objective == pytest.approx(oracle, rel=1e-6, abs=1e-9)
            check_marginals(counts, result.matrix)
            if result.row_costs.size:
                assert result.row_costs.max() <= oracle + cost.max() + 1e-6

    def test_scale_covariance(self):
        cost = two_node_cost(4, bi=1.0, be=8.0)
        base = remapping.solve_remap([9, 1, 3, 3], cost)
        for k in (2, 5, 13):
            scaled = remapping.solve_remap([9 * k, 1 * k, 3 * k, 3 * k], cost)
            assert scaled.objective == pytest.approx(k * base.objective, rel=1e-6)

    def test_rejects_mismatched_cost_shape(self):
        with pytest.raises(ValueError):
            remapping.solve_remap([1, 2, 3], uniform_cost(2))


class TestRemapCostPair:
    def test_balanced_plan_is_free(self):
        cluster = ClusterSpec(num_nodes=2, gpus_per_node=2, token_capacity=100,
                              inv_bw_intra=1.0, inv_bw_inter=4.0)
        assert remapping.remap_cost_pair([10, 10, 10, 10], cluster) == (0.0, 0.0)

    def test_forward_equals_inverse(self):
        cluster = ClusterSpec(num_nodes=2, gpus_per_node=3, token_capacity=1000,
                              inv_bw_intra=1.0, inv_bw_inter=12.0)
        rng = random.Random(3)
        for _ in range(100):
            counts = [rng.randint(0, 50) for _ in range(6)]
            fwd, inv = remapping.remap_cost_pair(counts, cluster)
            assert fwd == inv

    def test_two_rank_example_pair(self):
        cluster = ClusterSpec(num_nodes=1, gpus_per_node=2, token_capacity=100,
                              inv_bw_intra=3.0, inv_bw_inter=3.0)
        fwd, inv = remapping.remap_cost_pair([6, 2], cluster)
        assert fwd == pytest.approx(6.0, rel=1e-9)
        assert inv == fwd


def test_matrix_csv_dump():
    result = remapping.solve_remap([6, 2], uniform_cost(2))
    text = remapping.matrix_to_csv(result.matrix)
    assert text == "0,2\n0,0\n"
