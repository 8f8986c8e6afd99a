import random

import pytest

from oracles import check_plan
from varlenplan import partitioner as pt
from varlenplan.topology import ClusterSpec, cluster_a
from varlenplan.workload import SequenceBatch, preset, sample_batch


def make_cluster(n=2, p=2, cap=10):
    return ClusterSpec(num_nodes=n, gpus_per_node=p, token_capacity=cap,
                       inv_bw_intra=1.0, inv_bw_inter=2.0)


def bucket_tokens(bucket):
    return sum(c.tokens for c in bucket.chunks) + sum(ln for _, ln in bucket.own)


class TestInterNodePartitioning:
    def test_hand_trace(self):
        # N=2, P=2, L=10: 24 chunks into 12+12, then 6 -> node0, 5 -> node1,
        # 3 -> node1; final loads 18 and 20 within the 20-token node budget
        cluster = make_cluster()
        batch = SequenceBatch(((0, 24), (1, 6), (2, 5), (3, 3)))
        result = pt.partition_inter_node(batch, cluster)
        assert result.s1 == 20
        assert result.restarts == 0
        loads = [bucket_tokens(b) for b in result.buckets]
        assert loads == [18, 20]
        assert [(c.sequence_id, c.tokens) for c in result.buckets[0].chunks] == [(0, 12)]
        assert [(c.sequence_id, c.tokens) for c in result.buckets[1].chunks] == [(0, 12)]
        assert result.buckets[0].own == [(1, 6)]
        assert result.buckets[1].own == [(2, 5), (3, 3)]

    def test_single_node_keeps_sequence_whole(self):
        cluster = make_cluster(n=1, p=4, cap=10)
        batch = SequenceBatch(((0, 30),))
        result = pt.partition_inter_node(batch, cluster)
        assert result.buckets[0].own == [(0, 30)]
        assert result.buckets[0].chunks == []
        assert result.s1 == 40

    def test_single_node_chunk_at_threshold(self):
        # a sequence at the node budget enters the chunked tier but stays in
        # one piece on a single node
        cluster = make_cluster(n=1, p=4, cap=10)
        result = pt.partition_inter_node(SequenceBatch(((0, 40),)), cluster)
        assert [(c.start, c.end) for c in result.buckets[0].chunks] == [(0, 40)]
        assert result.s1 == 40

    def test_empty_batch(self):
        cluster = make_cluster()
        result = pt.partition_inter_node(SequenceBatch(()), cluster)
        assert all(bucket_tokens(b) == 0 for b in result.buckets)
        assert result.s1 == 20

    def test_threshold_drops_when_whole_sequences_overflow(self):
        # 15 + 15 + 9 on two 20-token nodes: whole placement overflows twice,
        # the threshold walks down to 9 and everything enters the chunked tier
        cluster = make_cluster()
        batch = SequenceBatch(((0, 15), (1, 15), (2, 9)))
        result = pt.partition_inter_node(batch, cluster)
        assert result.restarts >= 1
        assert result.s1 == 9
        loads = [bucket_tokens(b) for b in result.buckets]
        assert all(load <= 20 for load in loads)
        assert sum(loads) == 39

    def test_infeasible_batch_raises(self):
        cluster = make_cluster()
        with pytest.raises(pt.InfeasibleBatch):
            pt.partition_inter_node(SequenceBatch(((0, 41),)), cluster)

    def test_chunk_ranges_are_contiguous(self):
        cluster = make_cluster(n=4, p=2, cap=100)
        batch = SequenceBatch(((0, 700),))
        result = pt.partition_inter_node(batch, cluster)
        chunks = sorted(
            (c for b in result.buckets for c in b.chunks), key=lambda c: c.start
        )
        assert chunks[0].start == 0
        for prev, cur in zip(chunks, chunks[1:]):
            assert prev.end == cur.start
        assert chunks[-1].end == 700


class TestIntraNodePartitioning:
    def test_hand_trace_with_chunk(self):
        # P=2, L=16: an 8-token chunk splits 4+4, then 10 -> dev0, 4 -> dev1,
        # 3 -> dev1; loads 14 and 11
        cluster = make_cluster(p=2, cap=16)
        bucket = pt.NodeBucket(
            chunks=[pt.NodeChunk(sequence_id=9, start=0, end=8)],
            own=[(0, 10), (1, 4), (2, 3)],
        )
        result = pt.partition_intra_node(bucket, cluster)
        assert result.s0 == 16
        loads = [sum(e.tokens for e in dev) for dev in result.devices]
        assert loads == [14, 11]
        whole = {(e.sequence_id, dev) for dev, entries in enumerate(result.devices)
                 for e in entries if e.kind == "whole"}
        assert whole == {(0, 0), (1, 1), (2, 1)}

    def test_tie_breaks_choose_lowest_device(self):
        cluster = make_cluster(p=2, cap=32)
        bucket = pt.NodeBucket(own=[(0, 20), (1, 20)])
        result = pt.partition_intra_node(bucket, cluster)
        assert result.s0 == 32
        loads = [sum(e.tokens for e in dev) for dev in result.devices]
        assert loads == [20, 20]
        assert result.devices[0][0].sequence_id == 0

    def test_sequence_filling_single_device_node_stays_local(self):
        cluster = make_cluster(p=1, cap=16)
        bucket = pt.NodeBucket(own=[(0, 16)])
        result = pt.partition_intra_node(bucket, cluster)
        assert result.s0 == 16
        assert result.devices[0] == [pt.DeviceEntry(0, 0, 16, "split")]

    def test_sequence_at_threshold_splits_across_devices(self):
        # length == s0 lands in the split tier: its quadratic work spreads
        # over the devices even though it would fit one exactly
        cluster = make_cluster(p=2, cap=16)
        bucket = pt.NodeBucket(own=[(0, 16)])
        result = pt.partition_intra_node(bucket, cluster)
        assert result.s0 == 16
        kinds = {e.kind for dev in result.devices for e in dev}
        assert kinds == {"split"}
        loads = [sum(e.tokens for e in dev) for dev in result.devices]
        assert loads == [8, 8]

    def test_threshold_iteration_splits_oversized_locals(self):
        # 12 + 10 + 10 on two 16-token devices: whole placement overflows,
        # the threshold drops and the larger sequences split
        cluster = make_cluster(p=2, cap=16)
        bucket = pt.NodeBucket(own=[(0, 12), (1, 10), (2, 10)])
        result = pt.partition_intra_node(bucket, cluster)
        assert result.restarts >= 1
        loads = [sum(e.tokens for e in dev) for dev in result.devices]
        assert max(loads) <= 16
        assert sum(loads) == 32


class TestBuildPlan:
    def test_one_token_batch(self):
        cluster = make_cluster()
        plan = pt.build_plan(SequenceBatch(((0, 1),)), cluster)
        assert plan.zone_of == {0: "local"}
        assert plan.ring_groups == ()
        assert plan.fragments[0] == [pt.Fragment(0, 0, 1, 0)]
        assert plan.tokens_per_rank == [1, 0, 0, 0]

    def test_composed_hand_trace_covers_everything(self):
        cluster = make_cluster()
        batch = SequenceBatch(((0, 24), (1, 6), (2, 5), (3, 3)))
        plan = pt.build_plan(batch, cluster)
        assert check_plan(plan, batch.lengths, cluster) == []
        assert plan.zone_of[0] == "inter_node"
        assert plan.s1 == 20
        ring = next(r for r in plan.ring_groups if r.kind == "inter_node")
        assert ring.members == (0, 1, 2, 3)

    def test_exact_capacity_single_sequence(self):
        cluster = make_cluster(n=2, p=2, cap=10)
        plan = pt.build_plan(SequenceBatch(((0, 40),)), cluster)
        assert check_plan(plan, {0: 40}, cluster) == []
        assert plan.tokens_per_rank == [10, 10, 10, 10]

    def test_tight_mixed_batch_reconciles(self):
        # 12 + 5 + 3 = 20 tokens on one 2x10 node pair's worth of capacity
        cluster = make_cluster(n=2, p=2, cap=5)
        batch = SequenceBatch(((0, 12), (1, 5), (2, 3)))
        plan = pt.build_plan(batch, cluster)
        assert check_plan(plan, batch.lengths, cluster) == []

    def test_random_small_batches_always_validate(self):
        rng = random.Random(99)
        for trial in range(300):
            n = rng.choice([1, 2, 3])
            p = rng.choice([1, 2, 4])
            cap = rng.randint(4, 40)
            count = rng.randint(0, 6)
            lengths = [rng.randint(1, n * p * cap) for _ in range(count)]
            if sum(lengths) > n * p * cap:
                continue
            cluster = make_cluster(n=n, p=p, cap=cap)
            batch = SequenceBatch(tuple(enumerate(lengths)))
            plan = pt.build_plan(batch, cluster)
            problems = check_plan(plan, batch.lengths, cluster)
            assert problems == [], (lengths, n, p, cap, problems)

    def test_final_thresholds_bounded(self):
        cluster, _ = cluster_a()
        for seed in range(5):
            batch = sample_batch(preset("github"), 65536, seed=seed)
            plan = pt.build_plan(batch, cluster)
            assert plan.s1 <= cluster.gpus_per_node * cluster.token_capacity
            assert all(s0 <= cluster.token_capacity for s0 in plan.s0_per_node)

    def test_iteration_counts_bounded_by_sequence_count(self):
        cluster, _ = cluster_a()
        for seed in range(5):
            batch = sample_batch(preset("prolong64k"), 65536, seed=seed)
            plan = pt.build_plan(batch, cluster)
            s = len(batch)
            assert plan.meta["s1_restarts"] <= s
            assert all(r <= s for r in plan.meta["s0_restarts"])

    def test_plan_json_round_trip(self, tmp_path):
        cluster, _ = cluster_a()
        batch = sample_batch(preset("arxiv"), 65536, seed=2)
        plan = pt.build_plan(batch, cluster)
        path = tmp_path / "plan.json"
        pt.save_plan(str(path), plan)
        loaded = pt.load_plan(str(path))
        assert loaded.fragments == plan.fragments
        assert loaded.ring_groups == plan.ring_groups
        assert loaded.zone_of == plan.zone_of
        assert loaded.tokens_per_rank == plan.tokens_per_rank

    def test_infeasible_total_raises(self):
        cluster = make_cluster()
        with pytest.raises(pt.InfeasibleBatch):
            pt.build_plan(SequenceBatch(((0, 30), (1, 30))), cluster)
