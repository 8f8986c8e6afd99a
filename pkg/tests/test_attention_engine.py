import random

import pytest

from oracles import ring_pair_totals_bruteforce, visible_pairs_bruteforce
from varlenplan import attention_engine as ae
from varlenplan.partitioner import build_plan
from varlenplan.topology import ClusterSpec, cluster_a
from varlenplan.workload import SequenceBatch


def test_split_even_rule():
    assert ae.split_even(10, 3) == [4, 3, 3]
    assert ae.split_even(8, 4) == [2, 2, 2, 2]
    assert ae.split_even(3, 5) == [1, 1, 1, 0, 0]
    assert ae.split_even(0, 2) == [0, 0]


def test_zigzag_two_rank_example():
    chunks = ae.zigzag_chunks(8, 2)
    assert chunks == [(0, 2), (2, 4), (4, 6), (6, 8)]
    assert ae.zigzag_positions(2) == [(0, 3), (1, 2)]
    ranges = ae.zigzag_ranges_by_position(8, 2)
    assert ranges[0] == [(0, 2), (6, 8)]
    assert ranges[1] == [(2, 4), (4, 6)]
    # pair totals against a full context: 3 + 15 and 7 + 11
    totals = ring_pair_totals_bruteforce(8, ranges)
    assert totals == [18, 18]
    full = [(0, 8)]
    assert ae.visible_pairs((0, 2), full) + ae.visible_pairs((6, 8), full) == 18
    assert ae.visible_pairs((2, 4), full) + ae.visible_pairs((4, 6), full) == 18


def test_zigzag_degenerate_single_rank():
    ranges = ae.zigzag_ranges_by_position(10, 1)
    assert ranges == [[(0, 5), (5, 10)]]


def test_zigzag_rejects_short_sequences():
    with pytest.raises(ValueError):
        ae.zigzag_chunks(7, 4)
    ae.zigzag_chunks(8, 4)  # boundary is fine


def test_zigzag_balance_when_divisible():
    ranges = ae.zigzag_ranges_by_position(4096, 8)
    totals = ring_pair_totals_bruteforce(4096, ranges)
    assert len(set(totals)) == 1


def test_zigzag_balance_bound_when_not_divisible():
    rng = random.Random(11)
    for _ in range(50):
        g = rng.randint(2, 8)
        s = rng.randint(2 * g, 512)
        ranges = ae.zigzag_ranges_by_position(s, g)
        totals = ring_pair_totals_bruteforce(s, ranges)
        if s % (2 * g) == 0:
            assert len(set(totals)) == 1
        chunk_rows = -(-s // (2 * g))
        assert max(totals) - min(totals) <= chunk_rows * s
        assert sum(totals) == ae.causal_pairs(s)


def test_visible_pairs_examples():
    assert ae.visible_pairs((0, 4), [(0, 4)]) == 10
    assert ae.visible_pairs((4, 8), [(0, 4)]) == 16
    assert ae.visible_pairs((4, 8), [(0, 8)]) == 26


def test_visible_pairs_matches_enumeration():
    rng = random.Random(5)
    for _ in range(200):
        a = rng.randint(0, 30)
        b = a + rng.randint(0, 20)
        kv = []
        pos = 0
        for _ in range(rng.randint(0, 3)):
            lo = pos + rng.randint(0, 8)
            hi = lo + rng.randint(0, 10)
            kv.append((lo, hi))
            pos = hi
        assert ae.visible_pairs((a, b), kv) == visible_pairs_bruteforce((a, b), kv)


def _tiny_cluster():
    return ClusterSpec(num_nodes=2, gpus_per_node=2, token_capacity=64,
                       inv_bw_intra=1.0, inv_bw_inter=2.0)


def test_local_only_schedule_has_no_comm():
    cluster = _tiny_cluster()
    batch = SequenceBatch(((0, 5), (1, 4), (2, 3), (3, 2)))
    plan = build_plan(batch, cluster)
    schedule = ae.build_schedule(plan)
    assert schedule.rings() == ()
    assert {t.rank for t in schedule.local_tasks} <= set(range(4))
    assert sum(t.compute_pairs for t in schedule.local_tasks) == sum(
        ae.causal_pairs(ln) for _, ln in batch.sequences
    )


def test_single_long_sequence_ring_structure():
    cluster, _ = cluster_a()
    plan = build_plan(SequenceBatch(((0, 65536),)), cluster)
    schedule = ae.build_schedule(plan)
    assert len(schedule.inter_rings) == 1
    rs = schedule.inter_rings[0]
    assert rs.ring.group_size == 16
    assert rs.num_rounds == 16
    for pos in range(16):
        for r in range(16):
            assert rs.rounds[pos][r].comm_tokens == 65536 // 16


def test_fused_intra_ring_balances_two_sequences():
    ring = ae.RingGroup(
        kind=ae.INTRA_NODE,
        members=(0, 1),
        sequences=tuple(
            ae.RingSequence(sequence_id=sid,
                            ranges_by_position=tuple(tuple(r) for r in ae.zigzag_ranges_by_position(8, 2)))
            for sid in (0, 1)
        ),
    )
    sched = ae._ring_schedule(ring)
    totals = [sum(rr.compute_pairs for rr in sched.rounds[pos]) for pos in range(2)]
    assert totals[0] == totals[1] == 2 * 18


def test_ring_work_conservation_random_plans():
    cluster, _ = cluster_a()
    rng = random.Random(3)
    for _ in range(5):
        lengths = [rng.randint(1, 20000) for _ in range(rng.randint(1, 8))]
        batch = SequenceBatch(tuple(enumerate(lengths)))
        if batch.total_tokens > cluster.num_ranks * cluster.token_capacity:
            continue
        plan = build_plan(batch, cluster)
        schedule = ae.build_schedule(plan)
        ring_pairs = sum(
            rr.compute_pairs
            for rs in schedule.rings()
            for pos_rounds in rs.rounds
            for rr in pos_rounds
        )
        local_pairs = sum(t.compute_pairs for t in schedule.local_tasks)
        assert ring_pairs + local_pairs == sum(ae.causal_pairs(ln) for ln in lengths)


def test_ring_per_rank_totals_equal_for_exact_split():
    cluster, _ = cluster_a()
    plan = build_plan(SequenceBatch(((0, 65536),)), cluster)
    schedule = ae.build_schedule(plan)
    rs = schedule.inter_rings[0]
    totals = {sum(rr.compute_pairs for rr in rs.rounds[pos]) for pos in range(rs.ring.group_size)}
    assert len(totals) == 1
