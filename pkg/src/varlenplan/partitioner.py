"""Two-level hierarchical sequence partitioning.

Level one assigns sequences (chunking the longest ones) to node buckets so
inter-node communication stays bounded; level two spreads each node bucket
over its devices, splitting medium sequences to balance quadratic attention
work. Both levels iteratively lower their zone threshold whenever a whole
sequence fails to fit, which guarantees every sequence below the final
threshold is placeable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .attention_engine import (
    INTER_NODE,
    INTRA_NODE,
    LOCAL,
    RingGroup,
    RingSequence,
    balanced_zigzag_sizes,
    contiguous_ranges,
    ranges_from_sizes,
    split_even,
)
from .topology import ClusterSpec
from .workload import SequenceBatch


class InfeasibleBatch(RuntimeError):
    """The batch cannot be placed within the cluster's token capacity."""


class InfeasibleNode(InfeasibleBatch):
    """A node bucket cannot be spread over its devices within capacity."""


class PlanValidationError(RuntimeError):
    """Internal consistency check failed while assembling a plan (bug guard)."""


@dataclass(frozen=True)
class Fragment:
    """A contiguous token range of one sequence resident on one rank.

    micro_batch 0 is the (single) attention phase; hybrid data-parallel plans
    use indices >= 1 for sequentially executed short-sequence micro-batches.
    """

    sequence_id: int
    start: int
    end: int
    rank: int
    micro_batch: int = 0

    @property
    def tokens(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class NodeChunk:
    sequence_id: int
    start: int
    end: int

    @property
    def tokens(self) -> int:
        return self.end - self.start


@dataclass
class NodeBucket:
    """One node's share after inter-node partitioning: chunks of sequences
    that span several nodes plus whole sequences owned by this node."""

    chunks: list[NodeChunk] = field(default_factory=list)
    own: list[tuple[int, int]] = field(default_factory=list)

    @property
    def tokens(self) -> int:
        return sum(c.tokens for c in self.chunks) + sum(ln for _, ln in self.own)


@dataclass
class InterNodeAssignment:
    buckets: list[NodeBucket]
    s1: int
    restarts: int


@dataclass(frozen=True)
class DeviceEntry:
    sequence_id: int
    start: int
    end: int
    kind: str  # "chunk_part" | "split" | "whole"

    @property
    def tokens(self) -> int:
        return self.end - self.start


@dataclass
class IntraNodeAssignment:
    devices: list[list[DeviceEntry]]
    s0: int
    restarts: int


@dataclass
class PlacementPlan:
    strategy: str
    num_nodes: int
    gpus_per_node: int
    s1: int
    s0_per_node: list[int]
    zone_of: dict[int, str]
    sequence_lengths: dict[int, int]
    node_buckets: list[list[tuple[int, int]]]  # per node: (sequence_id, tokens)
    fragments: list[list[Fragment]]  # per rank, the device buckets
    ring_groups: tuple[RingGroup, ...]
    tokens_per_rank: list[int]
    micro_batch_counts: list[int]
    meta: dict

    @property
    def num_ranks(self) -> int:
        return self.num_nodes * self.gpus_per_node

    @property
    def device_buckets(self) -> list[list[Fragment]]:
        return self.fragments

    def total_tokens(self) -> int:
        return sum(self.tokens_per_rank)


def _sorted_desc(batch: SequenceBatch) -> list[tuple[int, int]]:
    return sorted(batch.sequences, key=lambda t: (-t[1], t[0]))


class _PlacementFailure(Exception):
    """Internal: even-split placement of one sequence found no fitting bucket
    set; carries the chunk counts in force so a neighbor can be re-split."""

    def __init__(self, sid: int, length: int, counts: dict[int, tuple[int, int]]):
        super().__init__(f"sequence {sid} ({length} tokens) does not fit")
        self.sid = sid
        self.counts = counts  # sid -> (length, chunk count)


def _bump_for_failure(exc: _PlacementFailure, overrides: dict[int, int], limit: int) -> bool:
    """Raise the chunk count of the sequence currently placing the largest
    chunks; returns False when every candidate is already fully split."""
    candidates = [
        (ln / k, sid, k)
        for sid, (ln, k) in exc.counts.items()
        if k < limit
    ]
    if not candidates:
        return False
    _, sid, k = max(candidates, key=lambda c: (c[0], -c[1]))
    overrides[sid] = k + 1
    return True


def partition_inter_node(
    batch: SequenceBatch,
    cluster: ClusterSpec,
    chunk_overrides: dict[int, int] | None = None,
) -> InterNodeAssignment:
    """Assign sequences to node buckets.

    Sequences at or above the running threshold s1 are split evenly into
    ceil(len/s_avg) chunks placed on distinct least-loaded buckets; shorter
    sequences go whole to the least-loaded bucket. When a whole sequence
    would exceed the per-node budget P*L, s1 drops to the longest remaining
    whole sequence and placement restarts. A chunked sequence that cannot be
    placed triggers a bounded re-split of the sequence holding the largest
    chunks (the pseudocode leaves this capacity corner open).

    chunk_overrides raises the chunk count of specific sequences; it is used
    by the capacity reconciliation pass in build_plan.
    """
    overrides = dict(chunk_overrides or {})
    n_nodes = cluster.num_nodes
    node_cap = cluster.gpus_per_node * cluster.token_capacity
    order = _sorted_desc(batch)
    total = sum(ln for _, ln in order)
    if total > n_nodes * node_cap:
        raise InfeasibleBatch(
            f"batch of {total} tokens exceeds cluster capacity {n_nodes * node_cap}"
        )
    budget = (len(order) + 1) * n_nodes
    while True:
        try:
            return _partition_inter_once(order, n_nodes, node_cap, overrides)
        except _PlacementFailure as exc:
            budget -= 1
            if budget < 0 or not _bump_for_failure(exc, overrides, n_nodes):
                raise InfeasibleBatch(
                    f"sequence {exc.sid} cannot be chunked across nodes"
                ) from None


def _partition_inter_once(
    order: list[tuple[int, int]],
    n_nodes: int,
    node_cap: int,
    overrides: dict[int, int],
) -> InterNodeAssignment:
    s1 = node_cap
    restarts = 0
    max_restarts = len(order) + 1
    while True:
        buckets = [NodeBucket() for _ in range(n_nodes)]
        loads = [0] * n_nodes
        z2 = [(sid, ln) for sid, ln in order if ln >= s1]
        z01 = [(sid, ln) for sid, ln in order if ln < s1]
        total_z2 = sum(ln for _, ln in z2)
        counts: dict[int, tuple[int, int]] = {}
        for sid, ln in z2:
            # ceil(len / s_avg) with s_avg = total_z2 / N, in exact integers
            k0 = max(1, -(-ln * n_nodes // total_z2))
            k0 = max(k0, overrides.get(sid, 1))
            placed_k = _place_chunks(sid, ln, k0, buckets, loads, node_cap)
            if placed_k == 0:
                raise _PlacementFailure(sid, ln, counts)
            counts[sid] = (ln, placed_k)
        restart = False
        for sid, ln in z01:
            idx = min(range(n_nodes), key=lambda i: (loads[i], i))
            if ln + loads[idx] > node_cap:
                s1 = max(length for _, length in z01)
                restarts += 1
                restart = True
                break
            buckets[idx].own.append((sid, ln))
            loads[idx] += ln
        if not restart:
            return InterNodeAssignment(buckets=buckets, s1=s1, restarts=restarts)
        if restarts > max_restarts:
            raise InfeasibleBatch("node threshold refinement did not converge")


def _place_chunks(
    sid: int,
    length: int,
    k_init: int,
    buckets: list[NodeBucket],
    loads: list[int],
    node_cap: int,
) -> int:
    """Place one sequence as k contiguous chunks on k distinct buckets, largest
    chunk to the least-loaded fitting bucket. Retries with more chunks when a
    placement does not fit; mutates buckets/loads only on success and returns
    the chunk count used (0 when nothing fits)."""
    n = len(buckets)
    for k in range(min(k_init, n), n + 1):
        sizes = split_even(length, k)
        ranges = contiguous_ranges(sizes)
        by_load = sorted(range(n), key=lambda i: (loads[i], i))
        chosen: list[int] = []
        used: set[int] = set()
        trial = list(loads)
        ok = True
        for size in sizes:
            target = next(
                (i for i in by_load if i not in used and trial[i] + size <= node_cap),
                None,
            )
            if target is None:
                ok = False
                break
            chosen.append(target)
            used.add(target)
            trial[target] += size
        if not ok:
            continue
        for (start, end), idx in zip(ranges, chosen):
            if end > start:
                buckets[idx].chunks.append(NodeChunk(sequence_id=sid, start=start, end=end))
                loads[idx] += end - start
        return k
    return 0


def partition_intra_node(
    node: NodeBucket,
    cluster: ClusterSpec,
    split_overrides: dict[int, int] | None = None,
) -> IntraNodeAssignment:
    """Spread one node bucket over its P devices.

    Inter-node chunks are split evenly across all devices. Among the node's
    own sequences, those at or above the running threshold s0 split into
    ceil(len^2/c_avg) equal fragments assigned round-robin (continuing from
    the previous sequence's last device, skipping devices they do not fit);
    shorter ones go whole to the least-loaded device, lowering s0 and
    restarting on overflow.
    """
    overrides = dict(split_overrides or {})
    p = cluster.gpus_per_node
    cap = cluster.token_capacity
    own = sorted(node.own, key=lambda t: (-t[1], t[0]))
    budget = (len(own) + 1) * p
    while True:
        try:
            return _partition_intra_once(node, own, p, cap, overrides)
        except _PlacementFailure as exc:
            budget -= 1
            if budget < 0 or not _bump_for_failure(exc, overrides, p):
                raise InfeasibleNode(
                    f"sequence {exc.sid} cannot be split within the node"
                ) from None


def _partition_intra_once(
    node: NodeBucket,
    own: list[tuple[int, int]],
    p: int,
    cap: int,
    overrides: dict[int, int],
) -> IntraNodeAssignment:
    s0 = cap
    restarts = 0
    max_restarts = len(own) + 1
    while True:
        devices: list[list[DeviceEntry]] = [[] for _ in range(p)]
        loads = [0] * p
        for chunk in node.chunks:
            sizes = split_even(chunk.tokens, p)
            for dev, (start, end) in enumerate(contiguous_ranges(sizes, offset=chunk.start)):
                if end > start:
                    devices[dev].append(DeviceEntry(chunk.sequence_id, start, end, "chunk_part"))
                    loads[dev] += end - start
        z1 = [(sid, ln) for sid, ln in own if ln >= s0]
        z0 = [(sid, ln) for sid, ln in own if ln < s0]
        sq_total = sum(ln * ln for _, ln in z1)
        cursor = 0
        counts: dict[int, tuple[int, int]] = {}
        for sid, ln in z1:
            k0 = max(1, -(-ln * ln * p // sq_total))
            k0 = max(k0, overrides.get(sid, 1))
            cursor, used_k = _place_split(sid, ln, k0, cursor, devices, loads, cap)
            if cursor < 0:
                raise _PlacementFailure(sid, ln, counts)
            counts[sid] = (ln, used_k)
        restart = False
        for sid, ln in z0:
            idx = min(range(p), key=lambda i: (loads[i], i))
            if ln + loads[idx] > cap:
                s0 = max(length for _, length in z0)
                restarts += 1
                restart = True
                break
            devices[idx].append(DeviceEntry(sid, 0, ln, "whole"))
            loads[idx] += ln
        if not restart:
            return IntraNodeAssignment(devices=devices, s0=s0, restarts=restarts)
        if restarts > max_restarts:
            raise InfeasibleNode("device threshold refinement did not converge")


def _place_split(
    sid: int,
    length: int,
    k_init: int,
    cursor: int,
    devices: list[list[DeviceEntry]],
    loads: list[int],
    cap: int,
) -> tuple[int, int]:
    """Round-robin fragment placement with fit skipping; returns (next cursor,
    fragment count), or (-1, 0) when the sequence cannot be placed at any k."""
    p = len(devices)
    for k in range(min(k_init, p), p + 1):
        sizes = split_even(length, k)
        ranges = contiguous_ranges(sizes)
        chosen: list[int] = []
        used: set[int] = set()
        trial = list(loads)
        pos = cursor
        ok = True
        for size in sizes:
            target = None
            for step in range(p):
                d = (pos + step) % p
                if d in used:
                    continue
                if trial[d] + size <= cap:
                    target = d
                    break
            if target is None:
                ok = False
                break
            chosen.append(target)
            used.add(target)
            trial[target] += size
            pos = (target + 1) % p
        if not ok:
            continue
        for (start, end), dev in zip(ranges, chosen):
            if end > start:
                devices[dev].append(DeviceEntry(sid, start, end, "split"))
                loads[dev] += end - start
        return (chosen[-1] + 1) % p, k
    return -1, 0


def build_plan(batch: SequenceBatch, cluster: ClusterSpec) -> PlacementPlan:
    """Run both partitioning levels, form ring groups with zigzag chunk
    layouts, label zones from the resulting placement and validate the plan.

    Zigzag re-chunking can shift a rank's token count by a token or two
    relative to the even-split accounting the levels used, so an over-capacity
    rank triggers a bounded reconciliation pass that raises the chunk count of
    the largest split sequence on that rank and retries.
    """
    node_overrides: dict[int, int] = {}
    split_overrides: list[dict[int, int]] = [dict() for _ in range(cluster.num_nodes)]
    for attempt in range(cluster.num_ranks + 1):
        inter = partition_inter_node(batch, cluster, node_overrides)
        intra = []
        failed_node = None
        for n, bucket in enumerate(inter.buckets):
            try:
                intra.append(partition_intra_node(bucket, cluster, split_overrides[n]))
            except InfeasibleNode:
                failed_node = n
                break
        if failed_node is not None:
            # spread one of the node's chunked sequences thinner and redo
            # the node assignment from the top
            bucket = inter.buckets[failed_node]
            counts: dict[int, int] = {}
            for b in inter.buckets:
                for chunk in b.chunks:
                    counts[chunk.sequence_id] = counts.get(chunk.sequence_id, 0) + 1
            candidates = sorted(
                ((chunk.tokens, chunk.sequence_id) for chunk in bucket.chunks
                 if max(counts[chunk.sequence_id], node_overrides.get(chunk.sequence_id, 1)) < cluster.num_nodes),
                reverse=True,
            )
            if not candidates:
                raise InfeasibleBatch(
                    f"node {failed_node} cannot spread its bucket over its devices"
                )
            sid = candidates[0][1]
            node_overrides[sid] = max(counts[sid], node_overrides.get(sid, 1)) + 1
            continue
        plan = _assemble_plan(batch, cluster, inter, intra, attempt)
        overloaded = [
            r for r in range(cluster.num_ranks)
            if _phase_load_exceeds(plan, r, cluster.token_capacity)
        ]
        if not overloaded:
            validate_plan(plan, batch, cluster)
            return plan
        if not _bump_overrides(plan, cluster, overloaded[0], inter, node_overrides, split_overrides):
            raise InfeasibleBatch("no split sequence available to relieve an over-capacity rank")
    raise InfeasibleBatch("capacity reconciliation exceeded its retry budget")


def _phase_load_exceeds(plan: PlacementPlan, rank: int, cap: int) -> bool:
    per_mb: dict[int, int] = {}
    for frag in plan.fragments[rank]:
        per_mb[frag.micro_batch] = per_mb.get(frag.micro_batch, 0) + frag.tokens
    return any(v > cap for v in per_mb.values())


def first_over_capacity(plan: PlacementPlan, cluster: ClusterSpec) -> int | None:
    """Lowest rank whose token load (per micro-batch) exceeds capacity, if any."""
    for rank in range(plan.num_ranks):
        if _phase_load_exceeds(plan, rank, cluster.token_capacity):
            return rank
    return None


def _bump_overrides(
    plan: PlacementPlan,
    cluster: ClusterSpec,
    rank: int,
    inter: InterNodeAssignment,
    node_overrides: dict[int, int],
    split_overrides: list[dict[int, int]],
) -> bool:
    node = rank // cluster.gpus_per_node
    chunk_counts: dict[int, int] = {}
    for bucket in inter.buckets:
        for chunk in bucket.chunks:
            chunk_counts[chunk.sequence_id] = chunk_counts.get(chunk.sequence_id, 0) + 1
    candidates = sorted(
        ((sum(f.tokens for f in plan.fragments[rank] if f.sequence_id == sid), sid)
         for sid in {f.sequence_id for f in plan.fragments[rank]}
         if plan.zone_of[sid] != LOCAL),
        reverse=True,
    )
    for _, sid in candidates:
        if plan.zone_of[sid] == INTER_NODE or sid in chunk_counts:
            current = max(chunk_counts.get(sid, 1), node_overrides.get(sid, 1))
            if current < cluster.num_nodes:
                node_overrides[sid] = current + 1
                return True
        else:
            spans = len({f.rank for fr in plan.fragments for f in fr if f.sequence_id == sid})
            current = max(spans, split_overrides[node].get(sid, 1))
            if current < cluster.gpus_per_node:
                split_overrides[node][sid] = current + 1
                return True
    return False


def _assemble_plan(
    batch: SequenceBatch,
    cluster: ClusterSpec,
    inter: InterNodeAssignment,
    intra: list[IntraNodeAssignment],
    attempt: int,
) -> PlacementPlan:
    lengths = batch.lengths
    p = cluster.gpus_per_node
    zone_of: dict[int, str] = {}
    fragments: list[list[Fragment]] = [[] for _ in range(cluster.num_ranks)]

    chunk_nodes: dict[int, list[int]] = {}
    for n, bucket in enumerate(inter.buckets):
        for chunk in bucket.chunks:
            chunk_nodes.setdefault(chunk.sequence_id, []).append(n)

    # fixed single-rank placements first, then ring layouts so their leftover
    # tokens can chase the lightest ranks
    ring_jobs: list[tuple[str, tuple[int, ...], int, int]] = []
    for sid, nodes in sorted(chunk_nodes.items()):
        length = lengths[sid]
        spanned = sorted(set(nodes))
        if len(spanned) >= 2:
            members = tuple(r for node in spanned for r in cluster.ranks_of_node(node))
            ring_jobs.append((INTER_NODE, members, sid, length))
        elif p >= 2:
            ring_jobs.append((INTRA_NODE, tuple(cluster.ranks_of_node(spanned[0])), sid, length))
        else:
            rank = spanned[0] * p
            zone_of[sid] = LOCAL
            fragments[rank].append(Fragment(sid, 0, length, rank))

    for n, assignment in enumerate(intra):
        by_seq: dict[int, list[int]] = {}
        for dev, entries in enumerate(assignment.devices):
            for entry in entries:
                if entry.kind == "chunk_part":
                    continue  # covered by the ring/zone handling above
                by_seq.setdefault(entry.sequence_id, []).append(dev)
        for sid, devs in sorted(by_seq.items()):
            length = lengths[sid]
            devs = sorted(set(devs))
            if len(devs) >= 2:
                ring_jobs.append((INTRA_NODE, tuple(n * p + d for d in devs), sid, length))
            else:
                rank = n * p + devs[0]
                zone_of[sid] = LOCAL
                fragments[rank].append(Fragment(sid, 0, length, rank))

    running = [sum(f.tokens for f in frags) for frags in fragments]
    ring_map: dict[tuple[str, tuple[int, ...]], list[RingSequence]] = {}
    # lay out the narrowest rings first: sequences confined to few ranks have
    # the least placement freedom, while wide rings spread within +/- 1 token
    # anywhere and so plug the remaining gaps best
    ring_jobs.sort(key=lambda job: (len(job[1]), job[1], job[2]))
    for kind, members, sid, length in ring_jobs:
        _add_ring_sequence(ring_map, kind, members, sid, length, zone_of, fragments, running, p)

    rings = tuple(
        RingGroup(kind=kind, members=members, sequences=tuple(sorted(seqs, key=lambda s: s.sequence_id)))
        for (kind, members), seqs in sorted(ring_map.items())
    )
    for rank_frags in fragments:
        rank_frags.sort(key=lambda f: (f.micro_batch, f.sequence_id, f.start))
    tokens_per_rank = [sum(f.tokens for f in frs) for frs in fragments]
    node_buckets = [
        sorted(
            {sid: sum(f.tokens for r in cluster.ranks_of_node(n) for f in fragments[r] if f.sequence_id == sid)
             for sid in {f.sequence_id for r in cluster.ranks_of_node(n) for f in fragments[r]}}.items()
        )
        for n in range(cluster.num_nodes)
    ]
    return PlacementPlan(
        strategy="zeppelin",
        num_nodes=cluster.num_nodes,
        gpus_per_node=p,
        s1=inter.s1,
        s0_per_node=[a.s0 for a in intra],
        zone_of=zone_of,
        sequence_lengths=dict(lengths),
        node_buckets=node_buckets,
        fragments=fragments,
        ring_groups=rings,
        tokens_per_rank=tokens_per_rank,
        micro_batch_counts=[1] * cluster.num_ranks,
        meta={
            "s1_restarts": inter.restarts,
            "s0_restarts": [a.restarts for a in intra],
            "reconcile_attempts": attempt,
        },
    )


def _add_ring_sequence(
    ring_map: dict,
    kind: str,
    members: tuple[int, ...],
    sid: int,
    length: int,
    zone_of: dict[int, str],
    fragments: list[list[Fragment]],
    running: list[int],
    gpus_per_node: int,
) -> None:
    g = len(members)
    sizes = balanced_zigzag_sizes(length, g, [running[r] for r in members])
    ranges = ranges_from_sizes(sizes)
    spanned = [i for i, rs in enumerate(ranges) if rs]
    spanned_ranks = {members[i] for i in spanned}
    if len(spanned_ranks) < 2:
        # too short to actually occupy several ranks: keep it local
        rank = members[spanned[0]] if spanned else members[0]
        zone_of[sid] = LOCAL
        fragments[rank].append(Fragment(sid, 0, length, rank))
        running[rank] += length
        return
    spanned_nodes = {r // gpus_per_node for r in spanned_ranks}
    if kind == INTER_NODE and len(spanned_nodes) == 1:
        # too short to genuinely cross nodes: run it on a node-local ring
        node = spanned_nodes.pop()
        node_members = tuple(r for r in members if r // gpus_per_node == node)
        _add_ring_sequence(ring_map, INTRA_NODE, node_members, sid, length,
                           zone_of, fragments, running, gpus_per_node)
        return
    zone_of[sid] = INTER_NODE if kind == INTER_NODE else INTRA_NODE
    ring_map.setdefault((kind, members), []).append(
        RingSequence(sequence_id=sid, ranges_by_position=tuple(tuple(r) for r in ranges))
    )
    for position, rank in enumerate(members):
        for start, end in ranges[position]:
            fragments[rank].append(Fragment(sid, start, end, rank))
            running[rank] += end - start


def validate_plan(plan: PlacementPlan, batch: SequenceBatch, cluster: ClusterSpec) -> None:
    """Internal invariant guard: token conservation, disjoint full coverage of
    every sequence, per-phase capacity, and placement-consistent zone labels."""
    lengths = batch.lengths
    if set(plan.sequence_lengths) != set(lengths):
        raise PlanValidationError("plan covers a different sequence id set than the batch")
    if plan.total_tokens() != batch.total_tokens:
        raise PlanValidationError("token conservation violated")
    per_seq: dict[int, list[tuple[int, int]]] = {sid: [] for sid in lengths}
    for rank, frags in enumerate(plan.fragments):
        for frag in frags:
            if frag.rank != rank:
                raise PlanValidationError("fragment filed under the wrong rank")
            per_seq[frag.sequence_id].append((frag.start, frag.end))
    for sid, ranges in per_seq.items():
        ranges.sort()
        pos = 0
        for start, end in ranges:
            if start != pos or end <= start:
                raise PlanValidationError(f"sequence {sid} fragments do not tile [0, {lengths[sid]})")
            pos = end
        if pos != lengths[sid]:
            raise PlanValidationError(f"sequence {sid} fragments do not cover its length")
    for rank in range(plan.num_ranks):
        if _phase_load_exceeds(plan, rank, cluster.token_capacity):
            raise PlanValidationError(f"rank {rank} exceeds token capacity")
    for sid, zone in plan.zone_of.items():
        ranks = {f.rank for frs in plan.fragments for f in frs if f.sequence_id == sid}
        nodes = {cluster.node_of(r) for r in ranks}
        if zone == LOCAL and len(ranks) != 1:
            raise PlanValidationError(f"local sequence {sid} spans {len(ranks)} ranks")
        if zone == INTRA_NODE and (len(nodes) != 1 or len(ranks) < 2):
            raise PlanValidationError(f"intra-node sequence {sid} has a bad span")
        if zone == INTER_NODE and len(nodes) < 2:
            raise PlanValidationError(f"inter-node sequence {sid} stays within one node")
    for ring in plan.ring_groups:
        nodes = {cluster.node_of(r) for r in ring.members}
        if ring.kind == INTER_NODE and len(nodes) < 2:
            raise PlanValidationError("inter-node ring does not span nodes")
        if ring.kind == INTRA_NODE and len(nodes) != 1:
            raise PlanValidationError("intra-node ring crosses nodes")


def plan_to_json(plan: PlacementPlan) -> str:
    payload = {
        "strategy": plan.strategy,
        "num_nodes": plan.num_nodes,
        "gpus_per_node": plan.gpus_per_node,
        "s1": plan.s1,
        "s0_per_node": plan.s0_per_node,
        "zones": {str(sid): zone for sid, zone in sorted(plan.zone_of.items())},
        "sequence_lengths": {str(sid): ln for sid, ln in sorted(plan.sequence_lengths.items())},
        "node_buckets": [[[sid, tok] for sid, tok in bucket] for bucket in plan.node_buckets],
        "ranks": [
            [{"sequence_id": f.sequence_id, "start": f.start, "end": f.end, "micro_batch": f.micro_batch}
             for f in frags]
            for frags in plan.fragments
        ],
        "rings": [
            {
                "kind": ring.kind,
                "members": list(ring.members),
                "sequences": [
                    {"sequence_id": seq.sequence_id,
                     "ranges": [[list(r) for r in pos] for pos in seq.ranges_by_position]}
                    for seq in ring.sequences
                ],
            }
            for ring in plan.ring_groups
        ],
        "micro_batch_counts": plan.micro_batch_counts,
        "meta": plan.meta,
    }
    return json.dumps(payload, indent=1, sort_keys=True)


def plan_from_json(text: str) -> PlacementPlan:
    payload = json.loads(text)
    try:
        fragments = [
            [Fragment(e["sequence_id"], e["start"], e["end"], rank, e.get("micro_batch", 0)) for e in frags]
            for rank, frags in enumerate(payload["ranks"])
        ]
        rings = tuple(
            RingGroup(
                kind=r["kind"],
                members=tuple(r["members"]),
                sequences=tuple(
                    RingSequence(
                        sequence_id=s["sequence_id"],
                        ranges_by_position=tuple(tuple(tuple(rr) for rr in pos) for pos in s["ranges"]),
                    )
                    for s in r["sequences"]
                ),
            )
            for r in payload["rings"]
        )
        plan = PlacementPlan(
            strategy=payload["strategy"],
            num_nodes=payload["num_nodes"],
            gpus_per_node=payload["gpus_per_node"],
            s1=payload["s1"],
            s0_per_node=list(payload["s0_per_node"]),
            zone_of={int(k): v for k, v in payload["zones"].items()},
            sequence_lengths={int(k): v for k, v in payload["sequence_lengths"].items()},
            node_buckets=[[(sid, tok) for sid, tok in bucket] for bucket in payload["node_buckets"]],
            fragments=fragments,
            ring_groups=rings,
            tokens_per_rank=[sum(f.tokens for f in frags) for frags in fragments],
            micro_batch_counts=list(payload["micro_batch_counts"]),
            meta=dict(payload.get("meta", {})),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed plan file: missing or invalid key ({exc})") from exc
    return plan


def save_plan(path: str, plan: PlacementPlan) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan_to_json(plan))
        fh.write("\n")


def load_plan(path: str) -> PlacementPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_json(fh.read())


def batch_from_plan(plan: PlacementPlan) -> SequenceBatch:
    return SequenceBatch(tuple(sorted(plan.sequence_lengths.items())))
