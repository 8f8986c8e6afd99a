"""Ring groups, zigzag causal chunking and per-rank attention schedules.

Work is accounted in exact visible (query, key) pairs under the causal mask
and communication in KV tokens; no tensor math happens here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .partitioner import PlacementPlan

INTER_NODE = "inter_node"
INTRA_NODE = "intra_node"
LOCAL = "local"


def split_even(total: int, parts: int) -> list[int]:
    """Maximally even integer split: the first (total mod parts) parts get
    ceil(total/parts) tokens, the rest floor(total/parts)."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if total < 0:
        raise ValueError("total must be >= 0")
    base, extra = divmod(total, parts)
    return [base + 1 if i < extra else base for i in range(parts)]


def contiguous_ranges(sizes: list[int], offset: int = 0) -> list[tuple[int, int]]:
    ranges = []
    pos = offset
    for size in sizes:
        ranges.append((pos, pos + size))
        pos += size
    return ranges


def zigzag_chunks(seq_len: int, group_size: int) -> list[tuple[int, int]]:
    """Split a sequence into 2*G equal-length contiguous chunks for a ring of
    size G; ring position i holds chunks i and 2G-1-i, which equalizes causal
    pair counts across positions.

    Raises ValueError when seq_len < 2*G (too short for this ring size).
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    if seq_len < 2 * group_size:
        raise ValueError(f"sequence of {seq_len} tokens is too short for a ring of size {group_size}")
    return contiguous_ranges(split_even(seq_len, 2 * group_size))


def zigzag_positions(group_size: int) -> list[tuple[int, int]]:
    """Chunk indices (i, 2G-1-i) held by each ring position i."""
    return [(i, 2 * group_size - 1 - i) for i in range(group_size)]


def zigzag_ranges_by_position(seq_len: int, group_size: int) -> list[list[tuple[int, int]]]:
    """Per-position token ranges under zigzag chunking.

    Unlike zigzag_chunks this tolerates seq_len < 2*G by emitting empty tail
    chunks, which plan construction relies on for short ring members; empty
    ranges are dropped from the result.
    """
    chunks = contiguous_ranges(split_even(seq_len, 2 * group_size))
    out: list[list[tuple[int, int]]] = []
    for i, j in zigzag_positions(group_size):
        ranges = [chunks[i]]
        if j != i:
            ranges.append(chunks[j])
        out.append([(a, b) for a, b in ranges if b > a])
    return out


def balanced_zigzag_sizes(seq_len: int, group_size: int, position_loads: list[int]) -> list[int]:
    """Zigzag chunk sizes whose leftover tokens (seq_len mod 2G) go to the
    ring positions carrying the lightest current loads.

    Every chunk stays within one token of seq_len/(2G), so the causal balance
    bound of the uniform rule is preserved, while stacking of leftovers from
    different sequences onto the same rank is avoided; capacity-tight plans
    rely on this.
    """
    g = group_size
    base, extra = divmod(seq_len, 2 * g)
    sizes = [base] * (2 * g)
    order = sorted(range(g), key=lambda p: (position_loads[p], p))
    if extra <= g:
        for p in order[:extra]:
            sizes[p] += 1
    else:
        for p in range(g):
            sizes[p] += 1
        for p in order[:extra - g]:
            sizes[2 * g - 1 - p] += 1
    return sizes


def ranges_from_sizes(sizes: list[int]) -> list[list[tuple[int, int]]]:
    """Per-position nonempty token ranges for explicit zigzag chunk sizes."""
    g = len(sizes) // 2
    chunks = contiguous_ranges(sizes)
    out: list[list[tuple[int, int]]] = []
    for i, j in zigzag_positions(g):
        ranges = [chunks[i]]
        if j != i:
            ranges.append(chunks[j])
        out.append([(a, b) for a, b in ranges if b > a])
    return out


def visible_pairs(q_range: tuple[int, int], kv_ranges: list[tuple[int, int]] | tuple) -> int:
    """Count causal (q, k) pairs with q in q_range, k in any kv range, k <= q.

    Ranges are half-open [start, end) in one sequence's global coordinates.
    """
    a, b = q_range
    if b <= a:
        return 0
    total = 0
    for c, d in kv_ranges:
        if d <= c:
            continue
        m = d - c
        # per-q contribution: clamp(q + 1 - c, 0, m), summed over q in [a, b)
        ramp_lo = max(a, c)
        ramp_hi = min(b - 1, d - 2)
        if ramp_hi >= ramp_lo:
            first = ramp_lo + 1 - c
            last = ramp_hi + 1 - c
            total += (first + last) * (ramp_hi - ramp_lo + 1) // 2
        flat_lo = max(a, d - 1)
        if b - 1 >= flat_lo:
            total += m * (b - flat_lo)
    return total


def causal_pairs(seq_len: int) -> int:
    """Pairs of a full lower-triangular mask: n*(n+1)/2."""
    return seq_len * (seq_len + 1) // 2


@dataclass(frozen=True)
class RingSequence:
    """One sequence's token layout over a ring: ranges_by_position[i] holds
    the (start, end) ranges resident at ring position i."""

    sequence_id: int
    ranges_by_position: tuple[tuple[tuple[int, int], ...], ...]

    def tokens_at(self, position: int) -> int:
        return sum(e - s for s, e in self.ranges_by_position[position])


@dataclass(frozen=True)
class RingGroup:
    """A KV-rotation group: ordered member ranks plus the sequences whose
    chunks travel the ring. Inter-node rings span >= 2 nodes, intra-node
    rings stay within one."""

    kind: str
    members: tuple[int, ...]
    sequences: tuple[RingSequence, ...]

    def __post_init__(self) -> None:
        if self.kind not in (INTER_NODE, INTRA_NODE):
            raise ValueError(f"bad ring kind {self.kind!r}")
        if len(self.members) < 2:
            raise ValueError("a ring needs at least 2 members")
        for seq in self.sequences:
            if len(seq.ranges_by_position) != len(self.members):
                raise ValueError("sequence chunk map does not match ring size")

    @property
    def group_size(self) -> int:
        return len(self.members)

    def kv_tokens(self, position: int) -> int:
        return sum(seq.tokens_at(position) for seq in self.sequences)

    def total_tokens(self) -> int:
        return sum(self.kv_tokens(p) for p in range(self.group_size))


@dataclass(frozen=True)
class RingRound:
    """One member's work in one ring round: pairs computed against the KV set
    currently held, and the tokens of that KV set sent onward to the next
    member when the round completes."""

    position: int
    round_index: int
    compute_pairs: int
    comm_tokens: int


@dataclass(frozen=True)
class RingSchedule:
    ring: RingGroup
    # rounds[position][round_index]
    rounds: tuple[tuple[RingRound, ...], ...]

    @property
    def num_rounds(self) -> int:
        return self.ring.group_size


@dataclass(frozen=True)
class LocalTask:
    rank: int
    sequence_id: int
    compute_pairs: int


@dataclass(frozen=True)
class AttentionSchedule:
    """Per-rank execution queues: inter-node rings first, then intra-node
    rings, then local kernels. Each ring contributes exactly G rounds."""

    inter_rings: tuple[RingSchedule, ...]
    intra_rings: tuple[RingSchedule, ...]
    local_tasks: tuple[LocalTask, ...]

    def rings(self) -> tuple[RingSchedule, ...]:
        return self.inter_rings + self.intra_rings


def _ring_schedule(ring: RingGroup) -> RingSchedule:
    g = ring.group_size
    kv_sizes = [ring.kv_tokens(p) for p in range(g)]
    rounds = []
    for i in range(g):
        per_pos = []
        q_ranges = {seq.sequence_id: seq.ranges_by_position[i] for seq in ring.sequences}
        for r in range(g):
            src = (i - r) % g
            pairs = 0
            for seq in ring.sequences:
                for q_range in q_ranges[seq.sequence_id]:
                    pairs += visible_pairs(q_range, seq.ranges_by_position[src])
            per_pos.append(RingRound(position=i, round_index=r, compute_pairs=pairs, comm_tokens=kv_sizes[src]))
        rounds.append(tuple(per_pos))
    return RingSchedule(ring=ring, rounds=tuple(rounds))


def build_schedule(plan: "PlacementPlan") -> AttentionSchedule:
    """Turn a placement plan into per-rank queues of ring rounds and local
    kernels. KV rotates one position per round (position i sends to i+1 and
    receives from i-1), for G rounds per ring so every position sees every
    KV set and the layout returns home for the backward pass."""
    inter = []
    intra = []
    for ring in plan.ring_groups:
        sched = _ring_schedule(ring)
        if ring.kind == INTER_NODE:
            inter.append(sched)
        else:
            intra.append(sched)
    local = []
    for rank, frags in enumerate(plan.fragments):
        for frag in frags:
            if plan.zone_of.get(frag.sequence_id) == LOCAL or frag.micro_batch > 0:
                local.append(LocalTask(rank=rank, sequence_id=frag.sequence_id,
                                       compute_pairs=causal_pairs(frag.end - frag.start)))
    key = lambda s: s.ring.members
    return AttentionSchedule(
        inter_rings=tuple(sorted(inter, key=key)),
        intra_rings=tuple(sorted(intra, key=key)),
        local_tasks=tuple(sorted(local, key=lambda t: (t.rank, t.sequence_id))),
    )
