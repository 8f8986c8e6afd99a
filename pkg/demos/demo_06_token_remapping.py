"""Rebalancing tokens for the linear modules.

An attention-optimal placement can leave rank token counts skewed, which is
exactly wrong for token-wise linear modules. The remapping layer computes a
transfer matrix to the even layout that minimizes the worst per-sender cost,
applies it before the linear modules, and reverses it afterwards for the
same price.
"""

import numpy as np

from varlenplan import build_plan, cluster_a, preset, sample_batch
from varlenplan.remapping import cost_matrix, matrix_to_csv, solve_remap, target_distribution

cluster, _ = cluster_a()
batch = sample_batch(preset("prolong64k"), 65536, seed=3)
plan = build_plan(batch, cluster)

counts = plan.tokens_per_rank
print("attention-phase token counts per rank:")
print(" ", counts)
target = target_distribution(counts)
print("even target for the linear modules:")
print(" ", target)

result = solve_remap(counts, cost_matrix(cluster))
moved = int(result.matrix.sum())
print(f"\noptimal transfer: {moved} tokens moved, "
      f"worst per-sender cost {result.objective * 1e6:.2f} us")
senders = np.nonzero(result.matrix.sum(axis=1))[0]
for i in senders:
    targets = {j: int(result.matrix[i][j]) for j in np.nonzero(result.matrix[i])[0]}
    print(f"  rank {i} sends {targets}")

print("\nreceiver-side row costs (diagnostic, not part of the objective):")
print(" ", [f"{c * 1e6:.1f}us" for c in result.col_costs if c > 0] or ["none"])

print("\ntransfer matrix CSV dump:")
print(matrix_to_csv(result.matrix))

# a deliberately skewed example on a 2-node, 2-GPU toy cluster: the solver
# drains the surplus over the cheap intra-node arc as far as the even target
# allows before paying for cross-node hops
from varlenplan.topology import ClusterSpec

toy = ClusterSpec(num_nodes=2, gpus_per_node=2, token_capacity=1000,
                  inv_bw_intra=1.0, inv_bw_inter=10.0)
skewed = [300, 0, 0, 0]
res = solve_remap(skewed, cost_matrix(toy))
print(f"skewed 4-rank example {skewed} -> {target_distribution(skewed)}:")
print(matrix_to_csv(res.matrix))
