"""Where do the three placement zones come from?

Per-device attention compute grows quadratically with sequence length while
ring communication grows linearly, so short sequences cannot hide any
transfer time and very long ones can hide even cross-node transfers. This
script prints the cost curves and the analytic crossing points for the
bundled cluster preset.
"""

from varlenplan import cluster_a, direct_transfer_time, zone_boundaries

cluster, coeffs = cluster_a()

print("cluster preset 'cluster_a':")
print(f"  {cluster.num_nodes} nodes x {cluster.gpus_per_node} GPUs, "
      f"{cluster.nics_per_node} NICs/node, capacity {cluster.token_capacity} tokens/GPU")
print(f"  intra-node: {cluster.inv_bw_intra:.3e} s/token   "
      f"inter-node path: {cluster.inv_bw_inter:.3e} s/token "
      f"({cluster.inv_bw_inter / cluster.inv_bw_intra:.0f}x slower)")

s_local, s_intra = zone_boundaries(cluster, coeffs)
print(f"\nanalytic zone boundaries (advisory):")
print(f"  local zone      s < {s_local:>10.0f} tokens  (compute alone beats intra-node transfer)")
print(f"  intra-node zone s < {s_intra:>10.0f} tokens  (compute hides intra, not inter)")
print(f"  inter-node zone otherwise")

print(f"\n{'seq len':>9} | {'compute/dev':>12} | {'intra xfer':>12} | {'inter xfer':>12}")
for s in (512, 2048, 8192, 32768, 131072):
    compute = coeffs.attn_quadratic * s * s / cluster.gpus_per_node
    intra = direct_transfer_time(cluster, s, "intra")
    inter = direct_transfer_time(cluster, s, "inter")
    print(f"{s:>9} | {compute:>11.2e}s | {intra:>11.2e}s | {inter:>11.2e}s")

print("\nthe partitioner derives its operative thresholds from capacity")
print("iteration; these curves only explain why the hierarchy exists.")
