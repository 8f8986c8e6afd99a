"""Head-to-head cost comparison of the four planning strategies.

For each dataset preset, a 64k-token batch is planned with the hierarchical
strategy and the three reference strategies, then simulated on the same
cluster model. The table mirrors the CSV emitted by the compare command.
"""

from varlenplan import cluster_a, compare, preset, sample_batch
from varlenplan.baselines import STRATEGIES
from varlenplan.workload import PRESET_NAMES

cluster, coeffs = cluster_a()

for name in PRESET_NAMES:
    batch = sample_batch(preset(name), 65536, seed=7)
    reports = compare(batch, cluster, coeffs, list(STRATEGIES))
    print(f"\n{name} (seed 7, {len(batch)} sequences, {batch.total_tokens} tokens):")
    print(f"{'strategy':<10} | {'attention':>10} | {'remap':>8} | {'linear':>8} | "
          f"{'step':>10} | {'speedup':>7} | {'inter tok':>10}")
    for r in reports:
        print(f"{r.strategy:<10} | {r.attention_makespan * 1e3:>7.2f} ms | "
              f"{r.remap_total * 1e3:>5.2f} ms | {r.linear_time * 1e3:>5.2f} ms | "
              f"{r.total_step * 1e3:>7.2f} ms | {r.speedup_vs_te_cp:>6.2f}x | "
              f"{r.inter_comm_tokens:>10}")

print("\naveraged speedup over 40 seeds per preset:")
for name in PRESET_NAMES:
    total = 0.0
    for seed in range(40):
        batch = sample_batch(preset(name), 65536, seed=seed)
        reports = compare(batch, cluster, coeffs, ["zeppelin"])
        total += reports[0].speedup_vs_te_cp
    print(f"  {name:<12} {total / 40:.2f}x vs the even-split baseline")
