"""Default synthetic cluster, all five policies on one arrival trajectory."""
import sys

from ogasched import SimConfig, compare_policies, synthesize_scenario

T = int(sys.argv[1]) if len(sys.argv) > 1 else 500
config = SimConfig(T=T)
graph, model = synthesize_scenario(config)
comp = compare_policies(config, graph, model)

for name, log in comp.logs.items():
    print(f"{name:>11}  average reward {log.average[-1]:12.1f}  penalty share "
          f"{log.penalty.sum() / max(log.gain.sum(), 1e-12):.3f}")
for name, ratio in comp.final_ratios().items():
    print(f"oga / {name}: {ratio:.3f}" if ratio is not None else f"oga / {name}: undefined")
