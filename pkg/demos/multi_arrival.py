"""Ports that emit up to J jobs per slot, handled by replicating each port J times."""
import numpy as np

from ogasched import SimConfig, synthesize_scenario
from ogasched.reward import replicate_ports, total_reward

config = SimConfig(n_ports=3, n_instances=4, resources=("cpu", "mem"))
graph, model = synthesize_scenario(config)
rep = replicate_ports(graph, 3)
print("base ports", graph.n_ports, "replicated ports", rep.graph.n_ports)

y = np.full(rep.graph.shape, 1.0)
for counts in ([0, 0, 0], [1, 0, 2], [3, 3, 3]):
    x = rep.arrivals(np.array(counts))
    print(counts, "->", x.astype(int), "reward", round(total_reward(model, rep.graph, x, y).reward, 2))
