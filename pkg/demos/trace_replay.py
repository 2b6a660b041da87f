"""Write a synthetic cluster as a CSV trace, load it back and replay it."""
import tempfile
from pathlib import Path

from ogasched import SimConfig, arrival_trajectory, synthesize_scenario
from ogasched.io import load_scenario, load_trace, write_trace
from ogasched.simulator import run_simulation

config = SimConfig(T=200, n_ports=4, n_instances=12, resources=("cpu", "mem", "gpu"), graph_density=2.0)
graph, model = synthesize_scenario(config)
X = arrival_trajectory(config, graph)

with tempfile.TemporaryDirectory() as tmp:
    root = write_trace(Path(tmp) / "trace", graph, X, contention_level=config.contention_level)
    print("files:", sorted(p.name for p in root.iterdir()))
    bundle = load_trace(root)
    print(f"{len(bundle.port_ids)} ports, {len(bundle.machine_ids)} machines, {bundle.n_slots} slots, "
          f"{len(bundle.arrivals)} arrival rows")
    replay = load_scenario(config.replace(arrivals_mode="trace", trace_dir=str(root)))
    direct = run_simulation(config, graph, model, "oga", X)
    traced = run_simulation(config, replay.graph, replay.model, "oga", replay.arrivals)
    print("direct average", round(direct.average[-1], 3), "replayed average", round(traced.average[-1], 3))
