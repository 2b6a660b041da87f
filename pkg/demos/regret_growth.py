"""Empirical regret of OGA against the hindsight optimum, next to the analytic bound."""
import warnings

import numpy as np

from ogasched import SimConfig, arrival_trajectory, run_simulation, synthesize_scenario
from ogasched.regret import RegretBoundInputs, empirical_regret, offline_optimum, regret_upper_bound

warnings.simplefilter("ignore", RuntimeWarning)
print(f"{'T':>5} {'regret':>10} {'regret/T':>9} {'bound':>10}")
for T in (250, 500, 1000, 2000):
    config = SimConfig(T=T, n_ports=4, n_instances=6, resources=("cpu", "mem"), lr_mode="theoretical")
    graph, model = synthesize_scenario(config)
    X = arrival_trajectory(config, graph)
    log = run_simulation(config, graph, model, "oga", X)
    r = empirical_regret(X, log.reward, offline_optimum(X, model, graph).Q)
    b = regret_upper_bound(RegretBoundInputs.from_problem(graph, model, T)).bound
    print(f"{T:5d} {r:10.1f} {r / T:9.3f} {b:10.1f}")
