"""Time-slotted simulation: arrivals, policy stepping, metrics and comparisons.

Randomness is keyed rather than streamed: the arrival vector of slot ``t``
comes from a generator seeded with ``(seed, ARRIVALS, t)``, so adding or
reordering policies never changes the arrivals any of them see.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .model import BipartiteGraph, constraint_violation, sample_channels
from .policies import POLICY_NAMES, LearningRateSchedule, Policy, make_policy
from .reward import RewardModel, UtilityKind, total_reward

# stream ids for keyed generators
ARRIVALS, SCENARIO, UTILITIES, UTILITY_KINDS = 1, 2, 3, 4

DEFAULT_RESOURCES = ("cpu", "mem", "gpu", "npu", "tpu", "fpga")
WARMUP_SLOTS = 50


class InfeasibleAllocationError(RuntimeError):
    """A policy produced an allocation outside the feasible set."""


@dataclass(frozen=True)
class SimConfig:
    T: int = 2000
    arrival_prob: float = 0.7
    contention_level: float = 10.0
    alpha_range: tuple[float, float] = (1.0, 1.5)
    beta_range: tuple[float, float] = (0.3, 0.5)
    eta0: float = 25.0
    decay: float = 0.9999
    lr_mode: str = "geometric"
    seed: int = 0
    utility_kind: str = "mixed"            # or one kind for every (instance, resource)
    utility_kinds: tuple[str, ...] = ()     # optional per-resource override
    arrivals_mode: str = "bernoulli"
    trace_dir: str = ""
    policies: tuple[str, ...] = POLICY_NAMES
    n_ports: int = 10
    n_instances: int = 128
    resources: tuple[str, ...] = DEFAULT_RESOURCES
    capacity_range: tuple[float, float] = (100.0, 1000.0)
    requirement_range: tuple[float, float] = (5.0, 50.0)   # before the contention multiplier
    graph_density: float = 0.0               # 0 means complete bipartite
    max_arrivals: int = 1

    def __post_init__(self):
        for name in ("alpha_range", "beta_range", "capacity_range", "requirement_range"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2 or value[0] > value[1]:
                raise ValueError(f"{name} must be an increasing pair, got {value}")
            object.__setattr__(self, name, value)
        for name in ("policies", "resources", "utility_kinds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if int(self.T) < 1:
            raise ValueError("T must be at least 1")
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError("arrival_prob must lie in [0, 1]")
        if not self.contention_level > 0:
            raise ValueError("contention_level must be positive")
        lo, hi = self.beta_range
        if lo < 0 or hi > 1:
            raise ValueError("beta_range must lie inside [0, 1]")
        if self.alpha_range[0] <= 0:
            raise ValueError("alpha_range must be positive")
        if self.capacity_range[0] < 0 or self.requirement_range[0] < 0:
            raise ValueError("capacity and requirement ranges must be non-negative")
        if self.arrivals_mode not in ("bernoulli", "trace"):
            raise ValueError(f"arrivals_mode must be 'bernoulli' or 'trace', got {self.arrivals_mode!r}")
        if self.arrivals_mode == "trace" and not self.trace_dir:
            raise ValueError("trace mode needs trace_dir")
        if self.utility_kind != "mixed":
            UtilityKind.parse(self.utility_kind)
        for kind in self.utility_kinds:
            UtilityKind.parse(kind)
        if self.utility_kinds and len(self.utility_kinds) != len(self.resources):
            raise ValueError("utility_kinds needs one entry per resource")
        for name in self.policies:
            if name not in POLICY_NAMES and name != "idle":
                raise ValueError(f"unknown policy {name!r}")
        if self.n_ports < 1 or self.n_instances < 1 or not self.resources:
            raise ValueError("scenario needs at least one port, instance and resource")
        if self.graph_density and not 1 <= self.graph_density <= self.n_ports:
            raise ValueError("graph_density must be 0 (complete) or lie in [1, n_ports]")
        if self.max_arrivals < 1:
            raise ValueError("max_arrivals must be at least 1")
        LearningRateSchedule(self.eta0, self.decay, self.lr_mode)

    @property
    def schedule(self) -> LearningRateSchedule:
        return LearningRateSchedule(self.eta0, self.decay, self.lr_mode)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def keys(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def keyed_rng(seed: int, stream: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream), *map(int, key)])


# -- scenarios -------------------------------------------------------------------

def synthesize_scenario(config: SimConfig) -> tuple[BipartiteGraph, RewardModel]:
    """Random cluster drawn from the configured ranges.

    Requirements are scaled by the contention level here, before anything
    downstream sees them.  Utility coefficients use their own stream, so
    changing the utility kind keeps every ``alpha`` unchanged.
    """
    rng = keyed_rng(config.seed, SCENARIO)
    L, R, K = config.n_ports, config.n_instances, len(config.resources)
    capacities = rng.uniform(*config.capacity_range, size=(R, K))
    requirements = rng.uniform(*config.requirement_range, size=(L, K))
    channels = None
    if config.graph_density:
        channels = sample_channels(L, R, config.graph_density, rng)
    graph = BipartiteGraph.from_arrays(requirements, capacities, channels, config.resources)
    graph = graph.scaled_requirements(config.contention_level).check()
    return graph, synthesize_rewards(config, R)


def synthesize_rewards(config: SimConfig, n_instances: int) -> RewardModel:
    rng = keyed_rng(config.seed, UTILITIES)
    K = len(config.resources)
    alphas = rng.uniform(*config.alpha_range, size=(n_instances, K))
    betas = rng.uniform(*config.beta_range, size=K)
    if config.utility_kinds:
        row = [int(UtilityKind.parse(k)) for k in config.utility_kinds]
        kinds = np.tile(row, (n_instances, 1))
    elif config.utility_kind == "mixed":
        kinds = keyed_rng(config.seed, UTILITY_KINDS).integers(0, len(UtilityKind), size=(n_instances, K))
    else:
        kinds = np.full((n_instances, K), int(UtilityKind.parse(config.utility_kind)))
    return RewardModel(kinds, alphas, betas)


# -- arrivals ----------------------------------------------------------------------

def generate_arrivals(config: SimConfig, graph: BipartiteGraph, t: int, table: np.ndarray | None = None) -> np.ndarray:
    """Arrival counts of slot ``t`` (1-based).

    Bernoulli mode draws each port independently with probability
    ``arrival_prob`` from a generator keyed on ``(seed, t)``.  Trace mode
    reads row ``t - 1`` of ``table``.
    """
    if config.arrivals_mode == "trace":
        if table is None:
            raise ValueError("trace mode needs an arrival table")
        if t > len(table):
            raise IndexError(f"trace holds {len(table)} slots, slot {t} requested")
        return np.asarray(table[t - 1], dtype=float)
    rng = keyed_rng(config.seed, ARRIVALS, t)
    return (rng.random(graph.n_ports) < config.arrival_prob).astype(float)


def arrival_trajectory(config: SimConfig, graph: BipartiteGraph, table: np.ndarray | None = None) -> np.ndarray:
    return np.stack([generate_arrivals(config, graph, t, table) for t in range(1, config.T + 1)])


# -- metrics -----------------------------------------------------------------------

@dataclass
class MetricsLog:
    policy: str
    reward: np.ndarray
    gain: np.ndarray
    penalty: np.ndarray
    wall_time: float = 0.0
    final_allocation: np.ndarray | None = field(default=None, repr=False)
    max_violation: float = 0.0

    @property
    def T(self) -> int:
        return len(self.reward)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.reward)

    @property
    def average(self) -> np.ndarray:
        return self.cumulative / np.arange(1, self.T + 1)

    def rows(self):
        """``(t, policy, reward, gain, penalty, cumulative, average)`` per slot."""
        cum, avg = self.cumulative, self.average
        for t in range(self.T):
            yield (t + 1, self.policy, self.reward[t], self.gain[t], self.penalty[t], cum[t], avg[t])

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "slots": self.T,
            "cumulative_reward": float(self.cumulative[-1]) if self.T else 0.0,
            "average_reward": float(self.average[-1]) if self.T else 0.0,
            "total_gain": float(self.gain.sum()),
            "total_penalty": float(self.penalty.sum()),
            "max_violation": self.max_violation,
            "wall_time": self.wall_time,
        }


def run_simulation(config: SimConfig, graph: BipartiteGraph, model: RewardModel, policy: Policy | str,
                   arrivals: np.ndarray | None = None, audit_tol: float = 1e-9) -> MetricsLog:
    """Step one policy through ``config.T`` slots.

    ``arrivals`` may hold a precomputed ``(T, L)`` trajectory; otherwise it
    is generated from the config.  Every allocation is audited against the
    feasible set and an infeasible one aborts the run.
    """
    if isinstance(policy, str):
        policy = make_policy(policy, graph, model, config.schedule, config.T)
    if arrivals is None:
        arrivals = arrival_trajectory(config, graph)
    arrivals = np.asarray(arrivals, dtype=float)
    if arrivals.shape[0] < config.T:
        raise ValueError(f"trajectory holds {arrivals.shape[0]} slots, config asks for {config.T}")
    T = config.T
    reward, gain, penalty = np.zeros(T), np.zeros(T), np.zeros(T)
    worst = 0.0
    start = time.perf_counter()
    y = graph.zeros()
    for t in range(T):
        x = arrivals[t]
        y = policy.allocate(x)
        v = constraint_violation(graph, y)
        if v > audit_tol:
            raise InfeasibleAllocationError(f"{policy.name} violated constraints by {v:.3g} at slot {t + 1}")
        worst = max(worst, v)
        reward[t], gain[t], penalty[t] = total_reward(model, graph, x, y)
        policy.observe(x)
    elapsed = time.perf_counter() - start
    return MetricsLog(policy.name, reward, gain, penalty, elapsed, np.array(y), worst)


@dataclass
class Comparison:
    reference: str
    logs: dict[str, MetricsLog]
    ratios: dict[str, np.ndarray]      # reference cumulative / other cumulative, per slot
    undefined: dict[str, np.ndarray]   # slots where the other cumulative is zero
    warmup: np.ndarray                 # slots before the ratios settle

    def final_ratios(self) -> dict[str, float | None]:
        out = {}
        for name, r in self.ratios.items():
            out[name] = None if self.undefined[name][-1] else float(r[-1])
        return out

    def summary(self) -> dict:
        return {
            "reference": self.reference,
            "policies": {name: log.summary() for name, log in self.logs.items()},
            "final_ratios": self.final_ratios(),
        }


def compare_policies(config: SimConfig, graph: BipartiteGraph, model: RewardModel, policies=None,
                     arrivals: np.ndarray | None = None) -> Comparison:
    """Run several policies on one shared arrival trajectory.

    The first policy is the reference; ratios are its average reward over
    each other policy's (equivalently, the cumulative ratio).
    """
    names = list(policies or config.policies)
    if len(names) < 2:
        raise ValueError("a comparison needs at least two policies")
    if arrivals is None:
        arrivals = arrival_trajectory(config, graph)
    logs: dict[str, MetricsLog] = {}
    for i, name in enumerate(names):
        key = name if name not in logs else f"{name}#{i}"
        logs[key] = run_simulation(config, graph, model, name, arrivals)
    ref_key = next(iter(logs))
    ref = logs[ref_key].cumulative
    ratios, undefined = {}, {}
    for key, log in logs.items():
        if key == ref_key:
            continue
        other = log.cumulative
        zero = other == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[key] = np.where(zero, np.nan, ref / np.where(zero, 1.0, other))
        undefined[key] = zero
    warmup = np.arange(1, config.T + 1) < WARMUP_SLOTS
    return Comparison(ref_key, logs, ratios, undefined, warmup)
