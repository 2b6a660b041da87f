"""Scheduling policies: online gradient ascent and four baselines.

Every policy follows the same two-call protocol per slot::

    y = policy.allocate(x)   # decision used for this slot's reward
    policy.observe(x)        # feedback once the slot is over

Baselines look at ``x`` and allocate fresh every slot.  OGA commits to
its current allocation before the arrivals are revealed (``allocate``
ignores ``x``) and learns from them in ``observe``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import BipartiteGraph
from .projection import project
from .reward import RewardModel, reward_gradient

GRAD_FLOOR = 1e-12


@dataclass(frozen=True)
class LearningRateSchedule:
    """Step sizes for OGA.

    ``geometric`` multiplies the rate by ``decay`` after every slot.
    ``theoretical`` sets ``eta_t = diam / (||grad_t|| * sqrt(T))`` each slot.
    """

    eta0: float = 25.0
    decay: float = 0.9999
    mode: str = "geometric"

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("initial learning rate must be positive")
        if not self.decay > 0:
            raise ValueError("decay must be positive")
        if self.mode not in ("geometric", "theoretical"):
            raise ValueError(f"unknown learning-rate mode {self.mode!r}")


@dataclass
class PolicyState:
    current: np.ndarray
    eta: float
    step_count: int = 0


def next_learning_rate(schedule: LearningRateSchedule, state: PolicyState, grad_norm: float = 0.0,
                       T: int = 1, diam: float = 1.0) -> float:
    if schedule.mode == "geometric":
        return schedule.decay * state.eta
    return diam / (max(grad_norm, GRAD_FLOOR) * math.sqrt(T))


def oga_step(state: PolicyState, model: RewardModel, graph: BipartiteGraph, x, schedule: LearningRateSchedule,
             T: int = 1, diam: float = 1.0) -> np.ndarray:
    """One projected gradient-ascent update; mutates ``state`` and returns ``y(t+1)``."""
    grad = reward_gradient(model, graph, x, state.current)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite reward gradient")
    if schedule.mode == "theoretical":
        state.eta = next_learning_rate(schedule, state, float(np.linalg.norm(grad)), T, diam)
        eta = state.eta
    else:
        eta = state.eta
        state.eta = next_learning_rate(schedule, state)
    if np.any(grad):
        state.current = project(graph, state.current + eta * grad)
    state.step_count += 1
    return state.current


class Policy:
    name = "policy"

    def __init__(self, graph: BipartiteGraph, model: RewardModel):
        model.check_graph(graph)
        self.graph = graph
        self.model = model

    def allocate(self, x) -> np.ndarray:
        raise NotImplementedError

    def observe(self, x) -> None:
        pass


class OGAPolicy(Policy):
    name = "oga"

    def __init__(self, graph, model, schedule: LearningRateSchedule | None = None, horizon: int = 1,
                 initial: np.ndarray | None = None):
        super().__init__(graph, model)
        from .regret import diameter_bound

        self.schedule = schedule or LearningRateSchedule()
        self.horizon = int(horizon)
        self.diam = diameter_bound(graph)
        y0 = graph.zeros() if initial is None else np.array(initial, dtype=float)
        self.state = PolicyState(y0, self.schedule.eta0)

    def allocate(self, x) -> np.ndarray:
        return self.state.current

    def observe(self, x) -> None:
        oga_step(self.state, self.model, self.graph, x, self.schedule, self.horizon, self.diam)


class IdlePolicy(Policy):
    """Allocates nothing; a reference point for ratios."""

    name = "idle"

    def allocate(self, x) -> np.ndarray:
        return self.graph.zeros()


def _greedy_fill(need: np.ndarray, remaining: np.ndarray) -> np.ndarray:
    """Take ``need`` (K,) from ``remaining`` (n, K) in row order, each resource independently."""
    cum = np.cumsum(remaining, axis=0) - remaining     # capacity consumed before each row
    return np.clip(need - cum, 0.0, remaining)


def dominant_shares(graph: BipartiteGraph) -> np.ndarray:
    """``s_l = max_k a_l^k / sum_{r in R_l} c_r^k`` (``inf`` where a port needs a resource it cannot reach)."""
    reach = np.asarray(graph.port_incidence @ graph.capacities[graph.channel_instances])
    a = graph.requirements
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(a > 0, a / reach, 0.0)
    return ratio.max(axis=1)


def drf_allocate(model: RewardModel, graph: BipartiteGraph, x) -> np.ndarray:
    x = np.asarray(x)
    y = graph.zeros()
    remaining = np.array(graph.capacities, dtype=float)
    a = graph.requirements
    shares = dominant_shares(graph)
    arrived = np.flatnonzero(x > 0)
    # ascending share, ties by port index
    for l in arrived[np.argsort(shares[arrived], kind="stable")]:
        rows = graph.port_channels[l]
        inst = graph.channel_instances[rows]
        with np.errstate(divide="ignore", invalid="ignore"):
            kdom = int(np.argmax(np.where(a[l] > 0, a[l] / graph.capacities[inst].sum(axis=0), 0.0)))
        order = np.argsort(-remaining[inst, kdom], kind="stable")
        take = _greedy_fill(a[l], remaining[inst[order]])
        y[rows[order]] = take
        remaining[inst[order]] -= take
    return y


def fairness_allocate(model: RewardModel, graph: BipartiteGraph, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    on = (x > 0).astype(float)[graph.channel_ports][:, None]
    caps = graph.channel_caps
    demand = np.asarray(graph.instance_incidence @ (caps * on))   # (R, K) arrived requirement mass
    inst = graph.channel_instances
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(demand[inst] > 0, graph.capacities[inst] * caps / demand[inst], 0.0)
    return on * np.minimum(caps, share)


def _utilization(allocated: np.ndarray, capacities: np.ndarray) -> np.ndarray:
    has = capacities > 0
    frac = np.divide(allocated, capacities, out=np.zeros_like(allocated), where=has)
    counts = has.sum(axis=1)
    return np.divide(frac.sum(axis=1), counts, out=np.zeros(len(counts)), where=counts > 0)


def _packing_allocate(graph: BipartiteGraph, x, most_allocated: bool) -> np.ndarray:
    x = np.asarray(x)
    y = graph.zeros()
    caps = graph.capacities
    allocated = np.zeros_like(caps)
    a = graph.requirements
    for l in np.flatnonzero(x > 0):
        rows = graph.port_channels[l]
        inst = graph.channel_instances[rows]
        score = _utilization(allocated[inst], caps[inst])
        # stable sort keeps instance-id order among equal scores
        order = np.argsort(-score if most_allocated else score, kind="stable")
        take = _greedy_fill(a[l], caps[inst[order]] - allocated[inst[order]])
        y[rows[order]] = take
        allocated[inst[order]] += take
    return y


def binpacking_allocate(model: RewardModel, graph: BipartiteGraph, x) -> np.ndarray:
    """Most-allocated first: fill the busiest instances."""
    return _packing_allocate(graph, x, most_allocated=True)


def spreading_allocate(model: RewardModel, graph: BipartiteGraph, x) -> np.ndarray:
    """Least-allocated first: fill the emptiest instances."""
    return _packing_allocate(graph, x, most_allocated=False)


class BaselinePolicy(Policy):
    def __init__(self, graph, model, rule, name):
        super().__init__(graph, model)
        self.rule = rule
        self.name = name

    def allocate(self, x) -> np.ndarray:
        return self.rule(self.model, self.graph, x)


BASELINES = {
    "drf": drf_allocate,
    "fairness": fairness_allocate,
    "binpacking": binpacking_allocate,
    "spreading": spreading_allocate,
}
POLICY_NAMES = ("oga", *BASELINES)


def make_policy(name: str, graph: BipartiteGraph, model: RewardModel, schedule: LearningRateSchedule | None = None,
                horizon: int = 1) -> Policy:
    name = name.strip().lower()
    if name == "oga":
        return OGAPolicy(graph, model, schedule, horizon)
    if name == "idle":
        return IdlePolicy(graph, model)
    if name in BASELINES:
        return BaselinePolicy(graph, model, BASELINES[name], name)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
