"""Per-slot reward: parallel-computation gain minus dominant communication overhead.

For port ``l`` with arrival count ``x_l``::

    q_l = x_l * ( sum_k sum_{r in R_l} f_r^k(y_lrk)  -  max_k beta_k * sum_{r in R_l} y_lrk )

with instance-separable concave utilities ``f_r^k`` drawn from four
zero-startup families.  All evaluations are vectorised over the
``(n_channels, K)`` allocation layout of :mod:`ogasched.model`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .model import BipartiteGraph, PortSpec


class UtilityKind(enum.IntEnum):
    LINEAR = 0
    LOG = 1
    RECIPROCAL = 2
    POLY = 3

    @classmethod
    def parse(cls, value) -> "UtilityKind":
        if isinstance(value, UtilityKind):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown utility kind {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class UtilitySpec:
    kind: UtilityKind
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "kind", UtilityKind.parse(self.kind))
        if not self.alpha > 0:
            raise ValueError(f"utility coefficient must be positive, got {self.alpha}")

    def value(self, y):
        return utility_value(self, y)

    def grad(self, y):
        return utility_grad(self, y)

    @property
    def grad_at_zero(self) -> float:
        """Slope at the origin, the per-utility bound used by the regret analysis."""
        return float(utility_grad(self, 0.0))


def _check_nonneg(y):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("utilities are defined on y >= 0")
    return y


def _values(kind, alpha, y):
    # kind, alpha and y broadcast together; kind is an int array of UtilityKind codes
    kind = np.broadcast_to(kind, np.broadcast_shapes(np.shape(kind), np.shape(alpha), np.shape(y)))
    out = alpha * y
    m = kind == UtilityKind.LOG
    if m.any():
        out = np.where(m, alpha * np.log1p(y), out)
    m = kind == UtilityKind.RECIPROCAL
    if m.any():
        out = np.where(m, 1.0 / alpha - 1.0 / (y + alpha), out)
    m = kind == UtilityKind.POLY
    if m.any():
        out = np.where(m, alpha * (np.sqrt(y + 1.0) - 1.0), out)
    return out


def _grads(kind, alpha, y):
    kind = np.broadcast_to(kind, np.broadcast_shapes(np.shape(kind), np.shape(alpha), np.shape(y)))
    out = np.broadcast_to(alpha, kind.shape).astype(float)
    m = kind == UtilityKind.LOG
    if m.any():
        out = np.where(m, alpha / (y + 1.0), out)
    m = kind == UtilityKind.RECIPROCAL
    if m.any():
        out = np.where(m, 1.0 / (y + alpha) ** 2, out)
    m = kind == UtilityKind.POLY
    if m.any():
        out = np.where(m, alpha / (2.0 * np.sqrt(y + 1.0)), out)
    return out


def utility_value(spec: UtilitySpec, y):
    y = _check_nonneg(y)
    out = _values(int(spec.kind), spec.alpha, y)
    return float(out) if out.ndim == 0 else out


def utility_grad(spec: UtilitySpec, y):
    y = _check_nonneg(y)
    out = _grads(int(spec.kind), spec.alpha, y)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Utilities ``f_r^k`` (one per instance and resource) and penalty weights ``beta``."""

    kinds: np.ndarray   # (R, K) int codes
    alphas: np.ndarray  # (R, K)
    betas: np.ndarray   # (K,)

    def __post_init__(self):
        kinds = np.asarray(self.kinds, dtype=np.int64)
        alphas = np.asarray(self.alphas, dtype=float)
        betas = np.asarray(self.betas, dtype=float).ravel()
        if kinds.shape != alphas.shape or kinds.ndim != 2:
            raise ValueError("kinds and alphas must both be (R, K)")
        if alphas.shape[1] != betas.shape[0]:
            raise ValueError("beta length must equal the number of resource types")
        if np.any(alphas <= 0):
            raise ValueError("utility coefficients must be positive")
        if np.any((betas < 0) | (betas > 1)):
            raise ValueError("beta_k must lie in [0, 1]")
        valid = set(int(k) for k in UtilityKind)
        if not set(np.unique(kinds).tolist()) <= valid:
            raise ValueError("unknown utility kind code")
        for arr in (kinds, alphas, betas):
            arr.setflags(write=False)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)

    @classmethod
    def uniform(cls, n_instances: int, betas, kind="linear", alpha=1.0) -> "RewardModel":
        K = len(betas)
        return cls(
            np.full((n_instances, K), int(UtilityKind.parse(kind))),
            np.broadcast_to(np.asarray(alpha, dtype=float), (n_instances, K)).copy(),
            betas,
        )

    @classmethod
    def from_specs(cls, utilities: Mapping[tuple[int, int], UtilitySpec], n_instances: int, betas) -> "RewardModel":
        K = len(betas)
        kinds = np.zeros((n_instances, K), dtype=np.int64)
        alphas = np.zeros((n_instances, K))
        for r in range(n_instances):
            for k in range(K):
                spec = utilities[(r, k)]
                kinds[r, k] = int(spec.kind)
                alphas[r, k] = spec.alpha
        return cls(kinds, alphas, betas)

    @property
    def K(self) -> int:
        return len(self.betas)

    def utility(self, r: int, k: int) -> UtilitySpec:
        return UtilitySpec(UtilityKind(int(self.kinds[r, k])), float(self.alphas[r, k]))

    def grad_at_zero(self) -> np.ndarray:
        """``(R, K)`` slopes of every utility at the origin."""
        return _grads(self.kinds, self.alphas, np.zeros(self.alphas.shape))

    def with_kind(self, kind) -> "RewardModel":
        return RewardModel(np.full_like(self.kinds, int(UtilityKind.parse(kind))), self.alphas, self.betas)

    def with_betas(self, betas) -> "RewardModel":
        return RewardModel(self.kinds, self.alphas, betas)

    def check_graph(self, graph: BipartiteGraph) -> None:
        if self.kinds.shape != (graph.n_instances, graph.K):
            raise ValueError(
                f"reward model covers {self.kinds.shape} (instance, resource) pairs, graph has "
                f"{(graph.n_instances, graph.K)}"
            )


class RewardBreakdown(NamedTuple):
    reward: float
    gain: float
    penalty: float


def _channel_utilities(model: RewardModel, graph: BipartiteGraph):
    inst = graph.channel_instances
    return model.kinds[inst], model.alphas[inst]


def channel_gains(model: RewardModel, graph: BipartiteGraph, y: np.ndarray) -> np.ndarray:
    """``f_r^k(y_lrk)`` for every channel and resource."""
    kinds, alphas = _channel_utilities(model, graph)
    return _values(kinds, alphas, np.maximum(y, 0.0))


def port_sums(graph: BipartiteGraph, y: np.ndarray) -> np.ndarray:
    """``(L, K)`` totals ``sum_{r in R_l} y_lrk``."""
    return np.asarray(graph.port_incidence @ y)


def dominant_overhead_indices(model: RewardModel, graph: BipartiteGraph, y: np.ndarray) -> np.ndarray:
    """``k*`` for every port at once; ties resolve to the smallest index."""
    weighted = port_sums(graph, y) * model.betas
    return np.argmax(weighted, axis=1)


def dominant_overhead_index(model: RewardModel, graph: BipartiteGraph, y: np.ndarray, l: int) -> int:
    if len(graph.port_channels[l]) == 0:
        raise ValueError(f"port {l} has no channels")
    sums = y[graph.port_channels[l]].sum(axis=0)
    return int(np.argmax(model.betas * sums))


def port_breakdown(model: RewardModel, graph: BipartiteGraph, y: np.ndarray):
    """Per-port unweighted gain and penalty arrays (each of length ``L``)."""
    gains = np.asarray(graph.port_incidence @ channel_gains(model, graph, y)).sum(axis=1)
    penalties = (port_sums(graph, y) * model.betas).max(axis=1, initial=0.0)
    return gains, penalties


def port_reward(model: RewardModel, graph: BipartiteGraph, x_l: float, y: np.ndarray, l: int) -> float:
    if x_l == 0:
        return 0.0
    rows = graph.port_channels[l]
    inst = graph.channel_instances[rows]
    yl = y[rows]
    gain = _values(model.kinds[inst], model.alphas[inst], yl).sum()
    penalty = np.max(model.betas * yl.sum(axis=0))
    return float(x_l * (gain - penalty))


def total_reward(model: RewardModel, graph: BipartiteGraph, x, y: np.ndarray) -> RewardBreakdown:
    """Aggregate reward over ports, with its gain / penalty decomposition."""
    x = np.asarray(x, dtype=float)
    gains, penalties = port_breakdown(model, graph, y)
    gain = float(x @ gains)
    penalty = float(x @ penalties)
    return RewardBreakdown(gain - penalty, gain, penalty)


def reward_gradient(model: RewardModel, graph: BipartiteGraph, x, y: np.ndarray) -> np.ndarray:
    """Gradient of the slot reward w.r.t. every allocation coordinate.

    At an argmax tie the smallest resource index is charged the penalty,
    which picks one valid supergradient.
    """
    x = np.asarray(x, dtype=float)
    kinds, alphas = _channel_utilities(model, graph)
    grad = _grads(kinds, alphas, np.maximum(y, 0.0))
    kstar = dominant_overhead_indices(model, graph, y)[graph.channel_ports]
    grad[np.arange(len(grad)), kstar] -= model.betas[kstar]
    return grad * x[graph.channel_ports][:, None]


# -- multiple arrivals per port -------------------------------------------------

def port_reward_multi(model: RewardModel, graph: BipartiteGraph, x_l: int, y_multi, l: int) -> float:
    """Reward of port ``l`` when up to ``J_l = len(y_multi)`` jobs arrive at once.

    ``y_multi[j]`` is the full ``(n_channels, K)`` allocation for replica
    ``j``; only rows of port ``l`` are read.  Replica ``j`` (0-based) counts
    iff ``j < x_l``.
    """
    J = len(y_multi)
    if x_l > J:
        raise ValueError(f"{x_l} arrivals exceed the replica budget J_l={J}")
    if x_l < 0:
        raise ValueError("arrival counts must be non-negative")
    return sum(port_reward(model, graph, 1, np.asarray(y_multi[j]), l) for j in range(int(x_l)))


@dataclass(frozen=True, eq=False)
class ReplicatedGraph:
    """Base-model view of a multi-arrival problem.

    Each port ``l`` becomes ``J_l`` virtual ports that share its
    requirements and neighborhood; replica ``j`` of port ``l`` arrives iff
    ``j < x_l``.  The expanded problem is a plain instance of the single
    arrival model, so every policy runs on it unchanged.
    """

    base: BipartiteGraph
    graph: BipartiteGraph
    replicas: np.ndarray   # J_l per base port
    origin: np.ndarray     # base port of each virtual port
    rank: np.ndarray       # replica index of each virtual port

    def arrivals(self, counts) -> np.ndarray:
        counts = np.asarray(counts)
        if np.any(counts > self.replicas):
            raise ValueError("arrival count exceeds the configured replica budget")
        return (self.rank < counts[self.origin]).astype(float)


def replicate_ports(graph: BipartiteGraph, replicas) -> ReplicatedGraph:
    J = np.broadcast_to(np.asarray(replicas, dtype=np.int64), (graph.n_ports,)).copy()
    if np.any(J < 1):
        raise ValueError("every port needs at least one replica")
    origin = np.repeat(np.arange(graph.n_ports), J)
    rank = np.concatenate([np.arange(j) for j in J])
    ports = tuple(PortSpec((graph.ports[o].id, int(j)), graph.ports[o].requirements) for o, j in zip(origin, rank))
    channels = [(v, r) for v, o in enumerate(origin) for r in graph.port_neighbors[o]]
    expanded = BipartiteGraph(graph.catalog, ports, graph.instances, np.asarray(channels, dtype=np.int64).reshape(-1, 2))
    return ReplicatedGraph(graph, expanded, J, origin, rank)
