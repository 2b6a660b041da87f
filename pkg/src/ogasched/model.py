"""Bipartite job-type / instance graph and the feasible allocation set.

Ports (job types) and instances are addressed by their position in the
graph's ``ports`` / ``instances`` sequences; the ``id`` on each spec is a
free-form label carried through trace files.  An allocation is a dense
``(n_channels, K)`` float array whose row ``e`` belongs to channel
``graph.channels[e] = (l, r)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np
from scipy import sparse


class GraphValidationError(ValueError):
    """Raised when a graph is used for computation but fails validation."""


@dataclass(frozen=True)
class ResourceCatalog:
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 1:
            raise ValueError("resource catalog needs at least one resource type")
        if any(not isinstance(n, str) or not n for n in self.names):
            raise ValueError("resource labels must be non-empty strings")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate resource labels in {self.names}")

    @property
    def K(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class PortSpec:
    id: Hashable
    requirements: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "requirements", tuple(float(v) for v in self.requirements))


@dataclass(frozen=True)
class InstanceSpec:
    id: Hashable
    capacities: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(float(v) for v in self.capacities))


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Job types ``L``, instances ``R`` and the channel set ``E``.

    Channels are stored sorted by (port, instance).  Construction does not
    validate; call :func:`validate_graph` (or :meth:`check`) before use on
    untrusted input.
    """

    catalog: ResourceCatalog
    ports: tuple[PortSpec, ...]
    instances: tuple[InstanceSpec, ...]
    channels: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "ports", tuple(self.ports))
        object.__setattr__(self, "instances", tuple(self.instances))
        ch = np.asarray(self.channels, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((ch[:, 1], ch[:, 0]))
        ch = ch[order]
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @classmethod
    def from_arrays(cls, requirements, capacities, channels=None, resource_names=None):
        """Build a graph from ``(L, K)`` requirements and ``(R, K)`` capacities.

        ``channels=None`` gives the complete bipartite graph.
        """
        a = np.atleast_2d(np.asarray(requirements, dtype=float))
        c = np.atleast_2d(np.asarray(capacities, dtype=float))
        K = a.shape[1]
        if resource_names is None:
            resource_names = [f"res{k}" for k in range(K)]
        if channels is None:
            channels = [(l, r) for l in range(a.shape[0]) for r in range(c.shape[0])]
        return cls(
            ResourceCatalog(tuple(resource_names)),
            tuple(PortSpec(l, row) for l, row in enumerate(a)),
            tuple(InstanceSpec(r, row) for r, row in enumerate(c)),
            np.asarray(channels, dtype=np.int64),
        )

    @property
    def K(self) -> int:
        return self.catalog.K

    @property
    def n_ports(self) -> int:
        return len(self.ports)

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of an allocation tensor on this graph."""
        return (self.n_channels, self.K)

    @cached_property
    def requirements(self) -> np.ndarray:
        a = np.array([p.requirements for p in self.ports], dtype=float).reshape(-1, self.K)
        a.setflags(write=False)
        return a

    @cached_property
    def capacities(self) -> np.ndarray:
        c = np.array([i.capacities for i in self.instances], dtype=float).reshape(-1, self.K)
        c.setflags(write=False)
        return c

    @property
    def channel_ports(self) -> np.ndarray:
        return self.channels[:, 0]

    @property
    def channel_instances(self) -> np.ndarray:
        return self.channels[:, 1]

    @cached_property
    def channel_caps(self) -> np.ndarray:
        """Per-channel upper bound ``a_l^k`` broadcast to the allocation shape."""
        caps = self.requirements[self.channel_ports]
        caps.setflags(write=False)
        return caps

    @cached_property
    def _keys(self) -> np.ndarray:
        return self.channels[:, 0] * max(self.n_instances, 1) + self.channels[:, 1]

    def channel_index(self, l: int, r: int) -> int:
        """Row of channel ``(l, r)`` in an allocation; ``KeyError`` if absent."""
        key = l * max(self.n_instances, 1) + r
        i = int(np.searchsorted(self._keys, key))
        if i >= len(self._keys) or self._keys[i] != key:
            raise KeyError((l, r))
        return i

    def has_channel(self, l: int, r: int) -> bool:
        try:
            self.channel_index(l, r)
        except KeyError:
            return False
        return True

    @cached_property
    def port_neighbors(self) -> tuple[np.ndarray, ...]:
        """``R_l``: instance indices adjacent to each port, ascending."""
        return tuple(self.channels[self.channels[:, 0] == l, 1] for l in range(self.n_ports))

    @cached_property
    def instance_neighbors(self) -> tuple[np.ndarray, ...]:
        """``L_r``: port indices adjacent to each instance, ascending."""
        return tuple(self.channels[self.channels[:, 1] == r, 0] for r in range(self.n_instances))

    @cached_property
    def port_channels(self) -> tuple[np.ndarray, ...]:
        """Channel rows belonging to each port."""
        return tuple(np.flatnonzero(self.channels[:, 0] == l) for l in range(self.n_ports))

    @cached_property
    def instance_channels(self) -> tuple[np.ndarray, ...]:
        """Channel rows belonging to each instance, ordered by port."""
        return tuple(np.flatnonzero(self.channels[:, 1] == r) for r in range(self.n_instances))

    @cached_property
    def port_incidence(self) -> sparse.csr_matrix:
        """``(L, E)`` 0/1 matrix; ``port_incidence @ y`` gives per-port sums."""
        E = self.n_channels
        return sparse.csr_matrix(
            (np.ones(E), (self.channel_ports, np.arange(E))), shape=(self.n_ports, E)
        )

    @cached_property
    def instance_incidence(self) -> sparse.csr_matrix:
        """``(R, E)`` 0/1 matrix; ``instance_incidence @ y`` gives per-instance load."""
        E = self.n_channels
        return sparse.csr_matrix(
            (np.ones(E), (self.channel_instances, np.arange(E))), shape=(self.n_instances, E)
        )

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check(self) -> "BipartiteGraph":
        problems = validate_graph(self)
        if problems:
            raise GraphValidationError("; ".join(problems))
        return self

    def with_channels(self, channels) -> "BipartiteGraph":
        return BipartiteGraph(self.catalog, self.ports, self.instances, np.asarray(channels))

    def scaled_requirements(self, factor: float) -> "BipartiteGraph":
        """Copy with every requirement vector multiplied by ``factor``."""
        if factor <= 0:
            raise ValueError("requirement multiplier must be positive")
        ports = tuple(PortSpec(p.id, tuple(factor * v for v in p.requirements)) for p in self.ports)
        return BipartiteGraph(self.catalog, ports, self.instances, self.channels)


def validate_graph(graph: BipartiteGraph) -> list[str]:
    """Return a list of human-readable violations; empty means the graph is usable."""
    problems: list[str] = []
    K = graph.K
    for i, p in enumerate(graph.ports):
        if len(p.requirements) != K:
            problems.append(f"requirement arity: port {i} has {len(p.requirements)} entries, expected {K}")
            continue
        req = np.asarray(p.requirements)
        if not np.all(np.isfinite(req)) or np.any(req < 0):
            problems.append(f"negative requirement: port {i}")
        elif not np.any(req > 0):
            problems.append(f"zero requirement: port {i} requests nothing")
    for i, inst in enumerate(graph.instances):
        if len(inst.capacities) != K:
            problems.append(f"capacity arity: instance {i} has {len(inst.capacities)} entries, expected {K}")
            continue
        cap = np.asarray(inst.capacities)
        if not np.all(np.isfinite(cap)) or np.any(cap < 0):
            problems.append(f"negative capacity: instance {i}")

    ch = graph.channels
    L, R = graph.n_ports, graph.n_instances
    for l, r in ch:
        if not 0 <= l < L:
            problems.append(f"dangling port: channel ({l}, {r}) references port {l} of {L}")
        if not 0 <= r < R:
            problems.append(f"dangling instance: channel ({l}, {r}) references instance {r} of {R}")
    if len(ch) > 1:
        dup = np.all(ch[1:] == ch[:-1], axis=1)
        for l, r in ch[1:][dup]:
            problems.append(f"duplicate channel ({l}, {r})")

    used_ports = set(int(v) for v in ch[:, 0]) if len(ch) else set()
    for l in range(L):
        if l not in used_ports:
            problems.append(f"empty neighborhood: port {l} has no channel")
    return problems


def is_feasible(graph: BipartiteGraph, y: np.ndarray, tol: float = 1e-9) -> bool:
    """Box constraints ``0 <= y <= a_l`` and per-(r, k) capacity sums, within ``tol``."""
    y = np.asarray(y, dtype=float)
    if y.shape != graph.shape:
        raise ValueError(f"allocation shape {y.shape} does not match graph {graph.shape}")
    if not np.all(np.isfinite(y)):
        return False
    if np.any(y < -tol) or np.any(y > graph.channel_caps + tol):
        return False
    load = graph.instance_incidence @ y
    return bool(np.all(load <= graph.capacities + tol))


def constraint_violation(graph: BipartiteGraph, y: np.ndarray) -> float:
    """Largest violation over all box and capacity constraints (0 when feasible)."""
    y = np.asarray(y, dtype=float)
    load = graph.instance_incidence @ y
    return float(max(
        0.0,
        np.max(-y, initial=0.0),
        np.max(y - graph.channel_caps, initial=0.0),
        np.max(load - graph.capacities, initial=0.0),
    ))


def is_right_d_regular(graph: BipartiteGraph, d: int) -> bool:
    degrees = np.bincount(graph.channel_instances, minlength=graph.n_instances)
    return bool(np.all(degrees == d))


def graph_density(graph: BipartiteGraph) -> float:
    """Average number of ports per instance, ``sum_r |L_r| / |R|``."""
    if graph.n_instances == 0:
        raise ValueError("graph density undefined without instances")
    return graph.n_channels / graph.n_instances


def sample_channels(n_ports: int, n_instances: int, density: float, rng: np.random.Generator) -> np.ndarray:
    """Random channel set with ``round(density * n_instances)`` channels.

    Every instance keeps at least one port and every port at least one
    instance, so the result always validates; the remaining channels are
    drawn uniformly without replacement.
    """
    if not 1 <= density <= n_ports:
        raise ValueError(f"density must lie in [1, {n_ports}], got {density}")
    adj = np.zeros((n_ports, n_instances), dtype=bool)
    # one guaranteed port per instance, spread round-robin so every port is covered
    anchor = rng.permutation(n_instances) % n_ports
    adj[anchor, np.arange(n_instances)] = True
    for l in np.flatnonzero(~adj.any(axis=1)):
        adj[l, rng.integers(n_instances)] = True
    extra = int(round(density * n_instances)) - int(adj.sum())
    free = np.flatnonzero(~adj.ravel())
    if extra > 0:
        adj.ravel()[rng.choice(free, size=min(extra, len(free)), replace=False)] = True
    ls, rs = np.nonzero(adj)
    return np.column_stack([ls, rs])
