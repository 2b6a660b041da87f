"""Trace files, TOML run configs and metric outputs.

A trace directory holds up to four CSV files with explicit headers::

    machines.csv    instance_id,<resource>,<resource>,...
    job_types.csv   port_id,<resource>,<resource>,...   (same resource columns)
    channels.csv    port_id,instance_id                 (optional; absent = complete graph)
    arrivals.csv    slot,port_id,count                  (slots start at 1)

Requirements in ``job_types.csv`` are base values; the contention level of
a run multiplies them when the scenario is built.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .model import BipartiteGraph, InstanceSpec, PortSpec, ResourceCatalog
from .reward import RewardModel, replicate_ports
from .simulator import SimConfig, arrival_trajectory, synthesize_rewards, synthesize_scenario

MACHINES, JOB_TYPES, CHANNELS, ARRIVALS = "machines.csv", "job_types.csv", "channels.csv", "arrivals.csv"
METRICS_HEADER = ("t", "policy", "reward", "gain", "penalty", "cumulative", "average")


class TraceFormatError(ValueError):
    """Base class for trace problems; carries the file and 1-based row number when known."""

    def __init__(self, message: str, path=None, row: int | None = None):
        where = ""
        if path is not None:
            where = f"{Path(path).name}" + (f" row {row}" if row is not None else "") + ": "
        super().__init__(where + message)
        self.path = path
        self.row = row


class MalformedHeaderError(TraceFormatError):
    pass


class ReferentialIntegrityError(TraceFormatError):
    pass


class NonNumericFieldError(TraceFormatError):
    pass


class InvalidValueError(TraceFormatError):
    pass


class ConfigError(ValueError):
    pass


# -- traces ------------------------------------------------------------------------

@dataclass
class TraceReport:
    """Rows that were dropped or merged while loading, as ``(file, row, reason)``."""

    dropped: list[tuple[str, int, str]] = field(default_factory=list)
    merged: list[tuple[str, int, str]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.dropped or self.merged)


@dataclass
class TraceBundle:
    resources: tuple[str, ...]
    machine_ids: tuple[str, ...]
    capacities: np.ndarray               # (R, K)
    port_ids: tuple[str, ...]
    requirements: np.ndarray             # (L, K) base values
    channels: np.ndarray | None          # (E, 2) positional (port, instance); None = complete
    arrivals: np.ndarray                 # (M, 3) int rows of (slot, port, count)
    report: TraceReport = field(default_factory=TraceReport)
    horizon: int = 0                     # last slot named in the file, zero-count rows included

    @property
    def n_slots(self) -> int:
        last = int(self.arrivals[:, 0].max()) if len(self.arrivals) else 0
        return max(last, self.horizon)

    def to_graph(self, contention_level: float = 1.0) -> BipartiteGraph:
        L, R = len(self.port_ids), len(self.machine_ids)
        channels = self.channels
        if channels is None:
            channels = np.array([(l, r) for l in range(L) for r in range(R)], dtype=np.int64).reshape(-1, 2)
        graph = BipartiteGraph(
            ResourceCatalog(self.resources),
            tuple(PortSpec(pid, row) for pid, row in zip(self.port_ids, self.requirements)),
            tuple(InstanceSpec(iid, row) for iid, row in zip(self.machine_ids, self.capacities)),
            channels,
        )
        if contention_level != 1.0:
            graph = graph.scaled_requirements(contention_level)
        return graph

    def arrival_table(self, T: int | None = None) -> np.ndarray:
        """Dense ``(T, L)`` count matrix; ``T`` defaults to :attr:`n_slots`."""
        T = self.n_slots if T is None else int(T)
        table = np.zeros((T, len(self.port_ids)))
        for slot, port, count in self.arrivals:
            if slot <= T:
                table[slot - 1, port] += count
        return table


def _read_rows(path: Path):
    """Yield ``(row_number, fields)`` with the header as row 1; skips nothing."""
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            yield i, [f.strip() for f in row]


def _number(text: str, path, row, column, integer=False):
    try:
        value = float(text)
    except ValueError:
        raise NonNumericFieldError(f"column {column!r} holds non-numeric value {text!r}", path, row) from None
    if not math.isfinite(value):
        raise NonNumericFieldError(f"column {column!r} holds non-finite value {text!r}", path, row)
    if integer:
        if value != int(value):
            raise NonNumericFieldError(f"column {column!r} needs an integer, got {text!r}", path, row)
        return int(value)
    return value


def _load_table(path: Path, key: str, report: TraceReport):
    """Read an id + resource-columns table; returns (resources, ids, values)."""
    rows = _read_rows(path)
    first = next(rows, None)
    if first is None or not first[1] or first[1][0] != key or len(first[1]) < 2:
        raise MalformedHeaderError(f"header must be '{key},<resource>,...'", path, 1)
    header = first[1]
    resources = tuple(header[1:])
    if len(set(resources)) != len(resources) or any(not r for r in resources):
        raise MalformedHeaderError("resource columns must be distinct and non-empty", path, 1)
    ids, values, seen = [], [], set()
    for i, row in rows:
        if not any(row):
            report.dropped.append((path.name, i, "blank row"))
            continue
        if len(row) != len(header):
            raise MalformedHeaderError(f"expected {len(header)} fields, found {len(row)}", path, i)
        if row[0] in seen:
            raise ReferentialIntegrityError(f"duplicate {key} {row[0]!r}", path, i)
        seen.add(row[0])
        vals = [_number(v, path, i, c) for v, c in zip(row[1:], resources)]
        if any(v < 0 for v in vals):
            raise InvalidValueError("negative resource amount", path, i)
        ids.append(row[0])
        values.append(vals)
    return resources, tuple(ids), np.array(values, dtype=float).reshape(len(ids), len(resources))


def load_trace(paths) -> TraceBundle:
    """Load and validate a trace.

    ``paths`` is either a directory holding the standard file names or a
    mapping with keys ``machines``, ``job_types``, ``arrivals`` and
    optionally ``channels``.
    """
    if isinstance(paths, (str, Path)):
        root = Path(paths)
        files = {"machines": root / MACHINES, "job_types": root / JOB_TYPES, "arrivals": root / ARRIVALS}
        if (root / CHANNELS).exists():
            files["channels"] = root / CHANNELS
    else:
        files = {k: Path(v) for k, v in dict(paths).items()}
    for name in ("machines", "job_types", "arrivals"):
        if name not in files:
            raise TraceFormatError(f"missing {name} table")
        if not files[name].exists():
            raise FileNotFoundError(files[name])

    report = TraceReport()
    resources, machine_ids, capacities = _load_table(files["machines"], "instance_id", report)
    job_resources, port_ids, requirements = _load_table(files["job_types"], "port_id", report)
    if job_resources != resources:
        raise MalformedHeaderError(f"resource columns {job_resources} differ from machines {resources}",
                                   files["job_types"], 1)
    port_index = {p: i for i, p in enumerate(port_ids)}
    machine_index = {m: i for i, m in enumerate(machine_ids)}

    channels = None
    if "channels" in files:
        path = files["channels"]
        rows = _read_rows(path)
        first = next(rows, None)
        if first is None or first[1] != ["port_id", "instance_id"]:
            raise MalformedHeaderError("header must be 'port_id,instance_id'", path, 1)
        edges, seen = [], set()
        for i, row in rows:
            if not any(row):
                report.dropped.append((path.name, i, "blank row"))
                continue
            if len(row) != 2:
                raise MalformedHeaderError(f"expected 2 fields, found {len(row)}", path, i)
            if row[0] not in port_index:
                raise ReferentialIntegrityError(f"unknown port {row[0]!r}", path, i)
            if row[1] not in machine_index:
                raise ReferentialIntegrityError(f"unknown instance {row[1]!r}", path, i)
            edge = (port_index[row[0]], machine_index[row[1]])
            if edge in seen:
                report.dropped.append((path.name, i, "duplicate channel"))
                continue
            seen.add(edge)
            edges.append(edge)
        channels = np.array(edges, dtype=np.int64).reshape(-1, 2)

    path = files["arrivals"]
    counts: dict[tuple[int, int], int] = {}
    horizon = 0
    rows = _read_rows(path)
    first = next(rows, None)
    if first is not None and first[1] != ["slot", "port_id", "count"]:
        raise MalformedHeaderError("header must be 'slot,port_id,count'", path, 1)
    for i, row in rows:
        if not any(row):
            report.dropped.append((path.name, i, "blank row"))
            continue
        if len(row) != 3:
            raise MalformedHeaderError(f"expected 3 fields, found {len(row)}", path, i)
        slot = _number(row[0], path, i, "slot", integer=True)
        if row[1] not in port_index:
            raise ReferentialIntegrityError(f"unknown port {row[1]!r}", path, i)
        count = _number(row[2], path, i, "count", integer=True)
        if slot < 1:
            raise InvalidValueError("slots start at 1", path, i)
        if count < 0:
            raise InvalidValueError("negative arrival count", path, i)
        horizon = max(horizon, slot)
        if count == 0:
            report.dropped.append((path.name, i, "zero count"))
            continue
        key = (slot, port_index[row[1]])
        if key in counts:
            report.merged.append((path.name, i, f"repeated slot {slot} port {row[1]!r}; counts added"))
        counts[key] = counts.get(key, 0) + count
    arrivals = np.array([(s, p, c) for (s, p), c in sorted(counts.items())], dtype=np.int64).reshape(-1, 3)
    return TraceBundle(resources, machine_ids, capacities, port_ids, requirements, channels, arrivals, report, horizon)


def write_trace(directory, graph: BipartiteGraph, arrivals=None, contention_level: float = 1.0,
                write_channels: bool | None = None) -> Path:
    """Write ``graph`` (and an optional ``(T, L)`` count matrix) as a trace directory.

    Requirements are divided by ``contention_level`` so that loading with
    the same level rebuilds the same graph.  Channels are written unless
    the graph is complete (``write_channels=None``).
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    names = list(graph.catalog.names)
    with open(root / MACHINES, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance_id", *names])
        for inst in graph.instances:
            w.writerow([inst.id, *map(repr, inst.capacities)])
    with open(root / JOB_TYPES, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["port_id", *names])
        for port in graph.ports:
            w.writerow([port.id, *(repr(v / contention_level) for v in port.requirements)])
    complete = graph.n_channels == graph.n_ports * graph.n_instances
    if write_channels or (write_channels is None and not complete):
        with open(root / CHANNELS, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["port_id", "instance_id"])
            for l, r in graph.channels:
                w.writerow([graph.ports[l].id, graph.instances[r].id])
    elif (root / CHANNELS).exists():
        (root / CHANNELS).unlink()
    with open(root / ARRIVALS, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "port_id", "count"])
        if arrivals is not None:
            table = np.asarray(arrivals)
            for t, l in zip(*np.nonzero(table)):
                w.writerow([t + 1, graph.ports[l].id, int(table[t, l])])
            if len(table) and not np.any(table[-1]):
                # zero-count row keeps the horizon when the last slot is empty
                w.writerow([len(table), graph.ports[0].id, 0])
    return root


# -- configs -----------------------------------------------------------------------

def parse_config(data: dict, base_dir: Path | None = None) -> SimConfig:
    unknown = set(data) - SimConfig.keys()
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    data = dict(data)
    if data.get("trace_dir") and base_dir is not None and not Path(data["trace_dir"]).is_absolute():
        data["trace_dir"] = str((base_dir / data["trace_dir"]).resolve())
    try:
        return SimConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> SimConfig:
    """Read a TOML config; missing keys keep their defaults, relative ``trace_dir`` resolves against the file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent)


def dump_config(config: SimConfig) -> str:
    """TOML text that :func:`load_config` reads back to ``config``."""
    lines = []
    for key, value in config.to_dict().items():
        lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


# -- scenarios from configs ---------------------------------------------------------

@dataclass
class Scenario:
    graph: BipartiteGraph            # graph the policies run on (expanded when ports take several jobs)
    model: RewardModel
    arrivals: np.ndarray             # (T, n_ports of ``graph``) 0/1 matrix
    base_graph: BipartiteGraph
    counts: np.ndarray               # (T, L) per-port counts before expansion


def load_scenario(config: SimConfig) -> Scenario:
    """Graph, reward model and arrival trajectory described by ``config``.

    Trace mode reads the graph and counts from ``config.trace_dir``.  When
    ``max_arrivals > 1`` every port is expanded into that many replicas.
    """
    if config.arrivals_mode == "trace":
        bundle = load_trace(config.trace_dir)
        if bundle.resources != tuple(config.resources):
            config = config.replace(resources=bundle.resources)
        graph = bundle.to_graph(config.contention_level).check()
        if bundle.n_slots < config.T:
            raise ValueError(f"trace covers {bundle.n_slots} slots, run needs T={config.T}")
        counts = bundle.arrival_table(config.T)
        model = synthesize_rewards(config, graph.n_instances)
    else:
        graph, model = synthesize_scenario(config)
        counts = arrival_trajectory(config, graph)
    if counts.max(initial=0) > config.max_arrivals:
        raise ValueError(f"trace has {int(counts.max())} arrivals in one slot, max_arrivals is {config.max_arrivals}")
    base = graph
    arrivals = counts
    if config.max_arrivals > 1:
        rep = replicate_ports(graph, config.max_arrivals)
        graph = rep.graph
        arrivals = np.stack([rep.arrivals(row) for row in counts])
    return Scenario(graph, model, arrivals, base, counts)


# -- outputs -----------------------------------------------------------------------

def write_metrics_csv(path, logs) -> Path:
    """One row per slot per policy; floats use ``repr`` so equal runs give equal bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for log in logs:
            for t, name, *values in log.rows():
                w.writerow([t, name, *(repr(float(v)) for v in values)])
    return path


def read_metrics_csv(path) -> dict[str, dict[str, np.ndarray]]:
    out: dict[str, dict[str, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise MalformedHeaderError(f"metrics header must be {','.join(METRICS_HEADER)}", path, 1)
        for row in reader:
            cols = out.setdefault(row["policy"], {k: [] for k in METRICS_HEADER if k != "policy"})
            for k in cols:
                cols[k].append(float(row[k]))
    return {p: {k: np.array(v) for k, v in cols.items()} for p, cols in out.items()}


def write_summary_json(path, config: SimConfig, summary: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": config.to_dict(), **summary}
    path.write_text(json.dumps(payload, indent=2, sort_keys=False, default=_jsonable) + "\n")
    return path


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")
