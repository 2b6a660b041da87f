"""Euclidean projection onto the allocation polytope.

The polytope splits into independent pieces, one per (instance ``r``,
resource ``k``) pair::

    min ||y - z||^2   s.t.  0 <= y_l <= a_l  (l in L_r),   sum_l y_l <= c

Each piece is solved by an active-set iteration on its KKT system.  Ports
are partitioned into *at-cap* (B1), *at-zero* (B2) and *interior* (B3);
on the interior the solution is ``z_l - rho/2`` where the capacity
multiplier is

    rho = 2 / |B3| * (sum_{B3} z - c + sum_{B1} a).

An inner loop moves negative interior entries to B2 until none remain;
an outer loop then moves every interior entry above its cap into B1 and
restarts the inner loop with B2 cleared.  Each outer step only ever adds
ports that are at their cap in the true solution, so the outer loop runs
at most ``|L_r| + 1`` times.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .model import BipartiteGraph

SET_TOL = 1e-9


@dataclass(frozen=True)
class Subproblem:
    z: np.ndarray
    caps: np.ndarray
    capacity: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        caps = np.broadcast_to(np.asarray(self.caps, dtype=float), z.shape).copy()
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "capacity", float(self.capacity))
        if not np.all(np.isfinite(z)):
            raise ValueError("subproblem values must be finite")
        if np.any(caps < 0) or self.capacity < 0:
            raise ValueError("caps and capacity must be non-negative")

    @property
    def n(self) -> int:
        return len(self.z)


@dataclass
class ProjectionWorkspace:
    order: np.ndarray
    at_cap: np.ndarray = field(default=None)     # B1
    at_zero: np.ndarray = field(default=None)    # B2
    interior: np.ndarray = field(default=None)   # B3
    pending: np.ndarray = field(default=None)    # S, last batch moved to B2
    rho: float = 0.0
    outer_iterations: int = 0
    inner_iterations: list = field(default_factory=list)
    demotions: int = 0

    def __post_init__(self):
        n = len(self.order)
        for name in ("at_cap", "at_zero", "interior", "pending"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=bool))


@dataclass(frozen=True)
class ProjectionResult:
    y: np.ndarray
    rho: float
    workspace: ProjectionWorkspace

    @property
    def capacity_active(self) -> bool:
        return self.rho > 0


def project_subproblem(sub: Subproblem, tol: float = SET_TOL) -> ProjectionResult:
    """Project ``sub.z`` onto ``{0 <= y <= caps, sum y <= capacity}``."""
    z, a, c = sub.z, sub.caps, sub.capacity
    n = sub.n
    # stable sort on -z keeps ties in port order
    ws = ProjectionWorkspace(order=np.argsort(-z, kind="stable"))
    clamp = np.clip(z, 0.0, a)
    if n == 0 or clamp.sum() <= c + tol:
        ws.at_cap = (z >= a) & (a > 0)
        ws.at_zero = z <= 0
        ws.interior = ~(ws.at_cap | ws.at_zero)
        return ProjectionResult(clamp, 0.0, ws)

    zs, as_ = z[ws.order], a[ws.order]   # work in sorted order
    at_cap = np.zeros(n, dtype=bool)
    while True:
        ws.outer_iterations += 1
        at_zero = np.zeros(n, dtype=bool)
        interior = ~at_cap
        inner = 0
        theta = 0.0
        while True:
            inner += 1
            m = int(interior.sum())
            if m == 0:
                break
            theta = (zs[interior].sum() - c + as_[at_cap].sum()) / m
            yhat = zs - theta
            neg = interior & (yhat < 0)
            if not neg.any():
                break
            # sorted descending: the first negative entry and all after it are illegal
            first = int(np.argmax(neg))
            pending = interior.copy()
            pending[:first] = False
            ws.pending = pending
            at_zero |= pending
            interior &= ~pending
        ws.inner_iterations.append(inner)

        if not interior.any() and as_[at_cap].sum() > c + tol:
            # capped ports alone overflow capacity; demote the smallest-z one
            demote = int(np.flatnonzero(at_cap)[-1])
            at_cap[demote] = False
            ws.demotions += 1
            continue

        y = np.where(at_cap, as_, np.where(interior, zs - theta, 0.0))
        over = interior & (y > as_ + tol)
        if not over.any():
            break
        at_cap |= over

    out = np.empty(n)
    out[ws.order] = y
    inv = np.empty(n, dtype=np.int64)
    inv[ws.order] = np.arange(n)
    ws.at_cap, ws.at_zero, ws.interior = at_cap[inv], at_zero[inv], interior[inv]
    ws.rho = 2.0 * theta if interior.any() else 0.0
    return ProjectionResult(out, ws.rho, ws)


# -- batched form used by the policies -----------------------------------------

def project_columns(Z: np.ndarray, A: np.ndarray, C: np.ndarray, mask: np.ndarray, tol: float = SET_TOL) -> np.ndarray:
    """Project every row of ``Z`` independently.

    ``Z`` and ``A`` are ``(M, D)``, ``C`` is ``(M,)`` and ``mask`` marks the
    real entries of each padded row.  Row ``i`` is the subproblem
    ``(Z[i, mask[i]], A[i, mask[i]], C[i])``; padded entries come back as 0.
    """
    Z = np.where(mask, Z, 0.0)
    A = np.where(mask, A, 0.0)
    Y = np.clip(Z, 0.0, A)
    rows = np.flatnonzero(Y.sum(axis=1) > C + tol)
    if len(rows) == 0:
        return Y
    z, a, c, valid = Z[rows], A[rows], C[rows], mask[rows]
    D = Z.shape[1]
    at_cap = np.zeros_like(valid)
    for _ in range(D + 1):
        interior = valid & ~at_cap
        theta = np.zeros(len(rows))
        for _ in range(D + 1):
            m = interior.sum(axis=1)
            num = np.where(interior, z, 0.0).sum(axis=1) - c + np.where(at_cap, a, 0.0).sum(axis=1)
            theta = num / np.maximum(m, 1)
            neg = interior & (z < theta[:, None])
            if not neg.any():
                break
            interior &= ~neg
        y = np.where(at_cap, a, np.where(interior, z - theta[:, None], 0.0))
        over = interior & (y > a + tol)
        if not over.any():
            break
        at_cap |= over
    Y[rows] = y

    # rows whose capped ports alone overflow need the demotion path
    bad = ~interior.any(axis=1) & (np.where(at_cap, a, 0.0).sum(axis=1) > c + tol)
    for i in np.flatnonzero(bad):
        row = rows[i]
        sel = mask[row]
        res = project_subproblem(Subproblem(Z[row, sel], A[row, sel], C[row]), tol)
        Y[row, sel] = res.y
    return Y


@lru_cache(maxsize=32)
def _instance_table(graph: BipartiteGraph):
    # (R, D) channel rows per instance, padded with -1
    groups = graph.instance_channels
    D = max((len(g) for g in groups), default=0)
    table = np.full((graph.n_instances, max(D, 1)), -1, dtype=np.int64)
    for r, g in enumerate(groups):
        table[r, : len(g)] = g
    return table


def project(graph: BipartiteGraph, z: np.ndarray, caps=None, method: str = "batch", tol: float = SET_TOL) -> np.ndarray:
    """Project a full ``(n_channels, K)`` tensor onto the feasible set of ``graph``.

    ``caps`` defaults to the graph's per-channel requirements.  ``method``
    is ``"batch"`` (vectorised over all (r, k) pairs) or ``"loop"`` (one
    :func:`project_subproblem` call per pair); both give the same answer.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != graph.shape:
        raise ValueError(f"tensor shape {z.shape} does not match graph {graph.shape}")
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("cannot project a non-finite tensor")
    caps = graph.channel_caps if caps is None else np.broadcast_to(np.asarray(caps, dtype=float), z.shape)
    C = graph.capacities
    if method == "loop":
        out = np.zeros_like(z)
        for r, rows in enumerate(graph.instance_channels):
            for k in range(graph.K):
                res = project_subproblem(Subproblem(z[rows, k], caps[rows, k], C[r, k]), tol)
                out[rows, k] = res.y
        return out
    if method != "batch":
        raise ValueError(f"unknown projection method {method!r}")

    table = _instance_table(graph)
    R, D = table.shape
    K = graph.K
    mask = table >= 0
    idx = np.where(mask, table, 0)
    # (R, D, K) -> (R, K, D) -> (R*K, D)
    Zb = z[idx].transpose(0, 2, 1).reshape(R * K, D)
    Ab = caps[idx].transpose(0, 2, 1).reshape(R * K, D)
    Mb = np.repeat(mask, K, axis=0)
    Yb = project_columns(Zb, Ab, C.reshape(-1), Mb, tol)
    Y = Yb.reshape(R, K, D).transpose(0, 2, 1)
    out = np.zeros_like(z)
    out[table[mask]] = Y[mask]
    return out


# -- exhaustive reference solver -----------------------------------------------

ORACLE_MAX_PORTS = 12

ZERO, CAP, FREE = 0, 1, 2


@njit(cache=True)
def _enumerate(z, a, c, tol):
    # Depth-first walk over all 3^n assignments; running sums along the path
    # make every leaf O(1).
    n = len(z)
    # per-depth accumulators, index d holds the state after fixing ports < d
    base = np.zeros(n + 1)      # mass pinned at caps
    fz = np.zeros(n + 1)        # sum of free z
    nf = np.zeros(n + 1, dtype=np.int64)
    cost = np.zeros(n + 1)      # squared distance of pinned ports
    hi = np.full(n + 1, np.inf)
    lo = np.full(n + 1, -np.inf)
    out_ok = np.ones(n + 1, dtype=np.bool_)   # every free z inside its box
    digit = np.full(n, -1, dtype=np.int64)
    best_code = np.zeros(n, dtype=np.int64)
    best_cost = np.inf
    best_shift = 0.0
    best_tight = False
    d = 0
    while d >= 0:
        if d == n:
            # slack capacity: free ports keep z
            if out_ok[n] and base[n] + fz[n] <= c + tol:
                if cost[n] < best_cost:
                    best_cost = cost[n]
                    best_tight = False
                    best_shift = 0.0
                    for i in range(n):
                        best_code[i] = digit[i]
            # tight capacity: common shift on free ports so the sum hits c
            if nf[n] > 0:
                s = (fz[n] + base[n] - c) / nf[n]
                if s <= hi[n] + tol and s >= lo[n] - tol:
                    tc = cost[n] + nf[n] * s * s
                    if tc < best_cost:
                        best_cost = tc
                        best_tight = True
                        best_shift = s
                        for i in range(n):
                            best_code[i] = digit[i]
            d -= 1
            continue
        digit[d] += 1
        if digit[d] > 2:
            digit[d] = -1
            d -= 1
            continue
        zi, ai = z[d], a[d]
        base[d + 1] = base[d]
        fz[d + 1] = fz[d]
        nf[d + 1] = nf[d]
        cost[d + 1] = cost[d]
        hi[d + 1] = hi[d]
        lo[d + 1] = lo[d]
        out_ok[d + 1] = out_ok[d]
        if digit[d] == 0:          # pinned at zero
            cost[d + 1] += zi * zi
        elif digit[d] == 1:        # pinned at cap
            base[d + 1] += ai
            cost[d + 1] += (ai - zi) * (ai - zi)
        else:                      # free
            fz[d + 1] += zi
            nf[d + 1] += 1
            hi[d + 1] = min(hi[d], zi)
            lo[d + 1] = max(lo[d], zi - ai)
            if zi < -tol or zi > ai + tol:
                out_ok[d + 1] = False
        d += 1
    return best_code, best_shift, best_tight, best_cost


def project_oracle(sub: Subproblem, tol: float = 1e-9) -> np.ndarray:
    """Exact projection by enumerating every active-set assignment.

    Each port is pinned to zero, pinned to its cap, or left free; the
    capacity constraint is either slack (free ports keep ``z``) or tight
    (free ports share one shift fixed by the sum).  Every primal-feasible
    candidate is scored by its distance to ``z`` and the closest one wins.
    The true minimiser satisfies KKT, so it is always among the candidates.
    """
    n = sub.n
    if n > ORACLE_MAX_PORTS:
        raise ValueError(f"oracle enumerates 3^n assignments; n={n} exceeds {ORACLE_MAX_PORTS}")
    if n == 0:
        return np.zeros(0)
    z, a = sub.z, sub.caps
    code, shift, tight, cost = _enumerate(z, a, sub.capacity, tol)
    if not np.isfinite(cost):  # pragma: no cover - all-zero is always feasible
        raise RuntimeError("no feasible candidate; inputs are inconsistent")
    y = np.where(code == FREE, z - (shift if tight else 0.0), np.where(code == CAP, a, 0.0))
    return np.clip(y, 0.0, a)
