"""Offline stationary optimum, empirical regret and the analytic regret bound."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .model import BipartiteGraph
from .projection import project
from .reward import RewardModel, _grads, _values, port_breakdown, reward_gradient, total_reward


# -- analytic bound -------------------------------------------------------------

def diameter_bound(graph: BipartiteGraph) -> float:
    """Upper bound on the diameter of the feasible set: ``sqrt(2 sum_k abar^k sum_r c_r^k)``."""
    a_bar = graph.requirements.max(axis=0, initial=0.0)
    return math.sqrt(2.0 * float(a_bar @ graph.capacities.sum(axis=0)))


@dataclass(frozen=True)
class RegretBoundInputs:
    a_bar: np.ndarray        # (K,) largest requirement per resource
    beta_star: float
    varpi_star: np.ndarray   # (R,) largest utility slope at zero per instance
    capacities: np.ndarray   # (R, K)
    port_neighbors: tuple    # R_l for every port
    K: int
    T: int

    @classmethod
    def from_problem(cls, graph: BipartiteGraph, model: RewardModel, T: int) -> "RegretBoundInputs":
        model.check_graph(graph)
        return cls(
            a_bar=graph.requirements.max(axis=0, initial=0.0),
            beta_star=float(model.betas.max()),
            varpi_star=model.grad_at_zero().max(axis=1),
            capacities=np.asarray(graph.capacities),
            port_neighbors=graph.port_neighbors,
            K=graph.K,
            T=int(T),
        )


class RegretBound(NamedTuple):
    bound: float           # H_G * sqrt(T)
    graph_factor: float    # H_G
    diameter: float        # bound on diam(Y)
    gradient: float        # bound on max ||grad q||


def regret_upper_bound(inputs: RegretBoundInputs) -> RegretBound:
    diam = math.sqrt(2.0 * float(inputs.a_bar @ inputs.capacities.sum(axis=0)))
    grad_sq = sum(
        float(np.sum(inputs.beta_star**2 + inputs.K * inputs.varpi_star[nbrs] ** 2))
        for nbrs in inputs.port_neighbors
    )
    grad = math.sqrt(grad_sq)
    h_g = diam * grad
    return RegretBound(h_g * math.sqrt(inputs.T), h_g, diam, grad)


# -- empirical regret ------------------------------------------------------------

def arrival_totals(trajectory) -> np.ndarray:
    """Per-port arrival counts summed over the horizon.

    The horizon reward of a fixed allocation is linear in these totals, so
    they are all the offline problem needs.
    """
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim != 2 or len(traj) == 0:
        raise ValueError("trajectory must be a non-empty (T, L) array")
    return traj.sum(axis=0)


def stationary_rewards(trajectory, model: RewardModel, graph: BipartiteGraph, y: np.ndarray) -> np.ndarray:
    """Per-slot rewards of holding ``y`` fixed over the whole trajectory."""
    gains, penalties = port_breakdown(model, graph, y)
    return np.asarray(trajectory, dtype=float) @ (gains - penalties)


def empirical_regret(trajectory, per_slot_rewards: Sequence[float], Q_star: float) -> float:
    """``Q_star`` minus the reward a policy collected over ``trajectory``."""
    rewards = np.asarray(per_slot_rewards, dtype=float)
    if trajectory is not None and len(trajectory) != len(rewards):
        raise ValueError(f"{len(rewards)} rewards for a trajectory of {len(trajectory)} slots")
    return float(Q_star - rewards.sum())


# -- offline optimum ---------------------------------------------------------------

@dataclass
class OfflineResult:
    y: np.ndarray
    Q: float
    iterations: int
    converged: bool
    history: np.ndarray   # objective of every accepted iterate, non-decreasing


POLISH_MAX_VARIABLES = 2000


def _projected_ascent(model, graph, n, y, budget, tol, history):
    """Projected supergradient ascent with ``1/(L sqrt(i))`` steps, halved until the objective improves."""
    def value(v):
        return total_reward(model, graph, n, v).reward

    q = value(y)
    lip = max(float(np.linalg.norm(reward_gradient(model, graph, n, y))), 1e-12)
    scale = diameter_bound(graph) or 1.0
    it = 0
    stalls = 0
    while it < budget:
        it += 1
        g = reward_gradient(model, graph, n, y)
        if not np.any(g):
            return y, it, True
        step = scale / (lip * math.sqrt(it))
        for _ in range(40):
            cand = project(graph, y + step * g)
            qc = value(cand)
            if qc >= q:
                break
            step *= 0.5
        else:
            stalls += 1
            if stalls >= 5:
                return y, it, False
            continue
        move = float(np.linalg.norm(cand - y))
        y, q = cand, qc
        history.append(q)
        if move <= tol * (1.0 + float(np.linalg.norm(y))):
            return y, it, True
    return y, it, False


def _polish(model, graph, n, y0):
    """Exact solve of the smooth epigraph form with SLSQP.

    ``max sum_l n_l (sum f(y) - s_l)`` subject to ``s_l >= beta_k S_lk``,
    box and capacity constraints; every constraint is linear.
    """
    from scipy import sparse
    from scipy.optimize import Bounds, LinearConstraint, minimize

    E, K = graph.shape
    L = graph.n_ports
    kinds, alphas = model.kinds[graph.channel_instances], model.alphas[graph.channel_instances]
    w = n[graph.channel_ports][:, None]

    def objective(v):
        y = np.maximum(v[: E * K].reshape(E, K), 0.0)
        val = np.sum(w * _values(kinds, alphas, y)) - n @ v[E * K:]
        grad = np.concatenate([(w * _grads(kinds, alphas, y)).ravel(), -n])
        return -val, -grad

    cap = sparse.hstack([sparse.kron(graph.instance_incidence, sparse.eye(K)), sparse.csr_matrix((graph.n_instances * K, L))])
    pen = sparse.hstack([sparse.kron(graph.port_incidence, sparse.diags(model.betas)), -sparse.kron(sparse.eye(L), np.ones((K, 1)))])
    A = sparse.vstack([cap, pen]).toarray()
    ub = np.concatenate([np.asarray(graph.capacities).ravel(), np.zeros(L * K)])
    bounds = Bounds(
        np.concatenate([np.zeros(E * K), np.full(L, -np.inf)]),
        np.concatenate([np.asarray(graph.channel_caps).ravel(), np.full(L, np.inf)]),
    )
    s0 = (np.asarray(graph.port_incidence @ y0) * model.betas).max(axis=1)
    res = minimize(objective, np.concatenate([y0.ravel(), s0]), jac=True, method="SLSQP", bounds=bounds,
                   constraints=[LinearConstraint(A, np.full(len(ub), -np.inf), ub)],
                   options={"maxiter": 2000, "ftol": 1e-15})
    return project(graph, res.x[: E * K].reshape(E, K))


def offline_optimum(trajectory, model: RewardModel, graph: BipartiteGraph, budget: int = 50_000,
                    tol: float = 1e-9, y0: np.ndarray | None = None, polish: bool | None = None) -> OfflineResult:
    """Best fixed allocation in hindsight, ``argmax_y sum_t q(x(t), y)``.

    Runs projected supergradient ascent on the horizon objective.  Ascent
    alone can stall on the kinks of the max-penalty, so on problems with
    at most ``POLISH_MAX_VARIABLES`` coordinates the result is refined by an
    exact solve of the equivalent smooth program (``polish=None`` picks
    automatically).  The returned allocation is always feasible and the
    recorded objective history never decreases.
    """
    model.check_graph(graph)
    n = arrival_totals(trajectory)
    if n.shape != (graph.n_ports,):
        raise ValueError("trajectory width does not match the number of ports")

    y = graph.zeros() if y0 is None else project(graph, y0)
    history = [total_reward(model, graph, n, y).reward]
    if not np.any(n):
        return OfflineResult(y, history[-1], 0, True, np.array(history))

    if polish is None:
        polish = graph.n_channels * graph.K <= POLISH_MAX_VARIABLES
    ascent_budget = min(budget, 2_000) if polish else budget
    y, it, converged = _projected_ascent(model, graph, n, y, ascent_budget, tol, history)
    if polish:
        cand = _polish(model, graph, n, y)
        q = total_reward(model, graph, n, cand).reward
        if q >= history[-1]:
            y = cand
            history.append(q)
        converged = True
    elif not converged:
        warnings.warn(f"offline optimum stopped after {it} iterations without reaching tol={tol}", RuntimeWarning)
    return OfflineResult(y, history[-1], it, converged, np.array(history))


def grid_search_optimum(trajectory, model: RewardModel, graph: BipartiteGraph, resolution: float = 0.01,
                        chunk: int = 200_000) -> tuple[np.ndarray, float]:
    """Brute-force offline optimum over a regular grid on the box; only for <= 4 coordinates.

    The objective is evaluated here from scratch rather than through
    :mod:`ogasched.reward` so it can serve as an independent check.
    """
    E, K = graph.shape
    if E * K > 4:
        raise ValueError("grid search is limited to 4 decision coordinates")
    n = arrival_totals(trajectory)
    caps = np.asarray(graph.channel_caps).ravel()
    axes = [np.append(np.arange(0.0, c, resolution), c) for c in caps]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, E * K)
    ports = graph.channel_ports
    inst = graph.channel_instances
    best_val, best_y = -np.inf, None
    for start in range(0, len(mesh), chunk):
        Y = mesh[start:start + chunk].reshape(-1, E, K)
        load = np.zeros((len(Y), graph.n_instances, K))
        for e in range(E):
            load[:, inst[e]] += Y[:, e]
        ok = np.all(load <= graph.capacities + 1e-12, axis=(1, 2))
        if not ok.any():
            continue
        Y = Y[ok]
        val = np.zeros(len(Y))
        for l in range(graph.n_ports):
            gain = np.zeros(len(Y))
            sums = np.zeros((len(Y), K))
            for e in np.flatnonzero(ports == l):
                for k in range(K):
                    alpha, kind, v = model.alphas[inst[e], k], model.kinds[inst[e], k], Y[:, e, k]
                    if kind == 0:
                        gain += alpha * v
                    elif kind == 1:
                        gain += alpha * np.log(1.0 + v)
                    elif kind == 2:
                        gain += 1.0 / alpha - 1.0 / (v + alpha)
                    else:
                        gain += alpha * np.sqrt(v + 1.0) - alpha
                sums += Y[:, e]
            val += n[l] * (gain - np.max(sums * model.betas, axis=1))
        i = int(np.argmax(val))
        if val[i] > best_val:
            best_val, best_y = float(val[i]), Y[i].copy()
    return best_y, best_val
