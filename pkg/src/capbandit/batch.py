"""Mini-batch assignment: integer counts and exact matching by min-cost max-flow."""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .capacity import QueueBank
from .domain import CapacityProfile
from .errors import CountMismatch, Infeasible, NetworkMalformed, ScoreOverflow

COST_SCALE = 10**6
MAX_ABS_SCORE = 1e3
_INF = float("inf")


class FlowNetwork:
    """Directed network with integer capacities and costs.

    Arcs are stored in pairs: arc ``i`` and its residual twin ``i ^ 1``.
    """

    def __init__(self, n_nodes: int = 0, source: int = 0, sink: int = 1):
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self.head: list[int] = []
        self.residual: list[int] = []
        self.cost: list[int] = []
        self.capacity: list[int] = []
        self.source = source
        self.sink = sink
        self.potentials: list[float] | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.adj)

    def add_node(self) -> int:
        self.adj.append([])
        return len(self.adj) - 1

    def add_arc(self, u: int, v: int, capacity: int, cost: int) -> int:
        n = self.n_nodes
        if not (0 <= u < n and 0 <= v < n):
            raise NetworkMalformed(f"arc ({u}, {v}) references a missing node")
        if int(capacity) != capacity or int(cost) != cost:
            raise NetworkMalformed("capacities and costs must be integers")
        if capacity < 0:
            raise NetworkMalformed(f"negative capacity on arc ({u}, {v})")
        idx = len(self.head)
        self.head += [v, u]
        self.residual += [int(capacity), 0]
        self.cost += [int(cost), -int(cost)]
        self.capacity += [int(capacity), 0]
        self.adj[u].append(idx)
        self.adj[v].append(idx + 1)
        return idx

    def flow_on(self, arc: int) -> int:
        return self.capacity[arc] - self.residual[arc]

    def tail(self, arc: int) -> int:
        return self.head[arc ^ 1]


def _initial_potentials(net: FlowNetwork) -> list[float]:
    """Shortest distances from the source over arcs with residual capacity (SPFA)."""
    n = net.n_nodes
    dist = [_INF] * n
    dist[net.source] = 0
    in_queue = [False] * n
    visits = [0] * n
    queue = [net.source]
    in_queue[net.source] = True
    head, residual, cost, adj = net.head, net.residual, net.cost, net.adj
    i = 0
    while i < len(queue):
        u = queue[i]
        i += 1
        in_queue[u] = False
        du = dist[u]
        for e in adj[u]:
            if residual[e] > 0:
                v = head[e]
                nd = du + cost[e]
                if nd < dist[v]:
                    dist[v] = nd
                    if not in_queue[v]:
                        visits[v] += 1
                        if visits[v] > n:
                            raise NetworkMalformed("negative-cost cycle reachable from the source")
                        in_queue[v] = True
                        queue.append(v)
    return [d if d < _INF else 0 for d in dist]


def _certify(net: FlowNetwork) -> list[float]:
    """Feasible potentials for the final residual graph.

    Bellman-Ford from a virtual root joined to every node at zero cost. A
    relaxation that still succeeds after ``n`` passes means a negative
    residual cycle, i.e. the flow is not cost-optimal.
    """
    n = net.n_nodes
    dist = [0] * n
    head, residual, cost = net.head, net.residual, net.cost
    arcs = [e for e in range(len(head)) if residual[e] > 0]
    tails = [head[e ^ 1] for e in arcs]
    for _ in range(n + 1):
        changed = False
        for e, u in zip(arcs, tails):
            nd = dist[u] + cost[e]
            v = head[e]
            if nd < dist[v]:
                dist[v] = nd
                changed = True
        if not changed:
            return dist
    raise Infeasible("negative reduced-cost cycle in the residual network; flow is not optimal")


def mcmf_solve(net: FlowNetwork) -> tuple[int, int]:
    """Min-cost maximum flow by successive shortest paths with Johnson potentials.

    Returns ``(flow, cost)`` and leaves certified node potentials in
    ``net.potentials``.
    """
    n = net.n_nodes
    s, t = net.source, net.sink
    if not (0 <= s < n and 0 <= t < n) or s == t:
        raise NetworkMalformed("source and sink must be distinct existing nodes")
    pot = _initial_potentials(net)
    head, residual, cost, adj = net.head, net.residual, net.cost, net.adj
    total_flow = 0
    total_cost = 0
    while True:
        dist = [_INF] * n
        parent = [-1] * n
        dist[s] = 0
        heap = [(0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            pu = pot[u]
            for e in adj[u]:
                if residual[e] > 0:
                    v = head[e]
                    nd = d + cost[e] + pu - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        parent[v] = e
                        heapq.heappush(heap, (nd, v))
        if dist[t] == _INF:
            break
        for v in range(n):
            if dist[v] < _INF:
                pot[v] += dist[v]
        push = None
        v = t
        while v != s:
            e = parent[v]
            push = residual[e] if push is None else min(push, residual[e])
            v = head[e ^ 1]
        v = t
        while v != s:
            e = parent[v]
            residual[e] -= push
            residual[e ^ 1] += push
            total_cost += push * cost[e]
            v = head[e ^ 1]
        total_flow += push
    net.potentials = _certify(net)
    return total_flow, total_cost


# -- counts ----------------------------------------------------------------------


def largest_remainder(quotas: Sequence[float], total: int) -> np.ndarray:
    """Round nonnegative ``quotas`` to integers summing to ``total``.

    Leftover units go to the largest fractional parts; ties to the lowest index.
    """
    quotas = np.asarray(quotas, dtype=float)
    floors = np.floor(quotas).astype(np.int64)
    residual = int(total - floors.sum())
    if residual < 0 or residual > quotas.size:
        raise CountMismatch(f"quotas {quotas.tolist()} cannot be rounded to {total}")
    remainders = np.round(quotas - floors, 12)
    order = np.argsort(-remainders, kind="stable")
    floors[order[:residual]] += 1
    return floors


def apportion_counts(profile: CapacityProfile, qb: QueueBank, batch_size: int) -> np.ndarray:
    """Per-agent task counts for one batch.

    Targets ``max(B * alpha - q, 0)`` for constrained agents are rescaled to
    sum to ``B`` and rounded by largest remainder. Free agents get 0 here;
    they take tasks through the matching (their count is only an upper bound).
    """
    if batch_size < 1:
        raise CountMismatch("batch size must be >= 1")
    alpha = profile.as_array()
    constrained = profile.constrained
    desired = np.where(constrained, np.maximum(batch_size * alpha - qb.q, 0.0), 0.0)
    if desired.sum() <= 0:
        desired = np.where(constrained, batch_size * alpha, 0.0)
    quotas = desired * (batch_size / desired.sum())
    return largest_remainder(quotas, batch_size)


# -- matching --------------------------------------------------------------------


@dataclass
class BatchPlan:
    counts: np.ndarray
    assignment: np.ndarray
    total_score: float
    assigned_scores: np.ndarray
    shadow_prices: np.ndarray | None = None


# above this many task-agent pairs "auto" uses the contracted solver
NETWORK_MAX_PAIRS = 2000


def assign_batch(scores, counts, free=None, solver: str = "auto") -> BatchPlan:
    """Maximize the summed score of a task-to-agent matching with fixed counts.

    ``free`` marks agents without a hard count: they can take up to ``B``
    tasks and the counts of the other agents become upper bounds.

    ``solver`` picks the flow formulation: ``"network"`` runs :func:`mcmf_solve`
    on the explicit source/task/agent/sink graph, ``"exchange"`` runs the same
    successive-shortest-path scheme on the graph contracted to agent nodes.
    Both are exact on the integer costs; they may break ties differently.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise CountMismatch("score matrix must be B x A")
    n_tasks, n_agents = scores.shape
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (n_agents,) or np.any(counts < 0):
        raise CountMismatch(f"need {n_agents} nonnegative counts, got {counts.tolist()}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if np.any(np.abs(scores) > MAX_ABS_SCORE):
        raise ScoreOverflow(f"|score| exceeds {MAX_ABS_SCORE:g}; cost scaling would overflow")
    free = np.zeros(n_agents, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    caps = np.where(free, n_tasks, counts)
    if not free.any() and int(counts.sum()) != n_tasks:
        raise CountMismatch(f"counts {counts.tolist()} do not sum to batch size {n_tasks}")
    if int(caps.sum()) < n_tasks:
        raise Infeasible(f"capacities {caps.tolist()} cannot hold {n_tasks} tasks")
    int_cost = -np.rint(scores * COST_SCALE).astype(np.int64)
    if solver == "auto":
        solver = "network" if n_tasks * n_agents <= NETWORK_MAX_PAIRS else "exchange"
    if solver == "network":
        assignment, pot = _solve_network(int_cost, caps)
    elif solver == "exchange":
        assignment, pot = _solve_exchange(int_cost, caps)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    realized = np.bincount(assignment, minlength=n_agents)
    assigned = scores[np.arange(n_tasks), assignment]
    lam = -np.asarray(pot, dtype=float) / COST_SCALE
    lam -= lam.min()
    return BatchPlan(realized, assignment, float(assigned.sum()), assigned, lam)


def _solve_network(int_cost: np.ndarray, caps: np.ndarray):
    n_tasks, n_agents = int_cost.shape
    source, sink = 0, 1
    net = FlowNetwork(2 + n_tasks + n_agents, source, sink)
    task_node = 2
    agent_node = 2 + n_tasks
    task_arcs = np.empty((n_tasks, n_agents), dtype=np.int64)
    for i in range(n_tasks):
        net.add_arc(source, task_node + i, 1, 0)
        for a in range(n_agents):
            task_arcs[i, a] = net.add_arc(task_node + i, agent_node + a, 1, int(int_cost[i, a]))
    for a in range(n_agents):
        net.add_arc(agent_node + a, sink, int(caps[a]), 0)
    flow, _ = mcmf_solve(net)
    if flow != n_tasks:
        raise Infeasible(f"only {flow} of {n_tasks} tasks could be placed")

    assignment = np.empty(n_tasks, dtype=np.int64)
    for i in range(n_tasks):
        for a in range(n_agents):
            if net.flow_on(int(task_arcs[i, a])):
                assignment[i] = a
                break
    return assignment, net.potentials[agent_node:agent_node + n_agents]


def _solve_exchange(int_cost: np.ndarray, caps: np.ndarray):
    """Successive shortest paths with task nodes contracted away.

    Tasks enter one at a time. A path enters at some agent and may bump one
    resident task to another agent per hop; hop ``a -> b`` costs the cheapest
    ``cost[u, b] - cost[u, a]`` over tasks ``u`` held by ``a``, read from a
    lazily pruned heap. The residual graph never has a negative cycle, so
    Bellman-Ford over the agents finds each shortest path.
    """
    n_tasks, n_agents = int_cost.shape
    cost = int_cost.tolist()
    caps = [int(c) for c in caps]
    owner = [-1] * n_tasks
    load = [0] * n_agents
    heaps = [[[] for _ in range(n_agents)] for _ in range(n_agents)]

    def place(u: int, a: int) -> None:
        owner[u] = a
        row = cost[u]
        for b in range(n_agents):
            if b != a:
                heapq.heappush(heaps[a][b], (row[b] - row[a], u))

    def hop(a: int, b: int):
        h = heaps[a][b]
        while h and owner[h[0][1]] != a:
            heapq.heappop(h)
        return h[0] if h else None

    def shortest(dist: list, pred: list, via: list) -> None:
        for _ in range(n_agents):
            changed = False
            for a in range(n_agents):
                if dist[a] == _INF:
                    continue
                for b in range(n_agents):
                    if a == b:
                        continue
                    top = hop(a, b)
                    if top is not None and dist[a] + top[0] < dist[b]:
                        dist[b] = dist[a] + top[0]
                        pred[b] = a
                        via[b] = top[1]
                        changed = True
            if not changed:
                return
        raise Infeasible("negative cycle in the exchange graph")

    for t in range(n_tasks):
        dist = list(cost[t])
        pred = [-1] * n_agents
        via = [-1] * n_agents
        shortest(dist, pred, via)
        end, best = -1, _INF
        for a in range(n_agents):
            if load[a] < caps[a] and dist[a] < best:
                end, best = a, dist[a]
        if end < 0:
            raise Infeasible(f"no spare capacity for task {t}")
        load[end] += 1
        moves = []
        b = end
        while pred[b] >= 0:
            moves.append((via[b], b))
            b = pred[b]
        for u, dest in moves:
            place(u, dest)
        place(t, b)

    # agent potentials from distances out of a zero-cost virtual root
    dist = [0] * n_agents
    shortest(dist, [-1] * n_agents, [-1] * n_agents)
    return np.array(owner, dtype=np.int64), dist


def write_batch_plans(plans: Sequence[BatchPlan], stream: BinaryIO) -> None:
    """CSV ``batch_index,task_index,agent,score`` with 1-based agents."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["batch_index", "task_index", "agent", "score"])
    task = 0
    for b, plan in enumerate(plans):
        for a, s in zip(plan.assignment, plan.assigned_scores):
            w.writerow([b, task, int(a) + 1, repr(float(s))])
            task += 1
    stream.write(buf.getvalue().encode("utf-8"))


__all__ = [
    "BatchPlan",
    "FlowNetwork",
    "apportion_counts",
    "assign_batch",
    "largest_remainder",
    "mcmf_solve",
    "write_batch_plans",
]
