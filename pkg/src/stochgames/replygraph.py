"""Directed graphs of strict improvement steps over deterministic joint policies.

Nodes are joint policies in enumeration order; an edge means the deviating
player(s) each switch to a strict best (or better) reply evaluated against
the pre-deviation joint policy.  Sinks are exactly the deterministic
equilibria, and a game is certified weakly acyclic when every node has a
path to a sink.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .game import (
    DeterministicPolicy,
    JointPolicy,
    StochasticGame,
    enumerate_joint_policies,
    enumerate_own_policies,
    joint_policy_index,
)
from .solver import (
    DEFAULT_TIE_TOL,
    DEFAULT_TOL,
    greedy_action_sets,
    optimal_q_factors,
    policies_from_action_sets,
    policy_value,
)

VARIANTS = ("best-single", "better-single", "best-multi", "better-multi")


@dataclass
class ReplyGraph:
    variant: str
    nodes: list[JointPolicy]
    # edges[src] = list of (dst, deviating player ids), sorted by dst
    edges: list[list[tuple[int, frozenset[int]]]]

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def targets(self, src: int) -> list[int]:
        return [dst for dst, _ in self.edges[src]]

    def edge_pairs(self) -> set[tuple[int, int]]:
        return {(src, dst) for src, outs in enumerate(self.edges) for dst, _ in outs}

    def sinks(self) -> list[int]:
        return [k for k, outs in enumerate(self.edges) if not outs]


@dataclass
class AcyclicityCertificate:
    weakly_acyclic: bool
    equilibria: list[int]
    # shortest node-id path to a sink for every node that has one
    witness_paths: dict[int, list[int]] = field(default_factory=dict)
    max_shortest_path: int = 0

    @property
    def L(self) -> int:
        return self.max_shortest_path

    def unreachable(self) -> list[int]:
        return sorted(k for k in range(self._num_nodes) if k not in self.witness_paths)

    _num_nodes: int = 0


class ReplyOracle:
    """Caches the per-player exact computations a graph build needs.

    Best-reply sets depend only on (player, opponents' actions) and value
    vectors only on (player, joint actions), so sharing them across nodes
    turns the build from quadratic-ish into a handful of solves.
    """

    def __init__(self, game: StochasticGame, tol=DEFAULT_TOL, tie_tol=DEFAULT_TIE_TOL):
        self.game = game
        self.tol = tol
        self.tie_tol = tie_tol
        self._greedy: dict = {}
        self._values: dict = {}
        self._own = [enumerate_own_policies(game, i) for i in range(game.num_dms)]

    def greedy_sets(self, dm: int, joint: JointPolicy) -> list[list[int]]:
        key = (dm, tuple(p.actions for p in joint.opponents(dm)))
        if key not in self._greedy:
            table = optimal_q_factors(self.game, dm, joint.opponents(dm), self.tol)
            self._greedy[key] = greedy_action_sets(table.q, self.tie_tol)
        return self._greedy[key]

    def best_replies(self, dm: int, joint: JointPolicy) -> list[DeterministicPolicy]:
        return policies_from_action_sets(dm, self.greedy_sets(dm, joint))

    def is_best_reply(self, dm: int, joint: JointPolicy) -> bool:
        sets = self.greedy_sets(dm, joint)
        return all(joint.policies[dm].actions[x] in s for x, s in enumerate(sets))

    def value(self, dm: int, joint: JointPolicy) -> np.ndarray:
        key = (dm, joint.actions)
        if key not in self._values:
            self._values[key] = policy_value(self.game, dm, joint).j
        return self._values[key]

    def strict_best_replies(self, dm: int, joint: JointPolicy) -> list[DeterministicPolicy]:
        if self.is_best_reply(dm, joint):
            return []
        j_cur = self.value(dm, joint)
        out = []
        for cand in self.best_replies(dm, joint):
            j_new = self.value(dm, joint.replace(dm, cand))
            if np.any(j_new < j_cur - self.tie_tol):
                out.append(cand)
        return out

    def strict_better_replies(self, dm: int, joint: JointPolicy) -> list[DeterministicPolicy]:
        j_cur = self.value(dm, joint)
        out = []
        for cand in self._own[dm]:
            j_new = self.value(dm, joint.replace(dm, cand))
            if np.all(j_new <= j_cur + self.tie_tol) and np.any(j_new < j_cur - self.tie_tol):
                out.append(cand)
        return out

    def is_equilibrium(self, joint: JointPolicy) -> bool:
        return all(self.is_best_reply(i, joint) for i in range(self.game.num_dms))


def build_reply_graph(
    game: StochasticGame,
    variant: str,
    tol: float = DEFAULT_TOL,
    tie_tol: float = DEFAULT_TIE_TOL,
    oracle: ReplyOracle | None = None,
) -> ReplyGraph:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if oracle is None:
        oracle = ReplyOracle(game, tol, tie_tol)
    nodes = enumerate_joint_policies(game)
    best = variant.startswith("best")
    multi = variant.endswith("multi")
    num_dms = game.num_dms

    edges: list[list[tuple[int, frozenset[int]]]] = []
    for joint in nodes:
        if best:
            candidates = [oracle.strict_best_replies(i, joint) for i in range(num_dms)]
        else:
            candidates = [oracle.strict_better_replies(i, joint) for i in range(num_dms)]
        movers = [i for i in range(num_dms) if candidates[i]]
        outs: list[tuple[int, frozenset[int]]] = []
        if multi:
            subsets: list[tuple[int, ...]] = []
            for r in range(1, len(movers) + 1):
                subsets.extend(itertools.combinations(movers, r))
        else:
            subsets = [(i,) for i in movers]
        for subset in subsets:
            for combo in itertools.product(*(candidates[i] for i in subset)):
                target = joint
                for pol in combo:
                    target = target.replace(pol.dm, pol)
                outs.append((joint_policy_index(game, target), frozenset(subset)))
        outs.sort(key=lambda e: (e[0], sorted(e[1])))
        edges.append(outs)
    return ReplyGraph(variant, nodes, edges)


def certify_weak_acyclicity(graph: ReplyGraph) -> AcyclicityCertificate:
    """Reverse BFS from the sink set; witness paths are shortest."""
    n = graph.num_nodes
    reverse: list[list[int]] = [[] for _ in range(n)]
    for src in range(n):
        for dst, _ in graph.edges[src]:
            reverse[dst].append(src)

    sinks = graph.sinks()
    dist = {k: 0 for k in sinks}
    next_hop: dict[int, int] = {}
    queue = deque(sinks)
    while queue:
        v = queue.popleft()
        for u in reverse[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                next_hop[u] = v
                queue.append(u)

    witness: dict[int, list[int]] = {}
    for k in dist:
        path = [k]
        while path[-1] in next_hop:
            path.append(next_hop[path[-1]])
        witness[k] = path

    cert = AcyclicityCertificate(
        weakly_acyclic=len(dist) == n,
        equilibria=sorted(sinks),
        witness_paths=witness,
        max_shortest_path=max(dist.values(), default=0),
    )
    cert._num_nodes = n
    return cert


def equilibria(
    game: StochasticGame, tol: float = DEFAULT_TOL, tie_tol: float = DEFAULT_TIE_TOL
) -> list[int]:
    """Node IDs of all deterministic equilibria.

    Sinks of the strict-best-reply graph, cross-validated against per-player
    best-reply membership; the two must agree by construction.
    """
    oracle = ReplyOracle(game, tol, tie_tol)
    graph = build_reply_graph(game, "best-single", tol, tie_tol, oracle)
    sinks = graph.sinks()
    for k in sinks:
        if not oracle.is_equilibrium(graph.nodes[k]):
            raise AssertionError(
                f"sink {k} failed the best-reply membership cross-check"
            )
    return sorted(sinks)


def export_dot(graph: ReplyGraph) -> str:
    """Plain-text digraph description for visualization tools."""
    lines = [f'digraph "{graph.variant}" {{']
    for k, joint in enumerate(graph.nodes):
        label = ";".join(",".join(map(str, row)) for row in joint.actions)
        shape = "doublecircle" if not graph.edges[k] else "circle"
        lines.append(f'  n{k} [label="{k}:{label}" shape={shape}];')
    for src in range(graph.num_nodes):
        for dst, devs in graph.edges[src]:
            dev = ",".join(map(str, sorted(devs)))
            lines.append(f'  n{src} -> n{dst} [label="{dev}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
