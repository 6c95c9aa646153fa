"""Benchmark game constructors and the phase-length sweep experiment driver."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .game import (
    JointPolicy,
    StochasticGame,
    joint_policy_count,
    joint_policy_from_index,
    load_game,
)
from .qlearning import LearnerParams, PhaseSchedule, RunRecord, run_alg1, run_alg2, run_coupled
from .replygraph import certify_weak_acyclicity, build_reply_graph, equilibria

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PdParams:
    """Stage payoffs and dynamics of the two-state dilemma benchmark.

    a, b, c are stage utilities (maximized) with b > c > 0 > a; gamma is the
    probability the state fails to track last period's outcome; beta is the
    common discount factor.
    """

    a: float = -1.0
    b: float = 2.0
    c: float = 1.0
    gamma: float = 0.3
    beta: float = 0.8

    def __post_init__(self):
        if not self.b > self.c > 0.0 > self.a:
            raise ValueError(f"need b > c > 0 > a, got b={self.b}, c={self.c}, a={self.a}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


def build_pd_game(params: PdParams = PdParams()) -> StochasticGame:
    """Two players, two states, two actions (0 = cooperate, 1 = defect).

    State 0 signals mutual cooperation last period (correctly with
    probability 1 - gamma).  Stage utilities are stored negated, as costs.
    """
    a, b, c, gamma = params.a, params.b, params.c, params.gamma
    # utility[own, opponent]
    utility = np.array([[c, a], [b, 0.0]])
    costs = np.empty((2, 2, 2, 2))
    for u1 in range(2):
        for u2 in range(2):
            costs[0, :, u1, u2] = -utility[u1, u2]
            costs[1, :, u1, u2] = -utility[u2, u1]

    kernel = np.empty((2, 2, 2, 2))
    for u1 in range(2):
        for u2 in range(2):
            p_coop_state = 1.0 - gamma if (u1, u2) == (0, 0) else gamma
            kernel[:, u1, u2, 0] = p_coop_state
            kernel[:, u1, u2, 1] = 1.0 - p_coop_state

    return StochasticGame(
        costs=costs,
        kernel=kernel,
        discounts=np.array([params.beta, params.beta]),
        initial_dist=np.array([0.5, 0.5]),
    )


def build_fig7_game(a: float = 1.0, beta: float = 0.5) -> StochasticGame:
    """Three-player single-state coordination game with a best-reply trap.

    Players 0 and 1 pick among three actions, player 2 among two; the cost
    triples are chosen so that no single-player improvement path leads to
    the unique equilibrium (1, 2, 1) from a six-node cycle, while
    simultaneous deviations escape it.  a > 0 scales all costs.
    """
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    # cost triples indexed [u0][u1] for player 2's choice 0 and 1
    m = [
        [
            [(-a, 0, 0), (0, a, 0), (0, -a, -a)],
            [(a, 0, 0), (-a, -a, 0), (a, 0, 0)],
            [(0, -a, -a), (0, a, 0), (-a, 0, -a)],
        ],
        [
            [(0, -a, -a), (0, 0, 0), (0, 0, 0)],
            [(a, 0, 0), (-a, 0, -a), (-a, -a, -a)],
            [(-a, -a, 0), (0, 0, 0), (0, 0, 0)],
        ],
    ]
    costs = np.empty((3, 1, 3, 3, 2))
    for u2 in range(2):
        for u0 in range(3):
            for u1 in range(3):
                for dm in range(3):
                    costs[dm, 0, u0, u1, u2] = m[u2][u0][u1][dm]
    kernel = np.ones((1, 3, 3, 2, 1))
    return StochasticGame(
        costs=costs,
        kernel=kernel,
        discounts=np.full(3, beta),
        initial_dist=np.array([1.0]),
    )


def random_team_game(
    num_states: int, num_actions: int, num_dms: int, seed: int, beta: float = 0.8
) -> StochasticGame:
    """All players share one uniform-random cost tensor and discount factor;
    kernel rows are normalized positive draws, so every transition has full
    support."""
    rng = np.random.default_rng(seed)
    acts = (num_actions,) * num_dms
    shared = rng.random((num_states, *acts))
    costs = np.broadcast_to(shared, (num_dms, num_states, *acts)).copy()
    raw = rng.random((num_states, *acts, num_states)) + 1e-3
    kernel = raw / raw.sum(axis=-1, keepdims=True)
    return StochasticGame(
        costs=costs,
        kernel=kernel,
        discounts=np.full(num_dms, beta),
        initial_dist=np.full(num_states, 1.0 / num_states),
    )


def random_game(
    num_states: int, num_actions: int, num_dms: int, seed: int,
    beta_range: tuple[float, float] = (0.3, 0.9),
) -> StochasticGame:
    """Independent uniform costs per player; used as a property-test corpus."""
    rng = np.random.default_rng(seed)
    acts = (num_actions,) * num_dms
    costs = rng.uniform(-1.0, 1.0, (num_dms, num_states, *acts))
    raw = rng.random((num_states, *acts, num_states)) + 1e-3
    kernel = raw / raw.sum(axis=-1, keepdims=True)
    discounts = rng.uniform(*beta_range, num_dms)
    return StochasticGame(
        costs=costs,
        kernel=kernel,
        discounts=discounts,
        initial_dist=np.full(num_states, 1.0 / num_states),
    )


@dataclass
class Table1Row:
    """One aggregate of a phase-length sweep: fraction of phase snapshots at
    an equilibrium, and agreeing with the coupled exact process."""

    T: int
    frac_eq: float
    frac_agree: float


@dataclass
class ExperimentConfig:
    """Protocol for the coupled phase-length sweep.

    starts = None means every deterministic joint policy; seeds are derived
    per (T, start, seed index) from master_seed, so output never depends on
    worker scheduling.
    """

    t_values: tuple[int, ...] = (10, 25, 50, 100, 1000, 10000, 50000)
    num_updates: int = 1000
    starts: tuple[int, ...] | None = None
    seeds_per_start: int = 1
    master_seed: int = 0
    params: LearnerParams = field(default_factory=LearnerParams)
    pd: PdParams = field(default_factory=PdParams)
    game_path: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        preset = doc.pop("preset", None)
        cfg = cls()
        if preset == "reduced":
            # CI-sized sweep; not the benchmark protocol
            cfg = replace(cfg, t_values=(10, 100, 1000), num_updates=100)
        elif preset not in (None, "full"):
            raise ValueError(f"unknown preset {preset!r}")
        if "t_values" in doc:
            cfg = replace(cfg, t_values=tuple(int(t) for t in doc.pop("t_values")))
        for key in ("num_updates", "seeds_per_start", "master_seed"):
            if key in doc:
                cfg = replace(cfg, **{key: int(doc.pop(key))})
        if "starts" in doc:
            raw = doc.pop("starts")
            cfg = replace(cfg, starts=None if raw == "all" else tuple(int(s) for s in raw))
        if "params" in doc:
            cfg = replace(cfg, params=LearnerParams(**doc.pop("params")))
        if "pd" in doc:
            cfg = replace(cfg, pd=PdParams(**doc.pop("pd")))
        if "game" in doc:
            cfg = replace(cfg, game_path=str(doc.pop("game")))
        if doc:
            raise ValueError(f"unknown config keys: {sorted(doc)}")
        return cfg

    def resolve_game(self) -> StochasticGame:
        if self.game_path is not None:
            return load_game(self.game_path)
        return build_pd_game(self.pd)


def verify_pd_structure(game: StochasticGame) -> tuple[list[int], bool]:
    """Pre-flight for the dilemma benchmark: equilibrium IDs plus whether the
    game shows the documented two-equilibrium structure (always-defect and
    cooperate-on-signal).  That structure requires beta*(1-2*gamma) >= 1/2,
    so it disappears for noisy state transitions; the sweep itself only
    needs a nonempty equilibrium set and best-reply weak acyclicity.
    """
    eq = equilibria(game)
    if not eq:
        raise ValueError("benchmark game has no deterministic equilibrium")
    cert = certify_weak_acyclicity(build_reply_graph(game, "best-single"))
    if not cert.weakly_acyclic:
        raise ValueError("benchmark game is not weakly acyclic under strict best replies")
    defect = JointPolicy.from_actions([(1, 1), (1, 1)])
    coop = JointPolicy.from_actions([(0, 1), (0, 1)])
    from .game import joint_policy_index

    expected = sorted(
        (joint_policy_index(game, coop), joint_policy_index(game, defect))
    )
    matches = eq == expected
    if not matches:
        log.warning(
            "benchmark equilibria are %s, not the documented pair %s; "
            "fractions will be measured against the computed set",
            eq, expected,
        )
    return eq, matches


def _coupled_cell(args):
    game, params, T, start_id, seed_idx, num_updates, master_seed, eq_ids = args
    seed = np.random.SeedSequence([master_seed, T, start_id, seed_idx])
    records = run_coupled(
        game, PhaseSchedule.constant(T), params,
        joint_policy_from_index(game, start_id), num_updates, seed,
        equilibrium_ids=eq_ids,
    )
    n = len(records)
    eq_sum = sum(1 for r in records if r.at_equilibrium)
    agree_sum = sum(1 for r in records if r.agree)
    return (T, start_id, seed_idx), (eq_sum, agree_sum, n)


def _run_cells(worker, cells, threads: int):
    results = {}
    if threads <= 1:
        for cell in cells:
            key, value = worker(cell)
            results[key] = value
            log.info("cell %s done", key)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for key, value in pool.map(worker, cells, chunksize=1):
                results[key] = value
                log.info("cell %s done", key)
    return results


def table1_experiment(config: ExperimentConfig, threads: int = 1) -> list[Table1Row]:
    """For each phase length T: run the coupled learner from every start and
    seed, and average the per-snapshot equilibrium and agreement indicators
    uniformly over cells."""
    game = config.resolve_game()
    eq_ids, _ = verify_pd_structure(game)
    eq_ids = frozenset(eq_ids)
    starts = config.starts
    if starts is None:
        starts = tuple(range(joint_policy_count(game)))

    cells = [
        (game, config.params, T, start, s, config.num_updates, config.master_seed, eq_ids)
        for T in config.t_values
        for start in starts
        for s in range(config.seeds_per_start)
    ]
    results = _run_cells(_coupled_cell, cells, threads)

    rows = []
    for T in config.t_values:
        keys = sorted(k for k in results if k[0] == T)
        fracs_eq = [results[k][0] / results[k][2] for k in keys]
        fracs_agree = [results[k][1] / results[k][2] for k in keys]
        rows.append(Table1Row(T, float(np.mean(fracs_eq)), float(np.mean(fracs_agree))))
    return rows


def _learner_cell(args):
    (game, params, schedule, start_id, seed_idx, num_updates, master_seed,
     eq_ids, algorithm) = args
    seed = np.random.SeedSequence([master_seed, schedule.base, start_id, seed_idx])
    runner = {"alg1": run_alg1, "alg2": run_alg2, "coupled": run_coupled}[algorithm]
    records = runner(
        game, schedule, params, joint_policy_from_index(game, start_id),
        num_updates, seed, equilibrium_ids=eq_ids,
    )
    return (start_id, seed_idx), records


def run_learner_cells(
    game: StochasticGame,
    schedule: PhaseSchedule,
    params: LearnerParams,
    starts,
    seeds_per_start: int,
    num_updates: int,
    master_seed: int,
    algorithm: str,
    threads: int = 1,
) -> list[tuple[int, int, RunRecord]]:
    """Fan independent (start, seed) runs over a worker pool; rows come back
    sorted by (seed, start, phase) regardless of scheduling."""
    eq_ids = frozenset(equilibria(game))
    cells = [
        (game, params, schedule, start, s, num_updates, master_seed, eq_ids, algorithm)
        for start in starts
        for s in range(seeds_per_start)
    ]
    results = _run_cells(_learner_cell, cells, threads)
    rows = []
    for (start_id, seed_idx), records in sorted(
        results.items(), key=lambda kv: (kv[0][1], kv[0][0])
    ):
        for rec in records:
            rows.append((seed_idx, start_id, rec))
    return rows
