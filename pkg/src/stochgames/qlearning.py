"""Decentralized tabular Q-learning over synchronized exploration phases.

Players hold baseline policies fixed for a phase of T steps while learning
Q-factors from their own costs and the shared state, then update their
policies with inertia: either onto near-greedy sets of the learned table
(best-reply style), or by accepting a randomly drawn experimental policy
whose learned table beats the baseline's by a tolerance (better-reply
style, two tables per player).

Randomness layout, fixed for reproducibility: a master seed is split into a
simulation stream (initial state, then T*(N+1) uniforms per phase consumed
as player-1 action ... player-N action, transition per step) and an update
stream (two uniforms per player per phase end: inertia/acceptance, then
candidate selection; the better-reply variant also draws one uniform per
player up front for the first experimental policy).  The coupled runner
feeds the same update draws to an exact best-reply process so that the two
trajectories coincide whenever the learned tables rank policies exactly.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from weakref import WeakKeyDictionary

import numpy as np

from . import _kernels
from .game import (
    DeterministicPolicy,
    JointPolicy,
    RandomizedPolicy,
    StochasticGame,
    joint_action_strides,
    joint_policy_index,
    perturb,
    reachability_check,
    transition_cdfs,
)
from .replygraph import ReplyOracle, equilibria
from .solver import (
    DEFAULT_TIE_TOL,
    DEFAULT_TOL,
    QTable,
    greedy_action_sets,
    optimal_q_factors,
)

RESET_MODES = ("keep", "project", "zero")


@dataclass(frozen=True)
class LearnerParams:
    """Per-player learning knobs.

    rho: per-step probability of playing a uniform action instead of the
    baseline; lam: inertia, probability of keeping the policy when a change
    is indicated; delta: slack defining the near-greedy policy set (or the
    acceptance margin in the two-table variant); step_exponent r gives step
    sizes 1/n**r on the n-th visit of a cell within a phase; q_box bounds
    tables to [-q_box, q_box] (None derives 2*max|c|/(1-beta) from the
    game); reset_mode says what happens to tables after a policy update.
    """

    rho: float = 0.1
    lam: float = 0.5
    delta: float = 0.0
    step_exponent: float = 0.51
    q_box: float | None = None
    reset_mode: str = "keep"

    def validate(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.delta == 0.0:
            warnings.warn(
                "delta = 0 keeps only exact argmins; any estimation noise can "
                "knock the policy off an equilibrium",
                stacklevel=2,
            )
        if not 0.5 < self.step_exponent <= 1.0:
            raise ValueError(
                f"step_exponent must lie in (1/2, 1], got {self.step_exponent}"
            )
        if self.q_box is not None and self.q_box <= 0.0:
            raise ValueError(f"q_box must be positive, got {self.q_box}")
        if self.reset_mode not in RESET_MODES:
            raise ValueError(f"reset_mode must be one of {RESET_MODES}")

    def box_for(self, game: StochasticGame, dm: int) -> float:
        bound = game.value_bound(dm)
        if self.q_box is None:
            return 2.0 * bound
        if self.q_box < bound:
            raise ValueError(
                f"q_box {self.q_box} for dm={dm} is below the fixed-point bound {bound}"
            )
        return self.q_box


@dataclass(frozen=True)
class PhaseSchedule:
    """Exploration-phase lengths T_0, T_1, ...; every length is >= 1."""

    kind: str
    base: int = 0
    increment: int = 0
    values: tuple[int, ...] = ()

    @classmethod
    def constant(cls, T: int) -> "PhaseSchedule":
        if T < 1:
            raise ValueError("phase length must be >= 1")
        return cls("constant", base=int(T))

    @classmethod
    def linear(cls, base: int, increment: int) -> "PhaseSchedule":
        if base < 1 or increment < 0:
            raise ValueError("linear schedule needs base >= 1 and increment >= 0")
        return cls("linear", base=int(base), increment=int(increment))

    @classmethod
    def explicit(cls, values) -> "PhaseSchedule":
        values = tuple(int(v) for v in values)
        if not values or any(v < 1 for v in values):
            raise ValueError("explicit schedule needs at least one length >= 1")
        return cls("explicit", values=values)

    def length(self, k: int) -> int:
        if self.kind == "constant":
            return self.base
        if self.kind == "linear":
            return self.base + self.increment * k
        if k >= len(self.values):
            raise IndexError(
                f"explicit schedule has {len(self.values)} lengths, phase {k} requested"
            )
        return self.values[k]


@dataclass
class LearnerState:
    """One player's mutable learning state."""

    dm: int
    policy: tuple[int, ...]
    q: np.ndarray
    counts: np.ndarray
    exp_policy: tuple[int, ...] | None = None
    q_hat: np.ndarray | None = None

    def q_table(self) -> QTable:
        return QTable(self.dm, self.q.copy())


@dataclass
class PhaseTrace:
    end_state: int
    visits: np.ndarray
    states: np.ndarray | None = None
    actions: np.ndarray | None = None


@dataclass
class RunRecord:
    """Baseline joint policy held entering a phase (the final record carries
    the policy left standing after the last update)."""

    phase: int
    policy_id: int
    at_equilibrium: bool | None
    agree: bool | None = None
    exact_policy_id: int | None = None
    q_err: tuple[float, ...] | None = None


class _SeqDraws:
    """Feed pre-drawn uniforms to code written against rng.random()."""

    __slots__ = ("_vals", "_pos")

    def __init__(self, vals):
        self._vals = vals
        self._pos = 0

    def random(self) -> float:
        v = self._vals[self._pos]
        self._pos += 1
        return float(v)


_TABLE_CACHE: WeakKeyDictionary = WeakKeyDictionary()


def _kernel_tables(game: StochasticGame):
    cached = _TABLE_CACHE.get(game)
    if cached is None:
        flat_costs = np.ascontiguousarray(
            game.costs.reshape(game.num_dms, game.num_states, -1)
        )
        cdf = transition_cdfs(game)
        strides = np.asarray(joint_action_strides(game.action_counts), dtype=np.int64)
        nacts = np.asarray(game.action_counts, dtype=np.int64)
        cached = (flat_costs, cdf, strides, nacts)
        _TABLE_CACHE[game] = cached
    return cached


def _draw_initial_state(game: StochasticGame, rng) -> int:
    cdf = np.cumsum(game.initial_dist)
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def _normalize_params(game, params) -> list[LearnerParams]:
    if isinstance(params, LearnerParams):
        params = [params] * game.num_dms
    params = list(params)
    if len(params) != game.num_dms:
        raise ValueError(f"need one LearnerParams per player ({game.num_dms})")
    for p in params:
        p.validate()
    return params


# ---------------------------------------------------------------------------
# single-player learning


def single_dm_q_learning(
    game: StochasticGame,
    behavior: RandomizedPolicy,
    steps: int,
    step_exponent: float = 0.51,
    seed=0,
    *,
    eval_policy: DeterministicPolicy | None = None,
    initial_q: np.ndarray | None = None,
    cost_noise_width: float = 0.0,
) -> QTable:
    """Asynchronous tabular learning of one player's Q-factors.

    The behavior policy must put positive probability on every action in
    every state; visit counters persist across the whole run.
    """
    if game.num_dms != 1:
        raise ValueError("game must have exactly one player")
    if not 0.5 < step_exponent <= 1.0:
        raise ValueError(f"step_exponent must lie in (1/2, 1], got {step_exponent}")
    if behavior.dist.shape != (game.num_states, game.action_counts[0]):
        raise ValueError("behavior policy shape does not match the game")
    if np.any(behavior.dist <= 0.0):
        raise ValueError("behavior policy must give positive probability to every action")

    x_count, u_count = game.num_states, game.action_counts[0]
    q = np.zeros((x_count, u_count)) if initial_q is None else np.array(initial_q, dtype=np.float64)
    counts = np.zeros((x_count, u_count), dtype=np.int64)

    behavior_cdf = np.cumsum(behavior.dist, axis=1)
    behavior_cdf[:, -1] = 1.0
    flat_costs, cdf, _, _ = _kernel_tables(game)

    rng = np.random.default_rng(seed)
    x = _draw_initial_state(game, rng)
    draws = rng.random(steps * 3)
    if eval_policy is not None:
        eval_actions = np.asarray(eval_policy.actions, dtype=np.int64)
        policy_mode = 1
    else:
        eval_actions = np.zeros(x_count, dtype=np.int64)
        policy_mode = 0
    _kernels.run_single(
        x, steps, draws,
        np.ascontiguousarray(behavior_cdf), flat_costs[0], cdf,
        float(game.discounts[0]), float(step_exponent),
        q, counts, eval_actions, policy_mode, float(cost_noise_width),
    )
    return QTable(0, q)


def policy_eval_q_learning(
    game: StochasticGame,
    behavior: RandomizedPolicy,
    eval_policy: DeterministicPolicy,
    steps: int,
    step_exponent: float = 0.51,
    seed=0,
    **kwargs,
) -> QTable:
    """Learn the Q-factors of a fixed policy: the continuation at the next
    state reads the table at eval_policy(x') instead of the minimum."""
    return single_dm_q_learning(
        game, behavior, steps, step_exponent, seed,
        eval_policy=eval_policy, **kwargs,
    )


# ---------------------------------------------------------------------------
# phase simulation


def init_learner_states(
    game: StochasticGame,
    start: JointPolicy,
    params: list[LearnerParams],
    *,
    two_tables: bool = False,
    initial_q: float | np.ndarray = 0.0,
) -> list[LearnerState]:
    states = []
    for i in range(game.num_dms):
        shape = (game.num_states, game.action_counts[i])
        if np.isscalar(initial_q):
            q = np.full(shape, float(initial_q))
        else:
            q = np.array(initial_q[i], dtype=np.float64)
        box = params[i].box_for(game, i)
        if np.abs(q).max() > box:
            raise ValueError(f"initial table for dm={i} lies outside its box {box}")
        states.append(
            LearnerState(
                dm=i,
                policy=start.policies[i].actions,
                q=q,
                counts=np.zeros(shape, dtype=np.int64),
                q_hat=q.copy() if two_tables else None,
            )
        )
    return states


def _stacked(game, states, attr):
    umax = max(game.action_counts)
    out = np.zeros((game.num_dms, game.num_states, umax))
    for i, st in enumerate(states):
        arr = getattr(st, attr)
        out[i, :, : arr.shape[1]] = arr
    return out


def _unstack(game, states, stacked, attr):
    for i, st in enumerate(states):
        arr = getattr(st, attr)
        arr[:, :] = stacked[i, :, : arr.shape[1]]


def _run_phase(game, x0, states, params, T, rng, *, two_tables, hat_self, collect):
    flat_costs, cdf, strides, nacts = _kernel_tables(game)
    n = game.num_dms
    umax = int(nacts.max())

    baseline = np.asarray([st.policy for st in states], dtype=np.int64)
    if two_tables:
        exp_pol = np.asarray([st.exp_policy for st in states], dtype=np.int64)
    else:
        exp_pol = np.zeros((n, game.num_states), dtype=np.int64)

    q = _stacked(game, states, "q")
    qhat = _stacked(game, states, "q_hat") if two_tables else np.zeros_like(q)
    counts = np.zeros((n, game.num_states, umax), dtype=np.int64)

    rho = np.asarray([p.rho for p in params])
    rexp = np.asarray([p.step_exponent for p in params])
    draws = rng.random(T * (n + 1))
    out_x = np.zeros(T if collect else 0, dtype=np.int64)
    out_a = np.zeros((T if collect else 0, n), dtype=np.int64)

    end_state = _kernels.run_phase(
        x0, T, draws, baseline, exp_pol, rho, nacts, strides,
        flat_costs, cdf, game.discounts, rexp,
        q, qhat, counts,
        1 if two_tables else 0, 1 if hat_self else 0,
        1 if collect else 0, out_x, out_a,
    )

    _unstack(game, states, q, "q")
    if two_tables:
        _unstack(game, states, qhat, "q_hat")
    for i, st in enumerate(states):
        st.counts[:, :] = counts[i, :, : st.counts.shape[1]]

    return PhaseTrace(
        end_state=int(end_state),
        visits=counts,
        states=out_x if collect else None,
        actions=out_a if collect else None,
    )


def alg1_phase(game, x0, states, params, T, rng, collect=False) -> PhaseTrace:
    """One exploration phase of the near-best-reply learner: every player
    plays its baseline with probability 1 - rho (else uniform) and runs the
    optimizing asynchronous recursion.  Visit counters restart at the phase
    boundary, so a cell's first update within the phase uses step size 1."""
    if T < 1:
        raise ValueError("phase length must be >= 1")
    params = _normalize_params(game, params)
    for st in states:
        st.counts[:, :] = 0
    return _run_phase(
        game, x0, states, params, T, rng,
        two_tables=False, hat_self=False, collect=collect,
    )


def alg2_phase(game, x0, states, params, T, rng, collect=False, hat_self=False) -> PhaseTrace:
    """One exploration phase of the two-table learner: the baseline table
    bootstraps at the baseline's next action, the experimental table at the
    experimental policy's next action (reading the baseline table, unless
    hat_self makes it bootstrap from itself)."""
    if T < 1:
        raise ValueError("phase length must be >= 1")
    params = _normalize_params(game, params)
    for st in states:
        if st.exp_policy is None or st.q_hat is None:
            raise ValueError("two-table learning needs exp_policy and q_hat")
        st.counts[:, :] = 0
    return _run_phase(
        game, x0, states, params, T, rng,
        two_tables=True, hat_self=hat_self, collect=collect,
    )


# ---------------------------------------------------------------------------
# policy updates


def near_best_policy_sets(q: np.ndarray, delta: float) -> list[list[int]]:
    """Per-state actions within delta of the row minimum."""
    return greedy_action_sets(q, delta)


def _product_size(sets) -> int:
    size = 1
    for s in sets:
        size *= len(s)
    return size


def _decode_product(sets, index) -> tuple[int, ...]:
    out = []
    block = _product_size(sets)
    for s in sets:
        block //= len(s)
        out.append(s[index // block])
        index %= block
    return tuple(out)


def _apply_reset(state: LearnerState, params: LearnerParams, box: float) -> None:
    if params.reset_mode == "project":
        np.clip(state.q, -box, box, out=state.q)
        if state.q_hat is not None:
            np.clip(state.q_hat, -box, box, out=state.q_hat)
    elif params.reset_mode == "zero":
        state.q[:, :] = 0.0
        if state.q_hat is not None:
            state.q_hat[:, :] = 0.0


def alg1_policy_update(state: LearnerState, params: LearnerParams, rng, box: float) -> bool:
    """Inertial update onto the near-greedy set of the learned table.

    Keeps the baseline outright when it is already near-greedy; otherwise
    keeps with probability lam, else draws uniformly from the near-greedy
    set (one inertia draw, then one selection draw).  Applies the reset mode
    afterwards.  Returns whether the policy changed.
    """
    sets = near_best_policy_sets(state.q, params.delta)
    assert all(sets), "near-greedy action sets can never be empty"
    mins = state.q.min(axis=1)
    member = all(
        state.q[x, a] <= mins[x] + params.delta
        for x, a in enumerate(state.policy)
    )
    changed = False
    if not member and rng.random() >= params.lam:
        size = _product_size(sets)
        idx = int(rng.random() * size)
        if idx >= size:
            idx = size - 1
        state.policy = _decode_product(sets, idx)
        changed = True
    _apply_reset(state, params, box)
    return changed


def alg2_accepts(q_hat, q, policy, exp_policy, delta) -> bool:
    """The experimental policy's table must beat the baseline's everywhere
    within delta, and beat it by at least delta somewhere."""
    xs = range(q.shape[0])
    hat = np.array([q_hat[x, exp_policy[x]] for x in xs])
    base = np.array([q[x, policy[x]] for x in xs])
    return bool(np.all(hat <= base + delta) and np.any(hat <= base - delta))


def _own_policy_tuples(num_states: int, num_actions: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(num_actions), repeat=num_states))


def alg2_policy_update(
    state: LearnerState, params: LearnerParams, rng, box: float, num_actions: int
) -> bool:
    """Accept the experimental policy with inertia when its table passes the
    two-sided margin test, then draw a fresh experimental policy uniformly
    from the remaining ones, and apply the reset mode."""
    changed = False
    if alg2_accepts(state.q_hat, state.q, state.policy, state.exp_policy, params.delta):
        if rng.random() >= params.lam:
            state.policy = state.exp_policy
            changed = True
    candidates = [
        p for p in _own_policy_tuples(state.q.shape[0], num_actions)
        if p != state.policy
    ]
    idx = int(rng.random() * len(candidates))
    if idx >= len(candidates):
        idx = len(candidates) - 1
    state.exp_policy = candidates[idx]
    _apply_reset(state, params, box)
    return changed


# ---------------------------------------------------------------------------
# full runs


def _split_streams(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    sim_ss, upd_ss = ss.spawn(2)
    return np.random.default_rng(sim_ss), np.random.default_rng(upd_ss)


def _resolve_eq_ids(game, equilibrium_ids, record_equilibrium):
    if not record_equilibrium:
        return None
    if equilibrium_ids is None:
        return frozenset(equilibria(game))
    return frozenset(equilibrium_ids)


def _exact_q_memo(game, tol):
    memo = {}

    def lookup(dm, opponents_key, opponents):
        key = (dm, opponents_key)
        if key not in memo:
            memo[key] = optimal_q_factors(game, dm, opponents, tol).q
        return memo[key]

    return lookup


def run_alg1(
    game: StochasticGame,
    schedule: PhaseSchedule,
    params,
    start: JointPolicy,
    num_phases: int,
    seed,
    *,
    initial_q: float | np.ndarray = 0.0,
    diagnostics: bool = False,
    exact_q_injection: bool = False,
    record_equilibrium: bool = True,
    equilibrium_ids=None,
    tol: float = DEFAULT_TOL,
) -> list[RunRecord]:
    """Run the near-best-reply learner for num_phases policy updates.

    Returns num_phases + 1 records: one per phase plus the final policy.
    diagnostics adds per-player sup distances between the learned table and
    the exact Q-factors against the perturbed opponents of that phase.
    exact_q_injection overwrites each table with the exact Q-factors against
    the unperturbed opponents at every phase end (test harness hook).
    """
    records, _ = _run_learner(
        game, schedule, params, start, num_phases, seed,
        algorithm=1, initial_q=initial_q, diagnostics=diagnostics,
        exact_q_injection=exact_q_injection,
        record_equilibrium=record_equilibrium, equilibrium_ids=equilibrium_ids,
        coupled=False, tol=tol,
    )
    return records


def run_coupled(
    game: StochasticGame,
    schedule: PhaseSchedule,
    params,
    start: JointPolicy,
    num_phases: int,
    seed,
    *,
    initial_q: float | np.ndarray = 0.0,
    diagnostics: bool = False,
    exact_q_injection: bool = False,
    record_equilibrium: bool = True,
    equilibrium_ids=None,
    tol: float = DEFAULT_TOL,
    tie_tol: float = DEFAULT_TIE_TOL,
) -> list[RunRecord]:
    """Run the learner and the exact inertial best-reply process from the
    same start, sharing the per-phase update draws (common random numbers),
    and record per-phase agreement between the two trajectories."""
    records, _ = _run_learner(
        game, schedule, params, start, num_phases, seed,
        algorithm=1, initial_q=initial_q, diagnostics=diagnostics,
        exact_q_injection=exact_q_injection,
        record_equilibrium=record_equilibrium, equilibrium_ids=equilibrium_ids,
        coupled=True, tol=tol, tie_tol=tie_tol,
    )
    return records


def run_alg2(
    game: StochasticGame,
    schedule: PhaseSchedule,
    params,
    start: JointPolicy,
    num_phases: int,
    seed,
    *,
    initial_q: float | np.ndarray = 0.0,
    exp_start: JointPolicy | None = None,
    hat_self: bool = False,
    record_equilibrium: bool = True,
    equilibrium_ids=None,
    tol: float = DEFAULT_TOL,
) -> list[RunRecord]:
    """Run the two-table experimental-policy learner for num_phases updates."""
    records, _ = _run_learner(
        game, schedule, params, start, num_phases, seed,
        algorithm=2, initial_q=initial_q, diagnostics=False,
        exact_q_injection=False,
        record_equilibrium=record_equilibrium, equilibrium_ids=equilibrium_ids,
        coupled=False, tol=tol, hat_self=hat_self, exp_start=exp_start,
    )
    return records


def _run_learner(
    game, schedule, params, start, num_phases, seed, *,
    algorithm, initial_q, diagnostics, exact_q_injection,
    record_equilibrium, equilibrium_ids, coupled,
    tol=DEFAULT_TOL, tie_tol=DEFAULT_TIE_TOL,
    hat_self=False, exp_start=None,
):
    if num_phases < 0:
        raise ValueError("num_phases must be nonnegative")
    if not reachability_check(game):
        raise ValueError(
            "every state must be reachable from every state for phase learning"
        )
    params = _normalize_params(game, params)
    n = game.num_dms

    sim_rng, upd_rng = _split_streams(seed)
    eq_ids = _resolve_eq_ids(game, equilibrium_ids, record_equilibrium)
    boxes = [params[i].box_for(game, i) for i in range(n)]

    two_tables = algorithm == 2
    states = init_learner_states(
        game, start, params, two_tables=two_tables, initial_q=initial_q
    )
    if two_tables:
        all_pols = [
            _own_policy_tuples(game.num_states, game.action_counts[i])
            for i in range(n)
        ]
        if any(len(p) < 2 for p in all_pols):
            raise ValueError("every player needs at least two policies")
        init_draws = upd_rng.random(n)
        for i, st in enumerate(states):
            if exp_start is not None:
                st.exp_policy = exp_start.policies[i].actions
                if st.exp_policy == st.policy:
                    raise ValueError(
                        f"experimental start for dm={i} equals its baseline"
                    )
            else:
                cands = [p for p in all_pols[i] if p != st.policy]
                idx = min(int(init_draws[i] * len(cands)), len(cands) - 1)
                st.exp_policy = cands[idx]

    oracle = ReplyOracle(game, tol, tie_tol) if coupled else None
    exact_joint = start
    exact_memo = _exact_q_memo(game, tol) if exact_q_injection else None

    def snapshot(k):
        joint = JointPolicy.from_actions([st.policy for st in states])
        pid = joint_policy_index(game, joint)
        rec = RunRecord(
            phase=k,
            policy_id=pid,
            at_equilibrium=(pid in eq_ids) if eq_ids is not None else None,
        )
        if coupled:
            rec.exact_policy_id = joint_policy_index(game, exact_joint)
            rec.agree = rec.policy_id == rec.exact_policy_id
        return rec

    records = []
    x = _draw_initial_state(game, sim_rng)
    for k in range(num_phases):
        rec = snapshot(k)
        T = schedule.length(k)
        baseline_joint = JointPolicy.from_actions([st.policy for st in states])
        if two_tables:
            trace = alg2_phase(game, x, states, params, T, sim_rng, hat_self=hat_self)
        else:
            trace = alg1_phase(game, x, states, params, T, sim_rng)
        x = trace.end_state

        if diagnostics and not two_tables:
            errs = []
            for i, st in enumerate(states):
                perturbed = [
                    perturb(game, pol, params[pol.dm].rho)
                    for pol in baseline_joint.opponents(i)
                ]
                exact = optimal_q_factors(game, i, perturbed, tol).q
                errs.append(float(np.abs(st.q - exact).max()))
            rec.q_err = tuple(errs)
        records.append(rec)

        if exact_q_injection:
            for i, st in enumerate(states):
                opp = baseline_joint.opponents(i)
                st.q[:, :] = exact_memo(i, tuple(p.actions for p in opp), opp)

        bundle = upd_rng.random((n, 2))
        for i, st in enumerate(states):
            draws = _SeqDraws(bundle[i])
            if two_tables:
                alg2_policy_update(st, params[i], draws, boxes[i], game.action_counts[i])
            else:
                alg1_policy_update(st, params[i], draws, boxes[i])

        if coupled:
            new = []
            for i in range(n):
                current = exact_joint.policies[i]
                draws = _SeqDraws(bundle[i])
                if oracle.is_best_reply(i, exact_joint):
                    new.append(current)
                elif draws.random() < params[i].lam:
                    new.append(current)
                else:
                    cands = oracle.best_replies(i, exact_joint)
                    idx = min(int(draws.random() * len(cands)), len(cands) - 1)
                    new.append(cands[idx])
            exact_joint = JointPolicy(tuple(new))

    records.append(snapshot(num_phases))
    return records, states
