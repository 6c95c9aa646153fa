"""Exact discounted-value machinery for one player against fixed opponents.

Everything here treats the focal player's problem as a stationary MDP:
opponents' (possibly randomized) stationary policies are marginalized out,
after which Q-factors come from contracting value iteration and policy
values from a direct linear solve.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .game import (
    DeterministicPolicy,
    JointPolicy,
    RandomizedPolicy,
    StochasticGame,
    enumerate_own_policies,
    perturb,
)

DEFAULT_TOL = 1e-9
DEFAULT_TIE_TOL = 1e-9
RHO_GRID = 1e-3


@dataclass
class QTable:
    """Per-player Q-factors over (state, own action)."""

    dm: int
    q: np.ndarray

    def copy(self) -> "QTable":
        return QTable(self.dm, self.q.copy())


@dataclass
class ValueVector:
    """Per-player expected discounted cost, one entry per initial state."""

    dm: int
    j: np.ndarray


@dataclass
class SeparationConstants:
    """Smallest gaps between distinct exact Q-factor entries, and the
    experimentation rates under which perturbed Q-factors stay within half
    of those gaps.  rho fields are None until computed."""

    delta_bar: float
    delta_check: float
    rho_bar: float | None = None
    rho_check: float | None = None


def _as_opponent_profile(game, dm, opponents) -> list[RandomizedPolicy]:
    """Normalize an opponents argument into RandomizedPolicy per j != dm."""
    if isinstance(opponents, JointPolicy):
        opponents = opponents.opponents(dm)
    out = {}
    for pol in opponents:
        if isinstance(pol, DeterministicPolicy):
            pol = pol.as_randomized(game.action_counts[pol.dm])
        out[pol.dm] = pol
    expected = [j for j in range(game.num_dms) if j != dm]
    if sorted(out) != expected:
        raise ValueError(f"opponent profile must cover players {expected}, got {sorted(out)}")
    return [out[j] for j in expected]


def _marginalize(game, dm, opponents):
    """Expected stage cost (X, U_i) and kernel (X, U_i, X) under opponents' play."""
    profile = _as_opponent_profile(game, dm, opponents)
    x_count = game.num_states
    u_i = game.action_counts[dm]

    cbar = np.empty((x_count, u_i))
    pbar = np.empty((x_count, u_i, x_count))
    for x in range(x_count):
        c = np.moveaxis(game.costs[dm, x], dm, 0)
        p = np.moveaxis(game.kernel[x], dm, 0)
        # contract opponent axes one by one; axis 1 is always the next opponent
        for opp in profile:
            w = opp.dist[x]
            c = np.tensordot(c, w, axes=([1], [0]))
            p = np.tensordot(p, w, axes=([1], [0]))
        cbar[x] = c
        pbar[x] = p
    return cbar, pbar


def bellman_optimal_operator(game, dm, opponents, q: QTable) -> QTable:
    """One application of the optimizing Bellman operator for the focal player."""
    cbar, pbar = _marginalize(game, dm, opponents)
    return QTable(dm, _apply_optimal(cbar, pbar, float(game.discounts[dm]), q.q))


def _apply_optimal(cbar, pbar, beta, q):
    if q.shape != cbar.shape:
        raise ValueError(f"Q table shape {q.shape} != {cbar.shape}")
    return cbar + beta * pbar.dot(q.min(axis=1))


def _apply_policy(cbar, pbar, beta, actions, q):
    cont = q[np.arange(q.shape[0]), actions]
    return cbar + beta * pbar.dot(cont)


def _iterate_to_fixed_point(apply_once, beta, tol, shape):
    # Stop once the sup-change guarantees a true error below tol via the
    # contraction factor; beta = 0 converges in a single sweep.
    threshold = math.inf if beta == 0.0 else tol * (1.0 - beta) / (2.0 * beta)
    q = np.zeros(shape)
    while True:
        q_next = apply_once(q)
        if np.abs(q_next - q).max() <= threshold:
            return q_next
        q = q_next


def optimal_q_factors(game, dm, opponents, tol: float = DEFAULT_TOL) -> QTable:
    """Fixed point of the optimizing operator: cost-to-go when the focal
    player acts optimally forever against the given opponents."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    cbar, pbar = _marginalize(game, dm, opponents)
    beta = float(game.discounts[dm])
    q = _iterate_to_fixed_point(
        lambda q: _apply_optimal(cbar, pbar, beta, q), beta, tol, cbar.shape
    )
    return QTable(dm, q)


def policy_q_factors(
    game, dm, policy: DeterministicPolicy, opponents, tol: float = DEFAULT_TOL
) -> QTable:
    """Fixed point of the policy-constrained operator: the continuation at the
    next state uses policy(x') instead of the minimizing action."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    cbar, pbar = _marginalize(game, dm, opponents)
    beta = float(game.discounts[dm])
    actions = np.asarray(policy.actions)
    q = _iterate_to_fixed_point(
        lambda q: _apply_policy(cbar, pbar, beta, actions, q), beta, tol, cbar.shape
    )
    return QTable(dm, q)


def _as_full_profile(game, joint) -> list[RandomizedPolicy]:
    if isinstance(joint, JointPolicy):
        return [
            p.as_randomized(game.action_counts[i])
            for i, p in enumerate(joint.policies)
        ]
    out = {}
    for pol in joint:
        if isinstance(pol, DeterministicPolicy):
            pol = pol.as_randomized(game.action_counts[pol.dm])
        out[pol.dm] = pol
    if sorted(out) != list(range(game.num_dms)):
        raise ValueError("joint profile must cover every player exactly once")
    return [out[i] for i in range(game.num_dms)]


def policy_value(game, dm, joint) -> ValueVector:
    """Expected discounted cost of a full joint policy, solved exactly.

    Solves (I - beta * P_pi) J = c_pi; invertible because beta < 1.
    """
    profile = _as_full_profile(game, joint)
    x_count = game.num_states
    beta = float(game.discounts[dm])

    cpi = np.empty(x_count)
    ppi = np.empty((x_count, x_count))
    for x in range(x_count):
        c = game.costs[dm, x]
        p = game.kernel[x]
        for pol in profile:
            w = pol.dist[x]
            c = np.tensordot(c, w, axes=([0], [0]))
            p = np.tensordot(p, w, axes=([0], [0]))
        cpi[x] = c
        ppi[x] = p
    j = np.linalg.solve(np.eye(x_count) - beta * ppi, cpi)
    return ValueVector(dm, j)


def greedy_action_sets(q: np.ndarray, tol: float = DEFAULT_TIE_TOL) -> list[list[int]]:
    """Per-state actions within tol of the row minimum, each list ascending."""
    mins = q.min(axis=1)
    return [
        [u for u in range(q.shape[1]) if q[x, u] <= mins[x] + tol]
        for x in range(q.shape[0])
    ]


def policies_from_action_sets(dm: int, sets: list[list[int]]) -> list[DeterministicPolicy]:
    """Cartesian product of per-state action sets, in sorted policy order."""
    return [
        DeterministicPolicy(dm, combo) for combo in itertools.product(*sets)
    ]


def best_reply_set(
    game,
    dm,
    opponents,
    tol: float = DEFAULT_TOL,
    tie_tol: float = DEFAULT_TIE_TOL,
) -> list[DeterministicPolicy]:
    """All deterministic policies minimizing the focal player's cost from
    every initial state, as the product of per-state Q-argmin sets."""
    table = optimal_q_factors(game, dm, opponents, tol)
    return policies_from_action_sets(dm, greedy_action_sets(table.q, tie_tol))


def is_best_reply(
    game, dm, candidate: DeterministicPolicy, opponents,
    tol: float = DEFAULT_TOL, tie_tol: float = DEFAULT_TIE_TOL,
) -> bool:
    table = optimal_q_factors(game, dm, opponents, tol)
    mins = table.q.min(axis=1)
    return all(
        table.q[x, candidate.actions[x]] <= mins[x] + tie_tol
        for x in range(game.num_states)
    )


def is_strict_best_reply(
    game, dm, candidate: DeterministicPolicy, joint: JointPolicy,
    tol: float = DEFAULT_TOL, tie_tol: float = DEFAULT_TIE_TOL,
) -> bool:
    """Best reply that strictly lowers the cost at some initial state."""
    opponents = joint.opponents(dm)
    if not is_best_reply(game, dm, candidate, opponents, tol, tie_tol):
        return False
    j_new = policy_value(game, dm, joint.replace(dm, candidate)).j
    j_cur = policy_value(game, dm, joint).j
    return bool(np.any(j_new < j_cur - tie_tol))


def strict_better_reply_set(
    game, dm, joint: JointPolicy,
    tol: float = DEFAULT_TOL, tie_tol: float = DEFAULT_TIE_TOL,
) -> list[DeterministicPolicy]:
    """Deterministic policies weakly improving at every state and strictly at
    one, holding the others fixed.  Sorted by action tuple."""
    j_cur = policy_value(game, dm, joint).j
    out = []
    for cand in enumerate_own_policies(game, dm):
        j_new = policy_value(game, dm, joint.replace(dm, cand)).j
        if np.all(j_new <= j_cur + tie_tol) and np.any(j_new < j_cur - tie_tol):
            out.append(cand)
    return out


def _opponent_profiles(game, dm):
    """All deterministic opponent profiles for the focal player."""
    per_opp = [enumerate_own_policies(game, j) for j in range(game.num_dms) if j != dm]
    return itertools.product(*per_opp)


def separation_constants(game, tol: float = DEFAULT_TOL) -> SeparationConstants:
    """Minimum gaps between distinct exact Q-factor entries over all players,
    states and deterministic opponent profiles.

    Entries closer than 10*tol are treated as equal so solver noise is never
    reported as a separation; returns inf when no distinct pair exists.
    """
    guard = 10.0 * tol
    delta_bar = math.inf
    delta_check = math.inf

    for dm in range(game.num_dms):
        own = enumerate_own_policies(game, dm)
        for profile in _opponent_profiles(game, dm):
            table = optimal_q_factors(game, dm, profile, tol)
            for row in table.q:
                for a, b in itertools.combinations(row, 2):
                    gap = abs(a - b)
                    if gap > guard:
                        delta_bar = min(delta_bar, gap)
            # constrained tables evaluated at (x, policy(x)) equal the policy's
            # value vector, so compare value vectors across own policies
            values = [
                policy_value(game, dm, JointPolicy(_insert(profile, dm, pol))).j
                for pol in own
            ]
            for va, vb in itertools.combinations(values, 2):
                for gap in np.abs(va - vb):
                    if gap > guard:
                        delta_check = min(delta_check, gap)
    return SeparationConstants(delta_bar, delta_check)


def _insert(profile, dm, pol):
    pols = list(profile)
    pols.insert(dm, pol)
    return tuple(pols)


def _perturbed_opponents(game, profile, rho):
    return [perturb(game, p, rho) for p in profile]


def perturbation_distance(game, dm, profile, rho, tol: float = DEFAULT_TOL) -> float:
    """Sup distance between optimal Q-factors against deterministic opponents
    and against their rho-perturbed versions."""
    q_exact = optimal_q_factors(game, dm, profile, tol).q
    q_pert = optimal_q_factors(game, dm, _perturbed_opponents(game, profile, rho), tol).q
    return float(np.abs(q_exact - q_pert).max())


def constrained_perturbation_distance(
    game, dm, policy, profile, rho, tol: float = DEFAULT_TOL
) -> float:
    q_exact = policy_q_factors(game, dm, policy, profile, tol).q
    q_pert = policy_q_factors(
        game, dm, policy, _perturbed_opponents(game, profile, rho), tol
    ).q
    return float(np.abs(q_exact - q_pert).max())


def experimentation_bound(
    game, deltas, tol: float = DEFAULT_TOL, grid: float = RHO_GRID
) -> SeparationConstants:
    """Largest common experimentation rate (on a 1e-3 grid, found by
    bisection) keeping every player's perturbed Q-factors within half of
    min(delta_i, delta_bar - delta_i); analogously for the policy-constrained
    tables.  Requires 0 < delta_i < delta_bar for every player."""
    deltas = [float(d) for d in deltas]
    if len(deltas) != game.num_dms:
        raise ValueError("one delta per player required")
    consts = separation_constants(game, tol)
    for i, d in enumerate(deltas):
        if not 0.0 < d < consts.delta_bar:
            raise ValueError(
                f"delta for dm={i} is {d}, must lie strictly in (0, {consts.delta_bar})"
            )

    def margin(i, ref):
        return 0.5 * min(deltas[i], ref - deltas[i])

    def ok_bar(rho):
        for dm in range(game.num_dms):
            for profile in _opponent_profiles(game, dm):
                if perturbation_distance(game, dm, profile, rho, tol) >= margin(dm, consts.delta_bar):
                    return False
        return True

    def ok_check(rho):
        for dm in range(game.num_dms):
            own = enumerate_own_policies(game, dm)
            for profile in _opponent_profiles(game, dm):
                for pol in own:
                    d = constrained_perturbation_distance(game, dm, pol, profile, rho, tol)
                    if d >= margin(dm, consts.delta_check):
                        return False
        return True

    rho_bar = _bisect_rho(ok_bar, grid)
    if all(0.0 < d < consts.delta_check for d in deltas):
        rho_check = _bisect_rho(ok_check, grid)
    else:
        rho_check = None
    return SeparationConstants(consts.delta_bar, consts.delta_check, rho_bar, rho_check)


def _bisect_rho(predicate, grid):
    steps = int(round(1.0 / grid)) - 1
    lo, hi = 0, steps + 1  # grid indices; lo verified, hi failed
    if predicate(steps * grid):
        return steps * grid
    hi = steps
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid * grid):
            lo = mid
        else:
            hi = mid
    return lo * grid
