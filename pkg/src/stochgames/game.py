"""Finite discounted stochastic games with dense tabular representation.

States and actions are 0-based integer indices throughout.  A game is
immutable once built and can be shared freely across workers; all
randomness comes from generators passed in by callers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROB_TOL = 1e-12
DEFAULT_ENUMERATION_CAP = 10**6


class EnumerationCapError(ValueError):
    """Raised when the deterministic joint-policy space exceeds the cap."""


@dataclass(frozen=True, eq=False)
class StochasticGame:
    """A finite N-player discounted stochastic game.

    costs:        array (N, X, U_1, ..., U_N), per-player stage cost
    kernel:       array (X, U_1, ..., U_N, X), next-state distributions
    discounts:    array (N,), per-player discount factors
    initial_dist: array (X,), distribution of the initial state
    """

    costs: np.ndarray
    kernel: np.ndarray
    discounts: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float64)
        kernel = np.asarray(self.kernel, dtype=np.float64)
        discounts = np.asarray(self.discounts, dtype=np.float64)
        initial = np.asarray(self.initial_dist, dtype=np.float64)

        if costs.ndim < 3:
            raise ValueError("costs must have shape (N, X, U_1, ..., U_N)")
        n = costs.shape[0]
        x = costs.shape[1]
        acts = costs.shape[2:]
        if len(acts) != n:
            raise ValueError(
                f"costs has {len(acts)} action axes for {n} players"
            )
        if kernel.shape != (x, *acts, x):
            raise ValueError(
                f"kernel shape {kernel.shape} does not match (X, U..., X) = {(x, *acts, x)}"
            )
        if discounts.shape != (n,):
            raise ValueError(f"discounts shape {discounts.shape} != ({n},)")
        if initial.shape != (x,):
            raise ValueError(f"initial_dist shape {initial.shape} != ({x},)")

        for arr in (costs, kernel, discounts, initial):
            arr.setflags(write=False)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "discounts", discounts)
        object.__setattr__(self, "initial_dist", initial)

    @property
    def num_dms(self) -> int:
        return self.costs.shape[0]

    @property
    def num_states(self) -> int:
        return self.costs.shape[1]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(self.costs.shape[2:])

    def max_abs_cost(self, dm: int) -> float:
        return float(np.abs(self.costs[dm]).max())

    def value_bound(self, dm: int) -> float:
        """Sup-norm bound max|c| / (1 - beta) on fixed points of any Bellman operator."""
        beta = float(self.discounts[dm])
        if beta >= 1.0:
            return math.inf
        return self.max_abs_cost(dm) / (1.0 - beta)


@dataclass(frozen=True, order=True)
class DeterministicPolicy:
    """A stationary deterministic policy for one player: state -> action."""

    dm: int
    actions: tuple[int, ...]

    def action_of(self, x: int) -> int:
        return self.actions[x]

    def as_randomized(self, num_actions: int) -> "RandomizedPolicy":
        dist = np.zeros((len(self.actions), num_actions))
        dist[np.arange(len(self.actions)), self.actions] = 1.0
        return RandomizedPolicy(self.dm, dist)


@dataclass(frozen=True, order=True)
class JointPolicy:
    """One deterministic policy per player."""

    policies: tuple[DeterministicPolicy, ...]

    def __post_init__(self):
        for i, pol in enumerate(self.policies):
            if pol.dm != i:
                raise ValueError(f"policy at position {i} has dm={pol.dm}")

    @classmethod
    def from_actions(cls, actions) -> "JointPolicy":
        return cls(tuple(
            DeterministicPolicy(i, tuple(int(a) for a in row))
            for i, row in enumerate(actions)
        ))

    @property
    def actions(self) -> tuple[tuple[int, ...], ...]:
        return tuple(p.actions for p in self.policies)

    def replace(self, dm: int, policy: DeterministicPolicy) -> "JointPolicy":
        if policy.dm != dm:
            raise ValueError("replacement policy has wrong dm index")
        pols = list(self.policies)
        pols[dm] = policy
        return JointPolicy(tuple(pols))

    def opponents(self, dm: int) -> tuple[DeterministicPolicy, ...]:
        return tuple(p for i, p in enumerate(self.policies) if i != dm)


@dataclass(frozen=True, eq=False)
class RandomizedPolicy:
    """A stationary randomized policy: per-state distribution over own actions."""

    dm: int
    dist: np.ndarray

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=np.float64)
        if dist.ndim != 2:
            raise ValueError("dist must have shape (X, U)")
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)

    @classmethod
    def uniform(cls, dm: int, num_states: int, num_actions: int) -> "RandomizedPolicy":
        return cls(dm, np.full((num_states, num_actions), 1.0 / num_actions))


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str] = field(default_factory=list)


def validate_game(game: StochasticGame) -> ValidationReport:
    """Check the semantic invariants of a game and report every violation found."""
    violations = []
    x_count = game.num_states
    acts = game.action_counts

    if not np.all(np.isfinite(game.costs)):
        bad = np.argwhere(~np.isfinite(game.costs))
        for idx in bad[:10]:
            violations.append(
                f"cost entry dm={idx[0]}, x={idx[1]}, u={tuple(idx[2:])} is not finite"
            )

    for i, beta in enumerate(game.discounts):
        if not (0.0 < beta < 1.0):
            violations.append(f"discount for dm={i} is {beta}, must lie strictly in (0, 1)")

    kern = game.kernel.reshape(x_count, -1, x_count)
    joint = int(np.prod(acts)) if acts else 1
    for x in range(x_count):
        for j in range(joint):
            row = kern[x, j]
            u = _decode_joint_action(j, acts)
            if np.any(row < 0.0):
                violations.append(f"kernel row (x={x}, u={u}) has a negative probability")
            if abs(row.sum() - 1.0) > PROB_TOL:
                violations.append(
                    f"kernel row (x={x}, u={u}) sums to {row.sum():.12g}, expected 1"
                )

    if np.any(game.initial_dist < 0.0):
        violations.append("initial_dist has a negative probability")
    if abs(game.initial_dist.sum() - 1.0) > PROB_TOL:
        violations.append(
            f"initial_dist sums to {game.initial_dist.sum():.12g}, expected 1"
        )

    return ValidationReport(ok=not violations, violations=violations)


def _decode_joint_action(code: int, acts: tuple[int, ...]) -> tuple[int, ...]:
    out = []
    for size in reversed(acts):
        out.append(code % size)
        code //= size
    return tuple(reversed(out))


def joint_action_strides(acts: tuple[int, ...]) -> tuple[int, ...]:
    """Strides encoding a joint action as a flat C-order index (last player fastest)."""
    strides = []
    s = 1
    for size in reversed(acts):
        strides.append(s)
        s *= size
    return tuple(reversed(strides))


def _cdf_row(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return cdf


def transition_cdfs(game: StochasticGame) -> np.ndarray:
    """Cumulative next-state distributions, shape (X, prod(U), X)."""
    kern = game.kernel.reshape(game.num_states, -1, game.num_states)
    cdf = np.cumsum(kern, axis=-1)
    cdf[..., -1] = 1.0
    return np.ascontiguousarray(cdf)


def sample_transition(game: StochasticGame, x: int, u, rng) -> int:
    """Draw the next state from kernel(x, u) using a single uniform draw.

    Inverse-CDF over the fixed state index order, so trajectories are
    bit-reproducible given a seeded generator.
    """
    acts = game.action_counts
    if not 0 <= x < game.num_states:
        raise IndexError(f"state {x} out of range")
    u = tuple(int(a) for a in u)
    if len(u) != len(acts):
        raise IndexError(f"joint action {u} has wrong arity")
    for a, size in zip(u, acts):
        if not 0 <= a < size:
            raise IndexError(f"action {a} out of range for a player with {size} actions")
    row = game.kernel[(x, *u)]
    cdf = _cdf_row(row)
    draw = rng.random()
    return int(np.searchsorted(cdf, draw, side="right"))


def perturb(game: StochasticGame, policy: DeterministicPolicy, rho: float) -> RandomizedPolicy:
    """Mix a deterministic policy with the uniform policy at rate rho.

    The result plays policy(x) with probability 1 - rho + rho/|U| and any
    other fixed action with probability rho/|U|.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie strictly in (0, 1), got {rho}")
    num_actions = game.action_counts[policy.dm]
    dist = np.full((game.num_states, num_actions), rho / num_actions)
    dist[np.arange(game.num_states), policy.actions] += 1.0 - rho
    return RandomizedPolicy(policy.dm, dist)


def own_policy_count(game: StochasticGame, dm: int) -> int:
    return game.action_counts[dm] ** game.num_states


def joint_policy_count(game: StochasticGame) -> int:
    n = 1
    for size in game.action_counts:
        n *= size ** game.num_states
    return n


def enumerate_own_policies(game: StochasticGame, dm: int) -> list[DeterministicPolicy]:
    """All deterministic policies of one player, sorted by action tuple."""
    num_actions = game.action_counts[dm]
    x_count = game.num_states
    out = []
    for k in range(num_actions ** x_count):
        actions = []
        for _ in range(x_count):
            actions.append(k % num_actions)
            k //= num_actions
        out.append(DeterministicPolicy(dm, tuple(reversed(actions))))
    return out


def joint_policy_from_index(game: StochasticGame, index: int) -> JointPolicy:
    """Inverse of joint_policy_index; indices follow enumeration order."""
    total = joint_policy_count(game)
    if not 0 <= index < total:
        raise IndexError(f"joint policy index {index} out of range [0, {total})")
    digits = []
    for size in reversed(game.action_counts):
        for _ in range(game.num_states):
            digits.append(index % size)
            index //= size
    digits.reverse()
    x_count = game.num_states
    rows = [digits[i * x_count:(i + 1) * x_count] for i in range(game.num_dms)]
    return JointPolicy.from_actions(rows)


def joint_policy_index(game: StochasticGame, joint: JointPolicy) -> int:
    """Stable node ID: lexicographic rank, player-major and state-minor."""
    index = 0
    for dm, pol in enumerate(joint.policies):
        size = game.action_counts[dm]
        for a in pol.actions:
            if not 0 <= a < size:
                raise IndexError(f"action {a} out of range for dm={dm}")
            index = index * size + a
    return index


def enumerate_joint_policies(
    game: StochasticGame, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[JointPolicy]:
    """All deterministic joint policies in lexicographic order (player-major)."""
    total = joint_policy_count(game)
    if total > cap:
        raise EnumerationCapError(
            f"joint policy space has {total} elements, above the cap {cap}"
        )
    return [joint_policy_from_index(game, k) for k in range(total)]


def reachability_check(game: StochasticGame) -> bool:
    """True iff every state can reach every state in one or more steps.

    Uses BFS on the one-step support graph: an edge x -> x' exists when some
    joint action moves x to x' with positive probability.
    """
    x_count = game.num_states
    kern = game.kernel.reshape(x_count, -1, x_count)
    support = (kern > 0.0).any(axis=1)

    for start in range(x_count):
        seen = set()
        frontier = [s for s in range(x_count) if support[start, s]]
        seen.update(frontier)
        while frontier:
            nxt = []
            for y in frontier:
                for s in range(x_count):
                    if support[y, s] and s not in seen:
                        seen.add(s)
                        nxt.append(s)
            frontier = nxt
        if len(seen) != x_count:
            return False
    return True


def game_to_dict(game: StochasticGame) -> dict:
    return {
        "num_dms": game.num_dms,
        "num_states": game.num_states,
        "action_counts": list(game.action_counts),
        "costs": game.costs.tolist(),
        "kernel": game.kernel.tolist(),
        "discounts": game.discounts.tolist(),
        "initial_dist": game.initial_dist.tolist(),
    }


def game_from_dict(doc: dict) -> StochasticGame:
    try:
        n = int(doc["num_dms"])
        x = int(doc["num_states"])
        acts = tuple(int(a) for a in doc["action_counts"])
        costs = np.asarray(doc["costs"], dtype=np.float64)
        kernel = np.asarray(doc["kernel"], dtype=np.float64)
        discounts = np.asarray(doc["discounts"], dtype=np.float64)
        initial = np.asarray(doc["initial_dist"], dtype=np.float64)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed game document: {exc}") from exc
    if len(acts) != n:
        raise ValueError("action_counts length does not match num_dms")
    expected_costs = (n, x, *acts)
    if costs.shape != expected_costs:
        raise ValueError(f"costs shape {costs.shape} != {expected_costs}")
    return StochasticGame(costs, kernel, discounts, initial)


def load_game(path) -> StochasticGame:
    with open(path) as fh:
        return game_from_dict(json.load(fh))


def save_game(game: StochasticGame, path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1) + "\n")
