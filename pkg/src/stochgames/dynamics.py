"""Inertial policy adjustment driven by exact best or better replies.

Every player updates simultaneously each step: a player already best-replying
keeps its policy; otherwise it keeps with its inertia probability and else
jumps uniformly onto its candidate set.  Draws are consumed in player-index
order (one inertia draw, then one selection draw only when actually moving),
which makes trajectories reproducible from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import JointPolicy, StochasticGame
from .replygraph import ReplyOracle
from .solver import DEFAULT_TIE_TOL, DEFAULT_TOL


@dataclass(frozen=True)
class InertiaParams:
    """Per-player probability of keeping the current policy when an
    improvement is available."""

    lams: tuple[float, ...]

    def __post_init__(self):
        for i, lam in enumerate(self.lams):
            if not 0.0 < lam < 1.0:
                raise ValueError(f"inertia for dm={i} is {lam}, must lie in (0, 1)")

    @classmethod
    def uniform(cls, lam: float, num_dms: int) -> "InertiaParams":
        return cls((lam,) * num_dms)


@dataclass
class PolicyTrajectory:
    policies: list[JointPolicy]
    updated: list[tuple[int, ...]]  # players that changed policy at each step
    at_equilibrium: list[bool]

    def absorbed(self) -> bool:
        return bool(self.at_equilibrium and self.at_equilibrium[-1])


def select_uniform(candidates, draw: float):
    """Index a sorted candidate list with one uniform draw."""
    idx = int(draw * len(candidates))
    if idx >= len(candidates):
        idx = len(candidates) - 1
    return candidates[idx]


def _inertial_step(game, joint, params, rng, candidate_fn, keep_fn):
    new = []
    moved = []
    for i in range(game.num_dms):
        current = joint.policies[i]
        if keep_fn(i, joint):
            new.append(current)
            continue
        if rng.random() < params.lams[i]:
            new.append(current)
            continue
        candidates = candidate_fn(i, joint)
        choice = select_uniform(candidates, rng.random())
        new.append(choice)
        if choice.actions != current.actions:
            moved.append(i)
    return JointPolicy(tuple(new)), tuple(moved)


def best_reply_step(
    game: StochasticGame,
    joint: JointPolicy,
    params: InertiaParams,
    rng,
    oracle: ReplyOracle | None = None,
) -> JointPolicy:
    """One simultaneous inertial update onto best-reply sets."""
    oracle = oracle or ReplyOracle(game)
    return _inertial_step(
        game, joint, params, rng,
        candidate_fn=oracle.best_replies,
        keep_fn=oracle.is_best_reply,
    )[0]


def better_reply_step(
    game: StochasticGame,
    joint: JointPolicy,
    params: InertiaParams,
    rng,
    oracle: ReplyOracle | None = None,
) -> JointPolicy:
    """One simultaneous inertial update onto strict-better-reply sets;
    players with no strict better reply keep their policy."""
    oracle = oracle or ReplyOracle(game)
    better = {}

    def candidates(i, joint_policy):
        key = (i, joint_policy.actions)
        if key not in better:
            better[key] = oracle.strict_better_replies(i, joint_policy)
        return better[key]

    return _inertial_step(
        game, joint, params, rng,
        candidate_fn=candidates,
        keep_fn=lambda i, jp: not candidates(i, jp),
    )[0]


def _run_process(game, start, steps, params, seed, kind,
                 tol=DEFAULT_TOL, tie_tol=DEFAULT_TIE_TOL) -> PolicyTrajectory:
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    oracle = ReplyOracle(game, tol, tie_tol)
    rng = np.random.default_rng(seed)
    better_memo: dict = {}

    def better_candidates(i, jp):
        key = (i, jp.actions)
        if key not in better_memo:
            better_memo[key] = oracle.strict_better_replies(i, jp)
        return better_memo[key]

    if kind == "best":
        candidate_fn = oracle.best_replies
        keep_fn = oracle.is_best_reply
    else:
        candidate_fn = better_candidates
        keep_fn = lambda i, jp: not better_candidates(i, jp)

    policies = [start]
    updated = []
    flags = [oracle.is_equilibrium(start)]
    joint = start
    for _ in range(steps):
        joint, moved = _inertial_step(game, joint, params, rng, candidate_fn, keep_fn)
        policies.append(joint)
        updated.append(moved)
        flags.append(oracle.is_equilibrium(joint))
    return PolicyTrajectory(policies, updated, flags)


def run_best_reply_process(
    game: StochasticGame, start: JointPolicy, steps: int,
    params: InertiaParams, seed,
    tol: float = DEFAULT_TOL, tie_tol: float = DEFAULT_TIE_TOL,
) -> PolicyTrajectory:
    """Iterate best_reply_step from a start policy; deterministic given seed."""
    return _run_process(game, start, steps, params, seed, "best", tol, tie_tol)


def run_better_reply_process(
    game: StochasticGame, start: JointPolicy, steps: int,
    params: InertiaParams, seed,
    tol: float = DEFAULT_TOL, tie_tol: float = DEFAULT_TIE_TOL,
) -> PolicyTrajectory:
    return _run_process(game, start, steps, params, seed, "better", tol, tie_tol)
