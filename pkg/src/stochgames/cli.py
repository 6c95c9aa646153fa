"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 usage/configuration error.
All tabular output is CSV; floats are written with repr so repeated runs
are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dynamics import InertiaParams, run_best_reply_process
from .experiments import (
    ExperimentConfig,
    PdParams,
    build_fig7_game,
    build_pd_game,
    random_team_game,
    run_learner_cells,
    table1_experiment,
)
from .game import (
    DeterministicPolicy,
    JointPolicy,
    joint_policy_count,
    joint_policy_index,
    load_game,
    save_game,
    validate_game,
)
from .qlearning import LearnerParams, PhaseSchedule
from .replygraph import VARIANTS, build_reply_graph, certify_weak_acyclicity, export_dot
from .solver import optimal_q_factors

log = logging.getLogger(__name__)


def _write_text(out: str | None, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _common(sub, *, config=True, out=True, seed=False, threads=False):
    if config:
        sub.add_argument("--config", required=True, help="input file (game or experiment config)")
    if out:
        sub.add_argument("--out", default=None, help="output path (default: stdout)")
    if seed:
        sub.add_argument("--seed", type=int, default=0, help="master seed")
    if threads:
        sub.add_argument("--threads", type=int, default=1, help="worker processes")
    sub.add_argument("--format", choices=["csv"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochgames",
        description="Finite discounted stochastic games: validation, exact solving, "
        "reply-graph certification, and decentralized Q-learning runs.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("validate", help="check a game definition file")
    _common(sub, out=False)

    sub = subs.add_parser("solve", help="optimal Q-factors for one player")
    _common(sub)
    sub.add_argument("--dm", type=int, required=True, help="focal player index")
    sub.add_argument(
        "--opponent", action="append", default=[], metavar="J=A0,A1,...",
        help="deterministic policy of player J (one flag per opponent)",
    )
    sub.add_argument("--tol", type=float, default=1e-9)

    sub = subs.add_parser("graph", help="reply graph and weak-acyclicity certificate")
    _common(sub)
    sub.add_argument("--variant", choices=list(VARIANTS), default="best-single")
    sub.add_argument("--dot", default=None, help="also write a digraph description here")

    sub = subs.add_parser("run-baseline", help="exact inertial best-reply process")
    _common(sub, seed=True)
    sub.add_argument("--lambda", dest="lam", default="0.5", help="inertia (comma list or scalar)")
    sub.add_argument("--steps", type=int, default=100)
    sub.add_argument("--start", type=int, default=0, help="starting joint policy ID")

    for name in ("run-alg1", "run-alg2", "run-coupled"):
        sub = subs.add_parser(name, help=f"{name[4:]} learner over (start, seed) cells")
        _common(sub, seed=True, threads=True)

    sub = subs.add_parser("table1", help="phase-length sweep with the coupled exact process")
    _common(sub, seed=True, threads=True)

    sub = subs.add_parser("fig7", help="write the bundled three-player example game")
    _common(sub, config=False)
    sub.add_argument("--a", type=float, default=1.0)

    sub = subs.add_parser("teamgen", help="write a random shared-cost game")
    _common(sub, config=False, seed=True)
    sub.add_argument("--states", type=int, default=3)
    sub.add_argument("--actions", type=int, default=2)
    sub.add_argument("--dms", type=int, default=2)

    return parser


def _load_experiment(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _cmd_validate(args) -> int:
    report = validate_game(load_game(args.config))
    if report.ok:
        print("ok")
        return 0
    for v in report.violations:
        print(v)
    return 1


def _cmd_solve(args) -> int:
    game = load_game(args.config)
    opponents = []
    for spec in args.opponent:
        j, actions = spec.split("=")
        opponents.append(
            DeterministicPolicy(int(j), tuple(int(a) for a in actions.split(",")))
        )
    table = optimal_q_factors(game, args.dm, opponents, args.tol)
    header = ["x"] + [f"u{a}" for a in range(game.action_counts[args.dm])]
    rows = [[x, *table.q[x]] for x in range(game.num_states)]
    _write_text(args.out, _csv(header, rows))
    return 0


def _cmd_graph(args) -> int:
    game = load_game(args.config)
    graph = build_reply_graph(game, args.variant)
    cert = certify_weak_acyclicity(graph)
    doc = {
        "variant": graph.variant,
        "num_nodes": graph.num_nodes,
        "nodes": {k: [list(r) for r in jp.actions] for k, jp in enumerate(graph.nodes)},
        "edges": [
            {"src": src, "dst": dst, "deviators": sorted(devs)}
            for src in range(graph.num_nodes)
            for dst, devs in graph.edges[src]
        ],
        "certificate": {
            "weakly_acyclic": cert.weakly_acyclic,
            "equilibria": cert.equilibria,
            "max_shortest_path": cert.max_shortest_path,
            "unreachable": cert.unreachable(),
            "witness_paths": {str(k): v for k, v in sorted(cert.witness_paths.items())},
        },
    }
    _write_text(args.out, json.dumps(doc, indent=1) + "\n")
    if args.dot:
        Path(args.dot).write_text(export_dot(graph))
    return 0


def _cmd_run_baseline(args) -> int:
    game = load_game(args.config)
    lams = [float(x) for x in str(args.lam).split(",")]
    if len(lams) == 1:
        lams *= game.num_dms
    params = InertiaParams(tuple(lams))
    start = _start_policy(game, args.start)
    traj = run_best_reply_process(game, start, args.steps, params, args.seed)
    rows = [
        (k, joint_policy_index(game, jp), traj.at_equilibrium[k])
        for k, jp in enumerate(traj.policies)
    ]
    _write_text(args.out, _csv(["step", "policy_id", "at_equilibrium"], rows))
    return 0


def _start_policy(game, start_id: int) -> JointPolicy:
    from .game import joint_policy_from_index

    return joint_policy_from_index(game, start_id)


def _cmd_learner(args, algorithm: str) -> int:
    doc = _load_experiment(args.config)
    schedule_doc = doc.pop("schedule", {"kind": "constant", "T": 100})
    kind = schedule_doc.get("kind", "constant")
    if kind == "constant":
        schedule = PhaseSchedule.constant(schedule_doc["T"])
    elif kind == "linear":
        schedule = PhaseSchedule.linear(schedule_doc["base"], schedule_doc.get("increment", 0))
    elif kind == "explicit":
        schedule = PhaseSchedule.explicit(schedule_doc["values"])
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    doc.pop("t_values", None)
    config = ExperimentConfig.from_dict(doc)
    game = config.resolve_game()
    starts = config.starts
    if starts is None:
        starts = tuple(range(joint_policy_count(game)))
    master_seed = args.seed if args.seed else config.master_seed

    rows = run_learner_cells(
        game, schedule, config.params, starts, config.seeds_per_start,
        config.num_updates, master_seed, algorithm, threads=args.threads,
    )
    header = ["seed", "start", "phase", "policy_id", "at_equilibrium"]
    coupled = algorithm == "coupled"
    if coupled:
        header.append("agreement")
    out_rows = []
    for seed_idx, start_id, rec in rows:
        row = [seed_idx, start_id, rec.phase, rec.policy_id, bool(rec.at_equilibrium)]
        if coupled:
            row.append(bool(rec.agree))
        out_rows.append(row)
    _write_text(args.out, _csv(header, out_rows))
    return 0


def _cmd_table1(args) -> int:
    doc = _load_experiment(args.config)
    config = ExperimentConfig.from_dict(doc)
    if args.seed:
        import dataclasses

        config = dataclasses.replace(config, master_seed=args.seed)
    rows = table1_experiment(config, threads=args.threads)
    _write_text(
        args.out,
        _csv(["T", "frac_eq", "frac_agree"], [(r.T, r.frac_eq, r.frac_agree) for r in rows]),
    )
    return 0


def _cmd_fig7(args) -> int:
    save_game(build_fig7_game(args.a), args.out or "fig7.json")
    return 0


def _cmd_teamgen(args) -> int:
    game = random_team_game(args.states, args.actions, args.dms, args.seed)
    save_game(game, args.out or "team.json")
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "graph":
            return _cmd_graph(args)
        if args.command == "run-baseline":
            return _cmd_run_baseline(args)
        if args.command == "run-alg1":
            return _cmd_learner(args, "alg1")
        if args.command == "run-alg2":
            return _cmd_learner(args, "alg2")
        if args.command == "run-coupled":
            return _cmd_learner(args, "coupled")
        if args.command == "table1":
            return _cmd_table1(args)
        if args.command == "fig7":
            return _cmd_fig7(args)
        if args.command == "teamgen":
            return _cmd_teamgen(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


def main() -> None:
    sys.exit(cli_main())
