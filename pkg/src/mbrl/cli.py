"""Command-line entry point: ``mbrl {online,offline,gen,analyze,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys

from mbrl import io
from mbrl.errors import ConfigError, DimensionError, InvariantError
from mbrl.harness import AXES, ExperimentConfig, build_instance, rows_to_csv, stream, sweep

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def _emit(doc, path=None):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        io.write_text(path, text)
    else:
        sys.stdout.write(text)


def _load_config(path, mode=None):
    cfg = ExperimentConfig.load(path) if path else ExperimentConfig().validate()
    if mode is not None:
        cfg.mode = mode
    return cfg


def cmd_online(args):
    from mbrl.online import run_ombrl

    cfg = _load_config(args.config, "online")
    summaries, csv_parts = [], []
    for rep in range(cfg.num_seeds):
        mdp, model_class, _ = build_instance(cfg, rep)
        rec = run_ombrl(mdp, model_class, cfg.K, cfg.delta, stream(cfg.seed, "agent", rep, 0), seed=rep)
        summaries.append({"seed": rep, "regret": rec.regret, "optimal_value": rec.optimal_value,
                          "env_fingerprint": rec.env_fingerprint, "config": rec.config})
        csv_parts.append((rep, rec.to_csv()))
        if cfg.outputs.get("json"):
            io.write_text(_suffixed(cfg.outputs["json"], rep, cfg.num_seeds), rec.to_json() + "\n")
    if cfg.outputs.get("csv"):
        for rep, text in csv_parts:
            io.write_text(_suffixed(cfg.outputs["csv"], rep, cfg.num_seeds), text)
    _emit({"mode": "online", "runs": summaries}, args.out)
    return EXIT_OK


def _suffixed(path, rep, n):
    if n == 1:
        return path
    stem, dot, ext = path.rpartition(".")
    return f"{stem}.seed{rep}.{ext}" if dot else f"{path}.seed{rep}"


def cmd_offline(args):
    from mbrl.offline import default_policy_class, run_cppo

    cfg = _load_config(args.config, "offline")
    if args.mdp:
        mdp = io.load_mdp(args.mdp)
        if not args.model_class:
            raise ConfigError("--mdp requires --class")
        model_class, pis = io.load_model_class(args.model_class), None
    else:
        mdp, model_class, pis = build_instance(cfg, 0)
    data = io.load_dataset(args.data, mdp.H)
    if pis is None:
        pis = default_policy_class(mdp, model_class, stream(cfg.seed, "policy", 0), cfg.n_random_policies)
    res = run_cppo(mdp, model_class, pis, data, cfg.delta, comparator=pis[0])
    doc = res.to_dict()
    doc["chosen_policy"] = pis[res.chosen_index].actions.tolist()
    _emit(doc, args.out or cfg.outputs.get("json"))
    return EXIT_OK


def cmd_gen(args):
    cfg = _load_config(args.config)
    if args.what == "env":
        mdp, _, _ = build_instance(cfg, args.replica)
        io.save_mdp(args.out, mdp)
    elif args.what == "class":
        mdp, model_class, _ = build_instance(cfg, args.replica)
        if args.mdp:
            from mbrl.harness import gen_model_class

            mdp = io.load_mdp(args.mdp)
            mc = cfg.model_class
            model_class = gen_model_class(mdp, int(mc.get("size", 8)), float(mc.get("scale", 0.5)),
                                          stream(cfg.seed, "class", args.replica),
                                          concentration=float(mc.get("concentration", 1.0)))
        model_class.check_realizable(mdp)
        io.save_model_class(args.out, model_class)
    else:  # data
        from mbrl.harness import behavior_policy
        from mbrl.offline import default_policy_class, generate_offline_dataset

        mdp, model_class, pis = build_instance(cfg, args.replica)
        if pis is None and cfg.behavior == "optimal":
            pis = default_policy_class(mdp, model_class, stream(cfg.seed, "policy", args.replica),
                                       cfg.n_random_policies)
        data = generate_offline_dataset(mdp, behavior_policy(cfg, mdp, pis), cfg.K,
                                        stream(cfg.seed, "data", args.replica, 0))
        io.save_dataset(args.out, data)
    return EXIT_OK


def cmd_analyze(args):
    from mbrl.analysis import analyze_report

    mdp = io.load_mdp(args.mdp)
    model_class = io.load_model_class(args.model_class)
    model_class.check_realizable(mdp)
    eps = tuple(args.epsilon) if args.epsilon else (0.5, 0.1, 0.05, 0.01)
    _emit(analyze_report(mdp, model_class, eps), args.out)
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args.config)
    rows = sweep(cfg, args.axis)
    text = rows_to_csv(rows)
    path = args.out or cfg.outputs.get("csv")
    if path:
        io.write_text(path, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mbrl", description="Likelihood-based model-based RL experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("online", help="run optimistic online MBRL")
    p.add_argument("--config")
    p.add_argument("--out", help="summary JSON path (default stdout)")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("offline", help="run pessimistic offline planning on a dataset")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="JSONL trajectories")
    p.add_argument("--mdp", help="MDP JSON (default: generated from the config)")
    p.add_argument("--class", dest="model_class", help="model-class JSON, required with --mdp")
    p.add_argument("--out")
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("gen", help="generate an environment, model class or dataset")
    p.add_argument("what", choices=("env", "class", "data"))
    p.add_argument("--config")
    p.add_argument("--mdp", help="for 'class': perturb this MDP instead of the generated one")
    p.add_argument("--replica", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("analyze", help="structural report for an MDP and model class")
    p.add_argument("--mdp", required=True)
    p.add_argument("--class", dest="model_class", required=True)
    p.add_argument("--epsilon", type=float, action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="sweep one axis and emit a CSV table")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantError, DimensionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
