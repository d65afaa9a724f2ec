"""Command-line entry point.

Subcommands:
  train-victim  train the victim (federated or centralized) and save FXL1 weights
  serve         expose a weights file as a query-budgeted oracle (TCP JSON-lines,
                or HTTP with --http)
  attack        run the extraction attack against a weights file or a remote oracle
  evaluate      metrics between two weight files on the config's test set
  sweep         run the full experiment grid and write CSV + JSON reports
"""

import argparse
import json
import os
import sys

from . import extraction, harness, metrics, models
from .errors import FedexError
from .oracle import OracleServer, PredictionOracle, RemoteOracle


def _load_config(args):
    cfg = harness.parse_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    return cfg


def cmd_train_victim(args):
    cfg = _load_config(args)
    bundle, _aux, spec = harness.build_bundle(cfg)
    clients = args.clients if args.clients is not None else cfg.client_counts[0]
    victim, records = harness.train_victim(cfg, bundle, spec, clients)
    models.save_parameters_file(victim, args.out)
    if args.rounds_log and records:
        from .federated import write_round_records

        write_round_records(records, args.rounds_log)
    acc = metrics.accuracy(victim, bundle.test) if len(bundle.test) else float("nan")
    print(json.dumps({"weights": args.out, "clients": clients, "test_accuracy": acc}))
    return 0


def cmd_serve(args):
    victim = models.load_parameters_file(args.weights)
    oracle = PredictionOracle(victim, args.budget, mode=args.mode)
    if args.http:
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(oracle), host=args.host, port=args.port)
        return 0
    server = OracleServer(oracle, host=args.host, port=args.port)
    print(json.dumps({"listening": list(server.address), "budget": args.budget}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def _attack_oracle(args, cfg, spec):
    if args.remote:
        host, _, port = args.remote.rpartition(":")
        return RemoteOracle(host or "127.0.0.1", int(port), spec.input_shape, spec.class_count)
    victim = models.load_parameters_file(args.weights)
    return PredictionOracle(victim, args.budget, mode=cfg.oracle_mode).handle()


def cmd_attack(args):
    cfg = _load_config(args)
    bundle, aux, spec = harness.build_bundle(cfg)
    budget = args.budget or cfg.query_budgets[0]
    args.budget = budget
    attack_cfg = harness.build_attack_config(cfg, spec, aux, budget, args.branch, args.attack_seed)
    oracle = _attack_oracle(args, cfg, spec)
    surrogate, extracted = extraction.run_attack(oracle, bundle.query_pool, attack_cfg)
    if args.out:
        models.save_parameters_file(surrogate, args.out)
    if args.extracted_out:
        extraction.save_extracted(extracted, args.extracted_out)
    result = {"budget": budget, "branch": args.branch, "provenance": surrogate.provenance}
    victim_path = args.victim_weights or (None if args.remote else args.weights)
    if victim_path:
        victim = models.load_parameters_file(victim_path)
        result["metrics"] = metrics.evaluate(victim, surrogate, bundle.test).to_dict()
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_evaluate(args):
    cfg = _load_config(args)
    bundle, _aux, _spec = harness.build_bundle(cfg)
    victim = models.load_parameters_file(args.victim)
    extracted = models.load_parameters_file(args.extracted)
    print(metrics.evaluate(victim, extracted, bundle.test).to_json())
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    out_dir = args.out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    report = harness.run_experiment(cfg)
    csv_path = os.path.join(out_dir, "results.csv")
    json_path = os.path.join(out_dir, "results.json")
    harness.emit_csv(report, csv_path)
    harness.emit_json(report, json_path)
    print(json.dumps({"csv": csv_path, "json": json_path, "rows": len(report.rows)}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fedexsim")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key=value experiment config")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")

    p = sub.add_parser("train-victim", help="train and save the victim model")
    common(p)
    p.add_argument("--clients", type=int, default=None, help="client count (0 = centralized)")
    p.add_argument("--out", required=True, help="FXL1 weights output path")
    p.add_argument("--rounds-log", default=None, help="JSON-lines round records output")
    p.set_defaults(func=cmd_train_victim)

    p = sub.add_parser("serve", help="serve a weights file as a budgeted oracle")
    p.add_argument("--weights", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7461)
    p.add_argument("--mode", choices=("probability_vector", "hard_label"), default="probability_vector")
    p.add_argument("--http", action="store_true", help="serve the FastAPI app instead of TCP JSON-lines")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("attack", help="run the extraction attack")
    common(p)
    p.add_argument("--weights", default=None, help="victim FXL1 weights (in-process oracle)")
    p.add_argument("--remote", default=None, help="host:port of a serving oracle")
    p.add_argument("--victim-weights", default=None, help="victim weights for evaluation only")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--branch", choices=("scratch", "pretrained"), default="scratch")
    p.add_argument("--attack-seed", type=int, default=0, help="per-cell seed coordinate")
    p.add_argument("--out", default=None, help="surrogate FXL1 weights output path")
    p.add_argument("--extracted-out", default=None, help="FXD1 extracted dataset output path")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="metrics between two weight files")
    common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--extracted", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the full experiment grid")
    common(p)
    p.add_argument("--out", default=None, help="output directory (default: config out_dir)")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "attack" and not (args.weights or args.remote):
        parser.error("attack requires --weights or --remote")
    try:
        return args.func(args)
    except FedexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
