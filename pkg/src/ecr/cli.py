"""Command-line entry point: ``ecr <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 protocol violation,
4 oracle-check failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import PRESETS, ConfigError, ScenarioConfig, load_config, parse_address, preset_config
from .session import LogError, emit_curve, read_round_log, render_curve, render_report, rescore, run_scenario
from .verifier import SessionAborted, null_variance, policy_from_description, report_document

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_ORACLE = 4

log = logging.getLogger("ecr")


def _scenario(args) -> ScenarioConfig:
    """Config from --config or --preset; command-line flags beat ECR_SEED, which beats the file."""
    if args.config:
        config = load_config(args.config)
    elif args.preset:
        config = preset_config(args.preset, 1000, int(os.environ.get("ECR_SEED", 0)))
    else:
        raise ConfigError("give --config FILE or --preset NAME")
    overrides = {}
    if args.rounds is not None:
        overrides["rounds"] = args.rounds
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        out = Path(args.out)
        overrides["outputs"] = {
            "rounds": out / "rounds.jsonl",
            "curve": out / "curve.csv",
            "report": out / "report.json",
        }
    if getattr(args, "transport", None):
        overrides["transport"] = args.transport
    try:
        return replace(config, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(args) -> int:
    config = _scenario(args)
    result = run_scenario(config)
    sys.stdout.write(render_report(result.document))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .wire import serve_verifier
    from .session import write_artifacts, write_artifacts_partial

    config = _scenario(args)
    address = parse_address(args.bind) if args.bind else config.address
    count = {"n": 0}

    def on_complete(session):
        suffix = "" if args.max_sessions == 1 else f".s{count['n']}"
        count["n"] += 1
        write_artifacts(config, session.records, report_document(config.describe(), session.report), suffix)
        log.info("session finished: %s", session.report.decision.value)

    def on_abort(session):
        write_artifacts_partial(config, session.records)

    server = serve_verifier(address, config, on_complete, on_abort)
    # with a session limit, server_close() must wait for the handler threads
    server.daemon_threads = not args.max_sessions
    log.info("verifier listening on %s:%d", *server.server_address)
    print(f"listening on {server.server_address[0]}:{server.server_address[1]}", flush=True)
    try:
        if args.max_sessions:
            for _ in range(args.max_sessions):
                server.handle_request()
        else:
            server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_prove(args) -> int:
    from .wire import prove_client

    config = _scenario(args)
    address = parse_address(args.connect) if args.connect else config.address
    doc = prove_client(address, config.strategy, config.timeout)
    text = render_report(doc)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .oracles import run_oracle_checks

    checks = run_oracle_checks(seed=args.seed or 0, brute_force=not args.quick)
    if args.json:
        json.dump([c.to_dict() for c in checks], sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}\t{c.name}\t{c.value!r}\t{c.op} {c.expected!r} +- {c.tol:g}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_ORACLE


def cmd_report(args) -> int:
    text = render_report(rescore(args.log))
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_emit_curve(args) -> int:
    scenario, records = read_round_log(args.log)
    k_sigma = args.k_sigma if args.k_sigma is not None else scenario["k_sigma"]
    prior = policy_from_description(scenario["policy"]).prior
    text = render_curve(emit_curve(records, k_sigma, null_variance(prior)), scenario)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecr", description="Estimation certified randomness simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--config", help="scenario INI file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--rounds", type=int)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", help="run one session and write its artifacts")
    scenario_args(p)
    p.add_argument("--out", help="directory for rounds.jsonl, curve.csv, report.json")
    p.add_argument("--transport", choices=("in-process", "stream"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve-verifier", help="host verifier sessions over TCP")
    scenario_args(p)
    p.add_argument("--bind", default=os.environ.get("ECR_BIND"), help="host:port (env ECR_BIND)")
    p.add_argument("--max-sessions", type=int, default=0, help="stop after this many sessions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("prove-client", help="play a session against a verifier server")
    scenario_args(p)
    p.add_argument("--connect", default=os.environ.get("ECR_BIND"), help="host:port (env ECR_BIND)")
    p.add_argument("--report", help="also write the received report here")
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("oracle-check", help="run the numerical oracle table")
    p.add_argument("--json", action="store_true")
    p.add_argument("--quick", action="store_true", help="skip the brute-force searches")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("report", help="re-score a round log")
    p.add_argument("log")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("emit-curve", help="convergence curve from a round log")
    p.add_argument("log")
    p.add_argument("--k-sigma", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_emit_curve)
    return parser


def main(argv=None) -> int:
    from .wire import ProtocolViolation

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolViolation as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except SessionAborted as exc:
        print(f"session aborted: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
