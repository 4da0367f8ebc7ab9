"""Command-line front end: ``fedsim run`` for one simulation, ``fedsim sweep``
for a grid over clients x epsilon x neighborhood.

Exit codes: 0 success, 1 configuration/validation error, 2 protocol abort.
"""

import argparse
import json
import sys
from pathlib import Path

from . import experiment, protocol, simkernel
from .errors import ConfigError, FedsimError, IngestionError, ParameterError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PROTOCOL = 2


def _parse_epsilon_list(text: str) -> list:
    values = []
    for tok in text.split(","):
        tok = tok.strip()
        values.append(None if tok.lower() in ("none", "off") else float(tok))
    return values


def load_config_file(path: str) -> dict:
    """Accept a JSON manifest/config or key = value lines."""
    raw = Path(path).read_text()
    stripped = raw.lstrip()
    if stripped.startswith("{"):
        return json.loads(raw)
    mapping = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        try:
            mapping[key.strip()] = json.loads(value.strip())
        except json.JSONDecodeError:
            mapping[key.strip()] = value.strip()
    return mapping


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (key = value lines, or a JSON manifest)")
    p.add_argument("--clients", type=int)
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--epsilon", type=float)
    noise.add_argument("--no-noise", action="store_true",
                       help="run without differential-privacy noise")
    p.add_argument("--iterations", type=int, help="protocol iterations (default 30)")
    p.add_argument("--local-iters", type=int, dest="local_iterations")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--alpha-reg", type=float, dest="alpha_reg")
    p.add_argument("--neighborhood", choices=[protocol.FULL, protocol.LOGN])
    p.add_argument("--timing", choices=[simkernel.MEASURED, simkernel.FIXED],
                   dest="timing_mode")
    p.add_argument("--fixed-compute-ns", type=int, dest="fixed_compute_ns")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--data", dest="data_path", help="credit-card fraud CSV path")
    source.add_argument("--synth", nargs=2, metavar=("ROWS", "RATE"),
                        help="use synthetic data: row count and fraud rate")
    p.add_argument("--synth-features", type=int, dest="synth_features")
    p.add_argument("--sample-rows", type=int, dest="sample_rows")
    p.add_argument("--allow-small", action="store_true", dest="allow_small",
                   help="train on the full pool when it is smaller than --sample-rows")
    p.add_argument("--group", choices=["toy", "modp2048"], dest="group_mode")
    p.add_argument("--frac-bits", type=int, dest="fractional_bits")
    p.add_argument("--latency-ns", nargs=2, type=int, metavar=("MIN", "MAX"))
    p.add_argument("--jitter-max-ns", type=int, dest="jitter_max_ns")
    p.add_argument("--seed", type=int)
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--trace", action="store_true", dest="write_trace",
                   help="write the event trace CSV")
    p.add_argument("--out", dest="out_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Simulate differentially private secure aggregation "
                    "for federated logistic regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a single simulation")
    _add_run_options(run_p)

    sweep_p = sub.add_parser("sweep", help="run a clients x epsilon x mode grid")
    _add_run_options(sweep_p)
    sweep_p.add_argument("--clients-grid", required=True,
                         help="comma-separated client counts, e.g. 100,200,300")
    sweep_p.add_argument("--epsilon-grid",
                         help="comma-separated epsilons; 'none' disables noise")
    sweep_p.add_argument("--mode-grid",
                         help="comma-separated neighborhoods (full,logn)")
    sweep_p.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes (one simulation each)")
    return parser


_FLAG_FIELDS = [
    "clients", "epsilon", "iterations", "local_iterations", "learning_rate",
    "alpha_reg", "neighborhood", "timing_mode", "fixed_compute_ns", "data_path",
    "synth_features", "sample_rows", "group_mode", "fractional_bits",
    "jitter_max_ns", "seed", "split_seed", "out_dir",
]


def config_from_args(args: argparse.Namespace) -> experiment.RunConfig:
    mapping = {}
    if args.config:
        mapping.update(load_config_file(args.config))
        if "config" in mapping and isinstance(mapping["config"], dict):
            mapping = mapping["config"]
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            mapping[name] = value
    if getattr(args, "no_noise", False):
        mapping["epsilon"] = None
    if getattr(args, "synth", None):
        rows, rate = args.synth
        mapping["data_path"] = None
        mapping["synth_rows"] = int(rows)
        mapping["synth_fraud_rate"] = float(rate)
    if getattr(args, "latency_ns", None):
        mapping["latency_range_ns"] = tuple(args.latency_ns)
    for flag in ("allow_small", "write_trace"):
        if getattr(args, flag, False):
            mapping[flag] = True
    return experiment.config_from_mapping(mapping)


def cmd_run(args) -> int:
    from .analysis import format_timing_table

    cfg = config_from_args(args)
    outcome = experiment.run_single(cfg)
    final = outcome.final_row
    print(f"run complete: {cfg.clients} clients, {cfg.iterations} iterations, "
          f"final loss {final['loss']:.6f}, final MCC {final['mcc']:.4f}")
    print(format_timing_table({cfg.clients: outcome.timing}))
    print(f"trace {outcome.trace_hash[:16]}")
    if cfg.out_dir:
        print(f"artifacts written to {cfg.out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = config_from_args(args)
    clients_grid = [int(tok) for tok in args.clients_grid.split(",") if tok.strip()]
    epsilon_grid = _parse_epsilon_list(args.epsilon_grid) if args.epsilon_grid else None
    mode_grid = ([tok.strip() for tok in args.mode_grid.split(",") if tok.strip()]
                 if args.mode_grid else None)
    rows = experiment.run_sweep(base, clients_grid, epsilon_grid, mode_grid,
                                jobs=args.jobs)
    failures = [r for r in rows if r["status"] != "ok"]
    for row in rows:
        print(f"n={row['clients']} eps={row['epsilon'] or 'off'} "
              f"{row['neighborhood']}: {row['status']}"
              + (f" mcc={row['final_mcc']}" if row["status"] == "ok" else ""))
    ok_rows = [r for r in rows if r["status"] == "ok"]
    if len({r["clients"] for r in ok_rows}) == len(ok_rows) and len(ok_rows) > 1:
        from .analysis import TimingReport, format_timing_table

        reports = {r["clients"]: TimingReport(
            total_ms=float(r["total_ms"]),
            server_mean_per_iteration_ms=float(r["server_mean_per_iteration_ms"]),
            user_dh_setup_ms=float(r["user_dh_setup_ms"]),
            user_training_ms=float(r["user_training_ms"]),
            user_encrypt_ms=float(r["user_encrypt_ms"])) for r in ok_rows}
        print(format_timing_table(reports))
    if base.out_dir:
        print(f"combined CSV written to {Path(base.out_dir) / 'sweep.csv'}")
    return EXIT_PROTOCOL if len(failures) == len(rows) and rows else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_sweep(args)
    except (ConfigError, ParameterError, IngestionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedsimError as exc:
        print(f"protocol abort: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
