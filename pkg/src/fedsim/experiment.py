"""Experiment runner: validated run configuration, single runs, and sweeps.

A run is fully determined by its RunConfig; the manifest written next to the
output CSVs contains every field, so re-running a manifest reproduces the
metrics byte for byte (fixed timing mode also reproduces the trace hash).
"""

import csv
import dataclasses
import json
import logging
import math
import multiprocessing
from dataclasses import dataclass
from pathlib import Path

from . import analysis, data as datamod, group_crypto, learner, privacy
from . import protocol, secure_agg, simkernel
from .errors import ConfigError
from .protocol import ClientAgent, NeighborGraph, RunRecord, ServerAgent, StartSetup

log = logging.getLogger(__name__)

# Laplace tail bound used by the decode-range check: P(|X| > q b) = 1e-12.
_NOISE_QUANTILE = math.log(1e12)


@dataclass(frozen=True)
class RunConfig:
    clients: int = 10
    epsilon: float | None = 5e-4          # None disables noise
    iterations: int = 30
    local_iterations: int = 250
    learning_rate: float = 0.01
    alpha_reg: float = 1.0
    neighborhood: str = protocol.FULL
    timing_mode: str = simkernel.MEASURED
    fixed_compute_ns: int = 1_000_000
    latency_range_ns: tuple[int, int] = (200_000, 2_000_000)
    jitter_max_ns: int = 100_000
    fractional_bits: int = 24
    group_mode: str = "toy"               # "toy" or "modp2048"
    lambda_bits: int = 64
    data_path: str | None = None
    synth_rows: int = 50_000
    synth_fraud_rate: float = 0.002
    synth_features: int = datamod.SYNTH_FEATURES
    standardize_amount: bool = False
    sample_rows: int = datamod.DEFAULT_SAMPLE_ROWS
    allow_small: bool = False
    train_fraction: float = 0.75
    split_seed: int = 1
    seed: int = 42
    weight_bound: float = 100.0           # assumed max |w| for the range check
    event_ceiling: int = simkernel.DEFAULT_EVENT_CEILING
    record_payloads: bool = False
    write_trace: bool = False
    out_dir: str | None = None

    def validate(self) -> None:
        if self.clients < 1:
            raise ConfigError(f"clients must be >= 1, got {self.clients}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.neighborhood not in (protocol.FULL, protocol.LOGN):
            raise ConfigError(f"unknown neighborhood {self.neighborhood!r}")
        if self.timing_mode not in (simkernel.MEASURED, simkernel.FIXED):
            raise ConfigError(f"unknown timing mode {self.timing_mode!r}")
        if self.group_mode not in ("toy", "modp2048"):
            raise ConfigError(f"unknown group mode {self.group_mode!r}")
        if self.sample_rows < 1:
            raise ConfigError(f"sample_rows must be >= 1, got {self.sample_rows}")
        if self.seed < 0 or self.split_seed < 0:
            raise ConfigError("seeds must be non-negative")
        lo, hi = self.latency_range_ns
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad latency range {self.latency_range_ns}")
        if self.jitter_max_ns < 0:
            raise ConfigError("jitter_max_ns must be >= 0")
        # Instantiating validates the field ranges.
        learner.TrainConfig(learning_rate=self.learning_rate,
                            local_iterations=self.local_iterations,
                            alpha_reg=self.alpha_reg)
        codec = secure_agg.FixedPointCodec(self.fractional_bits)
        noise_tail = 0.0
        if self.epsilon is not None:
            cfg = privacy.PrivacyConfig(epsilon=self.epsilon, n=self.clients,
                                        k=self.sample_rows, alpha_reg=self.alpha_reg)
            noise_tail = cfg.scale * _NOISE_QUANTILE
        # Decoded sums must stay inside the center-lift range.
        if self.clients * (self.weight_bound + noise_tail) >= codec.magnitude_bound:
            raise ConfigError(
                "decode range check failed: "
                f"{self.clients} * ({self.weight_bound} + {noise_tail:.3g}) "
                f">= {codec.magnitude_bound}; raise epsilon or lower fractional_bits")

    def resolved_lambda_bits(self) -> int:
        return 2048 if self.group_mode == "modp2048" else self.lambda_bits


@dataclass
class RunOutcome:
    config: RunConfig
    record: RunRecord
    metrics: list[dict]
    timing: analysis.TimingReport
    trace_hash: str
    end_time_ns: int
    kernel: simkernel.Kernel
    train: datamod.Dataset
    test: datamod.Dataset

    @property
    def final_row(self) -> dict:
        return self.metrics[-1]


def load_dataset(cfg: RunConfig) -> datamod.Dataset:
    if cfg.data_path:
        return datamod.load_csv(cfg.data_path, standardize_amount=cfg.standardize_amount)
    return datamod.synth(cfg.synth_rows, cfg.synth_fraud_rate,
                         m=cfg.synth_features, seed=cfg.split_seed)


def run_single(cfg: RunConfig) -> RunOutcome:
    """Execute one simulation end to end and (optionally) write artifacts."""
    cfg.validate()
    full = load_dataset(cfg)
    train, test = datamod.split(full, datamod.SplitConfig(cfg.train_fraction,
                                                          cfg.split_seed))
    weight_count = train.features.shape[1]

    group = group_crypto.generate_group(cfg.resolved_lambda_bits(),
                                        test_mode=cfg.group_mode == "toy")
    codec = secure_agg.FixedPointCodec(cfg.fractional_bits)
    privacy_cfg = None
    if cfg.epsilon is not None:
        privacy_cfg = privacy.PrivacyConfig(epsilon=cfg.epsilon, n=cfg.clients,
                                            k=cfg.sample_rows, alpha_reg=cfg.alpha_reg)
        log.info("noise scale b = %.6g (epsilon=%g, n=%d, k=%d, alpha_reg=%g)",
                 privacy_cfg.scale, cfg.epsilon, cfg.clients, cfg.sample_rows,
                 cfg.alpha_reg)
    graph = NeighborGraph.build(cfg.clients, cfg.neighborhood)
    record = RunRecord(n=cfg.clients, iterations=cfg.iterations, codec=codec,
                       group=group, graph=graph)

    latency = simkernel.LatencyModel.build(cfg.clients + 1, cfg.latency_range_ns,
                                           cfg.jitter_max_ns, cfg.seed)
    kernel = simkernel.Kernel(latency, timing_mode=cfg.timing_mode,
                              fixed_compute_ns=cfg.fixed_compute_ns,
                              event_ceiling=cfg.event_ceiling,
                              record_payloads=cfg.record_payloads)
    train_cfg = learner.TrainConfig(learning_rate=cfg.learning_rate,
                                    local_iterations=cfg.local_iterations,
                                    alpha_reg=cfg.alpha_reg)
    server = ServerAgent(server_id=cfg.clients, n_clients=cfg.clients,
                         codec=codec, iterations=cfg.iterations, record=record)
    kernel.register(server)
    for cid in range(cfg.clients):
        kernel.register(ClientAgent(
            client_id=cid, server_id=cfg.clients, graph=graph, group=group,
            codec=codec, privacy_config=privacy_cfg, train_config=train_cfg,
            train_data=train, weight_count=weight_count, run_seed=cfg.seed,
            record=record, sample_rows=cfg.sample_rows, allow_small=cfg.allow_small))
    for cid in range(cfg.clients):
        kernel.schedule_start(cid, StartSetup(), at=0)

    kernel.run()
    missing = [t for t in range(1, cfg.iterations + 1) if t not in record.broadcasts]
    if missing:
        raise protocol.ProtocolError(f"run ended without broadcasts for iterations {missing}")

    metrics = []
    for t in range(1, cfg.iterations + 1):
        loss, cm, mcc = analysis.evaluate(record.broadcasts[t], test)
        metrics.append({"iteration": t, "loss": loss, "mcc": mcc,
                        "tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn})
    timing = analysis.timing_report(kernel.charges, cfg.clients, cfg.iterations,
                                    kernel.end_time())
    outcome = RunOutcome(config=cfg, record=record, metrics=metrics, timing=timing,
                         trace_hash=kernel.trace_hash(), end_time_ns=kernel.end_time(),
                         kernel=kernel, train=train, test=test)
    if cfg.out_dir:
        write_outputs(outcome, Path(cfg.out_dir))
    return outcome


# -- artifacts ---------------------------------------------------------------

METRIC_COLUMNS = ["iteration", "loss", "mcc", "tp", "fp", "tn", "fn"]
TIMING_COLUMNS = ["total_ms", "server_mean_per_iteration_ms", "user_dh_setup_ms",
                  "user_training_ms", "user_encrypt_ms"]


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def manifest_dict(outcome: RunOutcome) -> dict:
    cfg = dataclasses.asdict(outcome.config)
    cfg["latency_range_ns"] = list(outcome.config.latency_range_ns)
    return {
        "config": cfg,
        "group": outcome.record.group.to_strings(),
        "outputs": {
            "trace_hash": outcome.trace_hash,
            "end_time_ns": outcome.end_time_ns,
            "final_mcc": outcome.final_row["mcc"],
            "final_loss": outcome.final_row["loss"],
        },
    }


def write_outputs(outcome: RunOutcome, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest_dict(outcome), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in outcome.metrics:
            writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    with open(out_dir / "timing.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMING_COLUMNS)
        t = outcome.timing
        writer.writerow([_fmt(getattr(t, c)) for c in TIMING_COLUMNS])
    if outcome.config.write_trace:
        simkernel.write_trace_csv(outcome.kernel.trace, out_dir / "trace.csv")


def config_from_mapping(raw: dict) -> RunConfig:
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "latency_range_ns" in raw and raw["latency_range_ns"] is not None:
        raw = dict(raw, latency_range_ns=tuple(raw["latency_range_ns"]))
    return RunConfig(**raw)


# -- sweeps --------------------------------------------------------------------

SWEEP_COLUMNS = ["clients", "epsilon", "neighborhood", "timing_mode", "seed",
                 "status", "final_loss", "final_mcc"] + TIMING_COLUMNS


def _run_cell(cfg: RunConfig) -> dict:
    row = {"clients": cfg.clients,
           "epsilon": "" if cfg.epsilon is None else _fmt(cfg.epsilon),
           "neighborhood": cfg.neighborhood, "timing_mode": cfg.timing_mode,
           "seed": cfg.seed}
    try:
        outcome = run_single(cfg)
    except Exception as exc:  # record the failure, keep sweeping
        row.update({"status": f"error: {exc}", "final_loss": "", "final_mcc": "",
                    **{c: "" for c in TIMING_COLUMNS}})
        return row
    row.update({"status": "ok",
                "final_loss": _fmt(outcome.final_row["loss"]),
                "final_mcc": _fmt(outcome.final_row["mcc"])})
    for c in TIMING_COLUMNS:
        row[c] = _fmt(getattr(outcome.timing, c))
    return row


def sweep_cells(base: RunConfig, clients_grid, epsilon_grid, mode_grid) -> list[RunConfig]:
    cells = []
    for n in clients_grid:
        for eps in epsilon_grid:
            for mode in mode_grid:
                sub_dir = None
                if base.out_dir:
                    eps_tag = "none" if eps is None else f"{eps:g}"
                    sub_dir = str(Path(base.out_dir) / f"cell_n{n}_eps{eps_tag}_{mode}")
                cells.append(dataclasses.replace(
                    base, clients=n, epsilon=eps, neighborhood=mode, out_dir=sub_dir))
    return cells


def run_sweep(base: RunConfig, clients_grid, epsilon_grid=None, mode_grid=None,
              jobs: int = 1) -> list[dict]:
    """Run the grid; one combined CSV row per cell, failures recorded inline."""
    epsilon_grid = list(epsilon_grid) if epsilon_grid is not None else [base.epsilon]
    mode_grid = list(mode_grid) if mode_grid is not None else [base.neighborhood]
    cells = sweep_cells(base, list(clients_grid), epsilon_grid, mode_grid)
    if jobs > 1 and len(cells) > 1:
        with multiprocessing.Pool(processes=jobs) as pool:
            rows = pool.map(_run_cell, cells)
    else:
        rows = [_run_cell(cfg) for cfg in cells]
    if base.out_dir:
        out_dir = Path(base.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
