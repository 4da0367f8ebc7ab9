"""Post-run evaluation: classification metrics, timing aggregation, and the
two adversary experiments (snooping server, colluding clients).

All functions are pure consumers of a completed run's records.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import learner, secure_agg
from .errors import EvaluationError, ProtocolError
from .protocol import (PHASE_DH, PHASE_ENCRYPT, PHASE_SERVER_COMBINE,
                       PHASE_SERVER_RECEIVE, PHASE_TRAIN, RunRecord)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts at threshold 0.5; fraud (+1) is the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class TimingReport:
    """Simulated protocol timings in milliseconds, Table-style columns."""

    total_ms: float
    server_mean_per_iteration_ms: float
    user_dh_setup_ms: float
    user_training_ms: float
    user_encrypt_ms: float


@dataclass(frozen=True)
class RecoveryResult:
    target: int
    iteration: int
    recovered: np.ndarray
    true_weights: np.ndarray
    true_noisy_weights: np.ndarray
    colluder_count: int

    @property
    def error_vs_noisy(self) -> np.ndarray:
        """Residual against W_h + P_h; codec rounding only under full collusion."""
        return np.abs(self.recovered - self.true_noisy_weights)

    @property
    def error_vs_true(self) -> np.ndarray:
        """Residual against W_h; equals |P_h| plus rounding under full collusion."""
        return np.abs(self.recovered - self.true_weights)


def mcc(cm: ConfusionMatrix) -> float:
    """Matthews correlation coefficient; 0 when any denominator factor is 0."""
    tp, fp, tn, fn = (float(cm.tp), float(cm.fp), float(cm.tn), float(cm.fn))
    if min(tp, fp, tn, fn) < 0:
        raise EvaluationError("negative confusion-matrix count")
    denom = (tp + fn) * (tp + fp) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def confusion(predicted_fraud: np.ndarray, labels: np.ndarray) -> ConfusionMatrix:
    actual = labels > 0
    return ConfusionMatrix(
        tp=int(np.sum(predicted_fraud & actual)),
        fp=int(np.sum(predicted_fraud & ~actual)),
        tn=int(np.sum(~predicted_fraud & ~actual)),
        fn=int(np.sum(~predicted_fraud & actual)),
    )


def evaluate(weights: np.ndarray, test) -> tuple[float, ConfusionMatrix, float]:
    """Holdout loss (unregularized), confusion matrix and MCC at threshold 0.5."""
    if test.row_count == 0:
        raise EvaluationError("empty test set")
    test_loss = learner.loss(weights, test.features, test.labels, alpha_reg=0.0)
    prob = learner.predict(weights, test.features)
    cm = confusion(prob >= 0.5, test.labels)
    return test_loss, cm, mcc(cm)


# -- adversary experiments ---------------------------------------------------


@dataclass(frozen=True)
class SnoopingResult:
    target: int
    iteration: int
    estimate: np.ndarray
    true_weights: np.ndarray

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.estimate - self.true_weights)


def snooping_server(record: RunRecord, target: int,
                    iteration: int | None = None) -> SnoopingResult:
    """Best server-side estimate of one client's weights from its single
    masked message: center-lift each word and rescale.  With any unknown
    pairwise mask the words are uniform on [0, 2^64), so the estimate carries
    no information about the true weights."""
    iteration = iteration or max(it for it, _ in record.masked)
    key = (iteration, target)
    if key not in record.masked:
        raise ProtocolError(f"no masked vector for client {target} at iteration {iteration}")
    words = record.masked[key]
    estimate = secure_agg.decode_sum(record.codec, words, n=1)
    return SnoopingResult(target=target, iteration=iteration,
                          estimate=np.atleast_1d(estimate),
                          true_weights=record.client_weights[key])


def colluding_clients(record: RunRecord, honest: int,
                      colluders: list[int] | None = None,
                      iteration: int | None = None) -> RecoveryResult:
    """Collusion reconstruction from the broadcast model.

    Colluders recover the exact modular word sum from the broadcast average
    (n and the codec are public), subtract their own encoded weights and
    noise, and decode.  With all n-1 other clients colluding the pairwise
    masks cancel, leaving the honest client's noisy weights up to codec
    rounding; smaller coalitions leave unknown masks in place and the
    residual blows up to mask scale.
    """
    iteration = iteration or max(record.broadcasts)
    if iteration not in record.broadcasts:
        raise ProtocolError(f"no broadcast recorded for iteration {iteration}")
    if colluders is None:
        colluders = [c for c in range(record.n) if c != honest]
    if honest in colluders:
        raise ProtocolError("honest client listed among colluders")

    shared = record.broadcasts[iteration]
    # Invert the server's decode: W = center_lift(S) / 2^F / n.  Exact while
    # the word sum stays below 2^52 (float64 round-trip), far above the
    # decode-range check enforced at startup for practical configurations.
    total_signed = np.rint(shared * record.n * record.codec.scale).astype(np.int64)
    total_words = total_signed.view(np.uint64)

    known = np.zeros_like(total_words)
    for c in colluders:
        w_words = secure_agg.encode(record.codec, record.client_weights[(iteration, c)])
        e_words = secure_agg.encode(record.codec, record.client_noise[(iteration, c)])
        known = known + w_words + e_words
    if len(colluders) == record.n - 1:
        residual_words = total_words - known
    else:
        # Partial collusion: subtract the colluders' yi instead, which keeps
        # every unknown client's masks in the residual.
        known = np.zeros_like(total_words)
        for c in colluders:
            known = known + record.masked[(iteration, c)]
        residual_words = total_words - known

    recovered = np.atleast_1d(secure_agg.decode_sum(record.codec, residual_words, n=1))
    truth = record.client_weights[(iteration, honest)]
    noisy = truth + record.client_noise[(iteration, honest)]
    return RecoveryResult(target=honest, iteration=iteration, recovered=recovered,
                          true_weights=truth, true_noisy_weights=noisy,
                          colluder_count=len(colluders))


# -- timing -------------------------------------------------------------------


def timing_report(charges, n_clients: int, iterations: int,
                  end_time_ns: int) -> TimingReport:
    """Aggregate charged durations into the reported columns.

    DH setup is a one-time per-user cost; training and encrypt are means per
    user per iteration; server time is the mean per iteration of receiving,
    storing and combining the submissions.
    """
    buckets: dict[str, float] = {}
    for rec in charges:
        buckets[rec.phase] = buckets.get(rec.phase, 0.0) + rec.nanoseconds

    def mean_ms(phase: str, denom: int) -> float:
        return buckets.get(phase, 0.0) / denom / 1e6 if denom else 0.0

    server_total = buckets.get(PHASE_SERVER_RECEIVE, 0.0) + buckets.get(PHASE_SERVER_COMBINE, 0.0)
    return TimingReport(
        total_ms=end_time_ns / 1e6,
        server_mean_per_iteration_ms=server_total / max(iterations, 1) / 1e6,
        user_dh_setup_ms=mean_ms(PHASE_DH, n_clients),
        user_training_ms=mean_ms(PHASE_TRAIN, n_clients * iterations),
        user_encrypt_ms=mean_ms(PHASE_ENCRYPT, n_clients * iterations),
    )


def format_timing_table(reports: dict[int, TimingReport]) -> str:
    """Human-readable summary, one row per client count (ms)."""
    lines = [f"{'Users':>6} {'Total':>10} {'Server':>8} "
             f"{'DH Setup':>9} {'Training':>9} {'Encrypt':>8}"]
    for n in sorted(reports):
        t = reports[n]
        lines.append(f"{n:>6} {t.total_ms:>10.1f} {t.server_mean_per_iteration_ms:>8.3f} "
                     f"{t.user_dh_setup_ms:>9.3f} {t.user_training_ms:>9.3f} "
                     f"{t.user_encrypt_ms:>8.3f}")
    return "\n".join(lines)
