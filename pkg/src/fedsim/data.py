"""Dataset ingestion, train/test split, per-iteration client samples, synth data.

The fraud CSV keeps every V-column plus Amount, drops Time, appends a constant
intercept column and maps Class {0, 1} to labels {-1, +1}.  Clients draw
fresh 1000-row samples from a shared training pool each protocol iteration.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import rng as rngmod
from .errors import ConfigError, IngestionError

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_ROWS = 1000
SYNTH_FEATURES = 29  # mirrors the fraud file: V1..V28 plus Amount


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with intercept column appended, labels in {-1, +1}.

    ``source_rows`` tracks each row's index in the originating dataset so
    train/test disjointness can be audited after sampling.
    """

    features: np.ndarray
    labels: np.ndarray
    source_rows: np.ndarray

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise IngestionError("row count mismatch between features and labels")

    @property
    def row_count(self) -> int:
        return self.features.shape[0]

    @property
    def positives(self) -> int:
        return int(np.sum(self.labels > 0))


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def _finish(features: np.ndarray, labels: np.ndarray,
            source_rows: np.ndarray | None = None) -> Dataset:
    n = features.shape[0]
    intercept = np.ones((n, 1), dtype=np.float64)
    full = np.hstack([features.astype(np.float64), intercept])
    if source_rows is None:
        source_rows = np.arange(n, dtype=np.int64)
    return Dataset(features=full, labels=labels.astype(np.float64),
                   source_rows=source_rows)


def load_csv(path, standardize_amount: bool = False) -> Dataset:
    """Ingest the credit-card fraud CSV (header: Time, V*, Amount, Class)."""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise IngestionError(f"data file not found: {path}")
    except Exception as exc:  # malformed CSV structure
        raise IngestionError(f"cannot parse {path}: {exc}")

    required = {"Time", "Amount", "Class"}
    missing = required - set(frame.columns)
    if missing:
        raise IngestionError(f"missing columns: {sorted(missing)}")
    v_cols = [c for c in frame.columns if c.startswith("V")]
    if not v_cols:
        raise IngestionError("no V-columns found in header")

    feature_cols = v_cols + ["Amount"]
    numeric = frame[feature_cols + ["Class"]].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1)
    if bad.any():
        # +2: header line plus 1-based numbering.
        row = int(numeric.index[bad][0]) + 2
        raise IngestionError(f"unparseable or missing value at data row {row}")

    features = numeric[feature_cols].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(features)):
        row = int(np.argwhere(~np.isfinite(features))[0][0]) + 2
        raise IngestionError(f"non-finite value at data row {row}")
    if standardize_amount:
        amount = features[:, -1]
        features[:, -1] = (amount - amount.mean()) / (amount.std() or 1.0)

    raw_class = numeric["Class"].to_numpy()
    if not np.all(np.isin(raw_class, (0, 1))):
        raise IngestionError("Class column contains values outside {0, 1}")
    labels = np.where(raw_class == 1, 1.0, -1.0)
    ds = _finish(features, labels)
    log.info("loaded %s: %d rows, %d fraud, %d feature columns",
             path, ds.row_count, ds.positives, ds.features.shape[1])
    return ds


def split(ds: Dataset, cfg: SplitConfig) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive train/test partition; train gets floor(f * N) rows."""
    if ds.row_count == 0:
        raise ConfigError("cannot split an empty dataset")
    order = rngmod.stream(cfg.seed, rngmod.SPLIT).permutation(ds.row_count)
    cut = int(cfg.train_fraction * ds.row_count)
    train_idx, test_idx = np.sort(order[:cut]), np.sort(order[cut:])
    train = Dataset(features=ds.features[train_idx], labels=ds.labels[train_idx],
                    source_rows=ds.source_rows[train_idx])
    test = Dataset(features=ds.features[test_idx], labels=ds.labels[test_idx],
                   source_rows=ds.source_rows[test_idx])
    return train, test


def sample_local(train: Dataset, client: int, iteration: int, run_seed: int,
                 rows: int = DEFAULT_SAMPLE_ROWS, allow_small: bool = False) -> Dataset:
    """Draw the client's local sample for one iteration, without replacement."""
    if train.row_count < rows:
        if not allow_small:
            raise ConfigError(
                f"training pool has {train.row_count} rows, need {rows} "
                "(set allow_small for toy runs)")
        idx = np.arange(train.row_count)
    else:
        gen = rngmod.stream(run_seed, rngmod.SAMPLE, client, iteration)
        idx = gen.choice(train.row_count, size=rows, replace=False)
    return Dataset(features=train.features[idx], labels=train.labels[idx],
                   source_rows=train.source_rows[idx])


def synth(n_rows: int, fraud_rate: float, m: int = SYNTH_FEATURES,
          seed: int = 0) -> Dataset:
    """Linearly separable stand-in for the fraud file.

    Class-conditional unit-variance Gaussians, per-feature mean separation 2.0
    (centers at -1 and +1 on every feature), fraud prevalence fraud_rate.
    """
    if not (0.0 < fraud_rate < 1.0):
        raise ConfigError(f"fraud_rate must be in (0, 1), got {fraud_rate}")
    if n_rows < 1 or m < 1:
        raise ConfigError("n_rows and m must be >= 1")
    gen = rngmod.stream(seed, rngmod.SYNTH)
    labels = np.where(gen.random(n_rows) < fraud_rate, 1.0, -1.0)
    centers = labels[:, None] * np.ones((1, m))
    features = centers + gen.standard_normal((n_rows, m))
    return _finish(features, labels)
