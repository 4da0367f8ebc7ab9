import numpy as np
import pytest

from fedsim import data as datamod
from fedsim import experiment, group_crypto, learner, secure_agg


@pytest.fixture
def toy_group():
    return group_crypto.generate_group(64, test_mode=True)


@pytest.fixture
def codec():
    return secure_agg.FixedPointCodec(24)


def small_run_config(**overrides) -> experiment.RunConfig:
    """Fast protocol run defaults for tests; override per test."""
    base = dict(clients=3, epsilon=None, iterations=2, local_iterations=5,
                synth_rows=400, synth_features=4, sample_rows=80,
                timing_mode="fixed", seed=123, split_seed=9)
    base.update(overrides)
    return experiment.RunConfig(**base)


def plaintext_fedavg(cfg: experiment.RunConfig) -> np.ndarray:
    """Oracle: federated averaging with no masking, no encoding, no kernel.

    Uses the same data, sampling streams and trainer as the protocol so any
    difference isolates the secure-aggregation path.
    """
    full = experiment.load_dataset(cfg)
    train, _ = datamod.split(full, datamod.SplitConfig(cfg.train_fraction,
                                                       cfg.split_seed))
    tc = learner.TrainConfig(cfg.learning_rate, cfg.local_iterations, cfg.alpha_reg)
    weights = np.zeros(train.features.shape[1])
    for t in range(1, cfg.iterations + 1):
        updates = []
        for c in range(cfg.clients):
            s = datamod.sample_local(train, c, t, cfg.seed, rows=cfg.sample_rows,
                                     allow_small=cfg.allow_small)
            updates.append(learner.train(weights, s.features, s.labels, tc))
        weights = np.mean(updates, axis=0)
    return weights
