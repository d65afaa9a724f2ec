"""The extraction attack: sample queries, harvest oracle predictions, train the
surrogate from scratch or by fine-tuning a pretrained model.

The attack path only touches the oracle's query surface; query-pool labels
never reach it. "Pretrained" surrogates are trained on an auxiliary dataset
disjoint from all experiment data.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import models
from .data import LabeledDataset, one_hot
from .errors import BudgetExceededError, ConfigError, FormatError

FXD_MAGIC = b"FXD1"


@dataclass(frozen=True)
class QuerySet:
    inputs: np.ndarray
    indices: tuple  # provenance into the query pool
    seed: int


@dataclass(frozen=True)
class ExtractedDataset:
    inputs: np.ndarray  # [n, ...]
    probabilities: np.ndarray  # [n, class_count], rows sum to 1

    def __len__(self):
        return len(self.inputs)


@dataclass(frozen=True)
class AttackConfig:
    n_query: int
    surrogate_spec: models.ArchitectureSpec
    surrogate_train: models.TrainConfig
    pre_train: bool = False
    pretrain_source: LabeledDataset = None
    pretrain_train: models.TrainConfig = None
    fine_tune: models.TrainConfig = None
    seed: int = 0

    def __post_init__(self):
        if self.n_query < 1:
            raise ConfigError("n_query must be positive")
        if self.pre_train and self.pretrain_source is None:
            raise ConfigError("pre_train requires a pretrain_source dataset")
        if self.pre_train and (self.pretrain_train is None or self.fine_tune is None):
            raise ConfigError("pre_train requires pretrain_train and fine_tune configs")


def sample_queries(query_pool, n_query, seed):
    """Uniform without-replacement sample of query inputs (labels dropped)."""
    if n_query > len(query_pool):
        raise ConfigError(f"n_query {n_query} exceeds pool size {len(query_pool)}")
    perm = np.random.default_rng(np.random.PCG64(seed)).permutation(len(query_pool))[:n_query]
    return QuerySet(query_pool.inputs[perm].copy(), tuple(int(i) for i in perm), seed)


def harvest(oracle, query_set):
    """One metered oracle call per query; responses become soft-label targets."""
    n = len(query_set.inputs)
    if getattr(oracle, "remaining_budget", n) < n:
        raise BudgetExceededError(f"budget shortfall: need {n} queries")
    responses = oracle.query_batch(query_set.inputs)
    probs = np.stack([r.probabilities for r in responses])
    return ExtractedDataset(query_set.inputs, probs)


def pretrain_surrogate(spec, pretrain_source, train_config):
    """Supervised training on the auxiliary dataset; provenance 'pretrained'."""
    model = models.initialize(spec, train_config.seed)
    targets = one_hot(pretrain_source.labels, spec.class_count)
    return models.train(
        model, pretrain_source.inputs, targets, train_config, provenance="pretrained"
    )


def _row_keys(inputs):
    return {np.asarray(row, dtype=np.float64).tobytes() for row in inputs}


def check_disjoint(aux, pool):
    """Reject auxiliary data that shares any input row with the query pool."""
    if _row_keys(aux.inputs) & _row_keys(pool.inputs):
        raise ConfigError("pretrain source overlaps the experiment's query pool")


def run_attack(oracle, query_pool, attack_config):
    """Full attack: sample, harvest, then train or fine-tune the surrogate."""
    cfg = attack_config
    query_set = sample_queries(query_pool, cfg.n_query, cfg.seed)
    extracted = harvest(oracle, query_set)
    if cfg.pre_train:
        check_disjoint(cfg.pretrain_source, query_pool)
        surrogate = pretrain_surrogate(cfg.surrogate_spec, cfg.pretrain_source, cfg.pretrain_train)
        if cfg.fine_tune.epochs > 0:
            surrogate = models.train(
                surrogate, extracted.inputs, extracted.probabilities, cfg.fine_tune,
                provenance="fine_tuned",
            )
    else:
        surrogate = models.initialize(cfg.surrogate_spec, cfg.surrogate_train.seed)
        surrogate = models.train(
            surrogate, extracted.inputs, extracted.probabilities, cfg.surrogate_train,
            provenance="centralized_trained",
        )
    return surrogate, extracted


def save_extracted(dataset, path):
    """FXD1 container: magic, JSON header, per-pair float64 LE input+probability data."""
    header = {
        "count": len(dataset),
        "input_shape": list(dataset.inputs.shape[1:]),
        "class_count": int(dataset.probabilities.shape[1]),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(FXD_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for x, p in zip(dataset.inputs, dataset.probabilities):
            f.write(x.astype("<f8").tobytes())
            f.write(p.astype("<f8").tobytes())


def load_extracted(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != FXD_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {FXD_MAGIC!r}")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8 : 8 + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"unparseable header: {exc}") from exc
    count = header["count"]
    in_shape = tuple(header["input_shape"])
    k = header["class_count"]
    per_in = int(np.prod(in_shape))
    expected = 8 + hlen + count * (per_in + k) * 8
    if len(data) != expected:
        raise FormatError(f"payload size {len(data)} != expected {expected}")
    body = np.frombuffer(data[8 + hlen :], dtype="<f8").reshape(count, per_in + k)
    inputs = body[:, :per_in].reshape((count,) + in_shape).astype(np.float64)
    probs = body[:, per_in:].astype(np.float64)
    return ExtractedDataset(inputs, probs)
