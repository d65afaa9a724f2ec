"""Simulated federated training: local updates, FedAvg, and the round loop.

The single-client federation is bit-identical to centralized training with
matched seeds; local updates advance the epoch offset so both paths draw
the same shuffles.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import models
from .data import one_hot
from .errors import AggregationError, ConfigError


@dataclass(frozen=True)
class FederationConfig:
    client_count: int
    rounds: int
    local_train: models.TrainConfig
    local_epochs_per_round: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.client_count < 1:
            raise ConfigError("client_count must be >= 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.local_epochs_per_round < 1:
            raise ConfigError("local_epochs_per_round must be >= 1")


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    sample_counts: tuple
    local_losses: tuple
    global_hash: str

    def to_json(self):
        return json.dumps(
            {
                "round": self.round_index,
                "sample_counts": list(self.sample_counts),
                "local_losses": list(self.local_losses),
                "global_hash": self.global_hash,
            },
            sort_keys=True,
        )


def local_update(global_model, shard, local_train, epochs=1, epoch_offset=0):
    """Train a copy of the global model on one client shard."""
    if len(shard) == 0:
        raise ConfigError("empty client shard")
    cfg = models.TrainConfig(
        learning_rate=local_train.learning_rate,
        epochs=epochs,
        batch_size=local_train.batch_size,
        seed=local_train.seed,
        momentum=local_train.momentum,
    )
    targets = one_hot(shard.labels, global_model.spec.class_count)
    return models.train(
        global_model, shard.inputs, targets, cfg,
        epoch_offset=epoch_offset, provenance=global_model.provenance,
    )


def fedavg(updates):
    """Sample-count-weighted parameter mean, accumulated in client-index order."""
    if not updates:
        raise AggregationError("no client updates to aggregate")
    first = updates[0][0]
    total = sum(count for _, count in updates)
    merged = []
    for i, (name, _) in enumerate(first.parameters):
        acc = np.zeros_like(first.parameters[i][1])
        for model, count in updates:
            if model.spec != first.spec:
                raise AggregationError(f"spec mismatch: {model.spec} vs {first.spec}")
            pname, arr = model.parameters[i]
            if pname != name:
                raise AggregationError(f"parameter order mismatch: {pname} vs {name}")
            acc += (count / total) * arr
        merged.append((name, acc))
    return models.ModelInstance(first.spec, tuple(merged), first.provenance)


def run_federation(shards, arch_spec, fed_config):
    """Initialize, then T rounds of broadcast / local update / FedAvg."""
    if fed_config.client_count != shards.client_count:
        raise ConfigError(
            f"config expects {fed_config.client_count} clients, shards hold {shards.client_count}"
        )
    global_model = models.initialize(arch_spec, fed_config.seed)
    records = []
    for t in range(fed_config.rounds):
        offset = t * fed_config.local_epochs_per_round
        updates = []
        losses = []
        for shard in shards.shards:
            updated = local_update(
                global_model, shard, fed_config.local_train,
                epochs=fed_config.local_epochs_per_round, epoch_offset=offset,
            )
            updates.append((updated, len(shard)))
            targets = one_hot(shard.labels, arch_spec.class_count)
            losses.append(models.mean_loss(updated, shard.inputs, targets))
        global_model = fedavg(updates)
        records.append(
            RoundRecord(t, tuple(len(s) for s in shards.shards), tuple(losses), global_model.param_hash())
        )
    return models.with_provenance(global_model, "federated_trained"), records


def run_centralized(victim_train, arch_spec, train_config):
    """Plain SGD on the whole victim-train set."""
    model = models.initialize(arch_spec, train_config.seed)
    targets = one_hot(victim_train.labels, arch_spec.class_count)
    return models.train(
        model, victim_train.inputs, targets, train_config, provenance="centralized_trained"
    )


def write_round_records(records, path):
    with open(path, "w") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")
