"""Experiment runner: config parsing, the sweep grid, and CSV/JSON reports.

The grid is {client counts} x {query budgets} x {scratch, pretrained} x {seeds}.
One victim is trained per client count and reused across that arm. Every
per-cell seed is derived from the master seed and the cell coordinates, so
extending the grid never perturbs existing cells.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import data, extraction, federated, metrics, models
from .errors import ConfigError, FedexError
from .oracle import PredictionOracle

CSV_HEADER = "dataset,arch,clients,budget,branch,seed,acc_victim,acc_extracted,fidelity,kl,wall_time_s"

BRANCHES = ("scratch", "pretrained")


def derive_seed(master_seed, *coords):
    """Stable 64-bit seed from the master seed and arbitrary coordinates."""
    text = "|".join([str(int(master_seed))] + [str(c) for c in coords])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ExperimentConfig:
    dataset: str = "blobs"
    arch: str = "mlp"
    hidden: int = 32

    blob_classes: int = 3
    blob_per_class: int = 667
    blob_dim: int = 8
    blob_separation: float = 4.0
    blob_test_per_class: int = 1000

    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""

    client_counts: tuple = (0, 5, 10)  # 0 denotes centralized
    query_budgets: tuple = (50, 100, 200, 400)
    branches: tuple = ("scratch",)
    seeds: tuple = (0, 1, 2, 3, 4)
    master_seed: int = 0

    rounds: int = 15
    local_epochs: int = 1
    victim_epochs: int = 15
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 16

    surrogate_epochs: int = 20
    surrogate_lr: float = 0.05
    pretrain_epochs: int = 200
    pretrain_lr: float = 0.5
    pretrain_batch: int = 0  # 0 = full batch; small batches leave the MLP short of its ceiling
    pretrain_per_class: int = 2000
    pretrain_count: int = 2000  # carved from the query half for IDX datasets
    fine_tune_epochs: int = 30
    fine_tune_lr: float = 0.02
    fine_tune_batch: int = 0  # 0 = full batch

    oracle_mode: str = "probability_vector"
    record_timing: bool = True
    out_dir: str = ""

    def __post_init__(self):
        if self.dataset not in ("blobs", "idx"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        for b in self.branches:
            if b not in BRANCHES:
                raise ConfigError(f"unknown branch {b!r}")
        if not self.out_dir:
            self.out_dir = os.environ.get("FEDEX_OUT_DIR", "results")


_TUPLE_KEYS = {"client_counts", "query_budgets", "seeds", "branches"}
_BOOL_KEYS = {"record_timing"}


def parse_config(path):
    """Read a flat `key = value` config file (# starts a comment)."""
    values = {}
    defaults = ExperimentConfig()
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not hasattr(defaults, key):
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            default = getattr(defaults, key)
            if key in _TUPLE_KEYS:
                parts = [p.strip() for p in value.split(",") if p.strip()]
                values[key] = tuple(parts) if key == "branches" else tuple(int(p) for p in parts)
            elif key in _BOOL_KEYS:
                values[key] = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, bool):
                values[key] = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                values[key] = int(value)
            elif isinstance(default, float):
                values[key] = float(value)
            else:
                values[key] = value
    return ExperimentConfig(**values)


@dataclass(frozen=True)
class ExperimentRow:
    dataset: str
    arch: str
    clients: int
    budget: int
    branch: str
    seed: int
    report: metrics.MetricsReport = None
    wall_time: float = 0.0
    victim_hash: str = ""
    error: str = ""


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple

    def to_dict(self):
        out = []
        for r in self.rows:
            d = {
                "dataset": r.dataset, "arch": r.arch, "clients": r.clients,
                "budget": r.budget, "branch": r.branch, "seed": r.seed,
                "wall_time": r.wall_time, "victim_hash": r.victim_hash, "error": r.error,
            }
            d["metrics"] = r.report.to_dict() if r.report is not None else None
            out.append(d)
        return {"rows": out}

    @classmethod
    def from_dict(cls, payload):
        rows = []
        for d in payload["rows"]:
            rep = d["metrics"]
            rows.append(
                ExperimentRow(
                    d["dataset"], d["arch"], d["clients"], d["budget"], d["branch"], d["seed"],
                    metrics.MetricsReport(**rep) if rep is not None else None,
                    d["wall_time"], d["victim_hash"], d["error"],
                )
            )
        return cls(tuple(rows))


def build_bundle(config):
    """Construct (bundle, pretrain_source, arch_spec) for a config."""
    if config.dataset == "blobs":
        base_seed = derive_seed(config.master_seed, "data")
        base = data.synth_blobs(
            config.blob_classes, config.blob_per_class, config.blob_dim,
            config.blob_separation, base_seed,
        )
        test = data.synth_blobs(
            config.blob_classes, config.blob_test_per_class, config.blob_dim,
            config.blob_separation, derive_seed(config.master_seed, "test"), name="blobs/test",
        )
        bundle = data.split(base, derive_seed(config.master_seed, "split"), test=test)
        aux = data.synth_blobs(
            config.blob_classes, config.pretrain_per_class, config.blob_dim,
            config.blob_separation, derive_seed(config.master_seed, "pretrain"), name="blobs/aux",
        )
        spec = models.ArchitectureSpec("mlp", (config.blob_dim,), config.blob_classes, config.hidden)
        return bundle, aux, spec

    base = data.load_idx(config.idx_train_images, config.idx_train_labels, name="idx/train")
    test = data.load_idx(config.idx_test_images, config.idx_test_labels, name="idx/test")
    bundle = data.split(base, derive_seed(config.master_seed, "split"), test=test)
    pool = bundle.query_pool
    aux = None
    if "pretrained" in config.branches:
        if config.pretrain_count >= len(pool):
            raise ConfigError("pretrain_count must leave a non-empty query pool")
        aux = pool.subset(range(len(pool) - config.pretrain_count, len(pool)), "idx/aux")
        pool = pool.subset(range(len(pool) - config.pretrain_count), "idx/query_pool")
        bundle = data.DatasetBundle(bundle.victim_train, pool, bundle.test, bundle.split_seed)
    shape = base.inputs.shape[1:]
    spec = models.ArchitectureSpec(config.arch, shape if config.arch != "mlp" else (int(np.prod(shape)),),
                                   int(base.labels.max()) + 1, config.hidden)
    return bundle, aux, spec


def train_victim(config, bundle, spec, clients):
    """One victim per (client count, master seed); clients == 0 is centralized."""
    seed = derive_seed(config.master_seed, "victim", clients)
    train_cfg = models.TrainConfig(
        learning_rate=config.learning_rate, epochs=config.victim_epochs,
        batch_size=config.batch_size, seed=seed, momentum=config.momentum,
    )
    if clients == 0:
        return federated.run_centralized(bundle.victim_train, spec, train_cfg), []
    shards = data.shard(bundle.victim_train, clients, derive_seed(config.master_seed, "shard", clients))
    fed_cfg = federated.FederationConfig(
        client_count=clients, rounds=config.rounds,
        local_train=models.TrainConfig(
            learning_rate=config.learning_rate, epochs=1, batch_size=min(config.batch_size, min(len(s) for s in shards.shards)),
            seed=seed, momentum=config.momentum,
        ),
        local_epochs_per_round=config.local_epochs, seed=seed,
    )
    return federated.run_federation(shards, spec, fed_cfg)


def build_attack_config(config, spec, aux, budget, branch, seed):
    cell_seed = derive_seed(config.master_seed, "attack", budget, branch, seed)
    surrogate_train = models.TrainConfig(
        learning_rate=config.surrogate_lr, epochs=config.surrogate_epochs,
        batch_size=min(config.batch_size, budget), seed=cell_seed, momentum=config.momentum,
    )
    if branch == "scratch":
        return extraction.AttackConfig(
            n_query=budget, surrogate_spec=spec, surrogate_train=surrogate_train, seed=cell_seed,
        )
    if aux is None:
        raise ConfigError("pretrained branch requires an auxiliary dataset")
    pre_batch = config.pretrain_batch or len(aux)
    ft_batch = config.fine_tune_batch or budget
    return extraction.AttackConfig(
        n_query=budget, surrogate_spec=spec, surrogate_train=surrogate_train,
        pre_train=True, pretrain_source=aux,
        pretrain_train=models.TrainConfig(
            learning_rate=config.pretrain_lr, epochs=config.pretrain_epochs,
            batch_size=min(pre_batch, len(aux)), seed=cell_seed, momentum=config.momentum,
        ),
        fine_tune=models.TrainConfig(
            learning_rate=config.fine_tune_lr, epochs=config.fine_tune_epochs,
            batch_size=min(ft_batch, budget), seed=cell_seed, momentum=config.momentum,
        ),
        seed=cell_seed,
    )


def run_experiment(config):
    """Execute the full grid; failed cells become error rows, the grid continues."""
    bundle, aux, spec = build_bundle(config)
    for budget in config.query_budgets:
        if budget > len(bundle.query_pool):
            raise ConfigError(f"budget {budget} exceeds query pool size {len(bundle.query_pool)}")
    rows = []
    for clients in config.client_counts:
        victim, _records = train_victim(config, bundle, spec, clients)
        victim_hash = victim.param_hash()
        for budget in config.query_budgets:
            for branch in config.branches:
                for seed in config.seeds:
                    start = time.perf_counter()
                    try:
                        oracle = PredictionOracle(victim, budget, mode=config.oracle_mode)
                        attack_cfg = build_attack_config(config, spec, aux, budget, branch, seed)
                        surrogate, _ = extraction.run_attack(oracle.handle(), bundle.query_pool, attack_cfg)
                        report = metrics.evaluate(victim, surrogate, bundle.test)
                        error = ""
                    except FedexError as exc:
                        report, error = None, str(exc)
                    wall = time.perf_counter() - start if config.record_timing else 0.0
                    rows.append(
                        ExperimentRow(
                            config.dataset, spec.kind, clients, budget, branch, seed,
                            report, wall, victim_hash, error,
                        )
                    )
    return ExperimentReport(tuple(rows))


def _fmt(x):
    return f"{x:.6g}"


def emit_csv(report, path):
    lines = [CSV_HEADER]
    for r in report.rows:
        if r.report is None:
            vals = ["", "", "", ""]
        else:
            m = r.report
            vals = [_fmt(m.accuracy_victim), _fmt(m.accuracy_extracted), _fmt(m.fidelity), _fmt(m.kl_divergence)]
        lines.append(
            ",".join([r.dataset, r.arch, str(r.clients), str(r.budget), r.branch, str(r.seed)] + vals + [_fmt(r.wall_time)])
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def emit_json(report, path):
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, sort_keys=True, indent=1)


def load_json(path):
    with open(path) as f:
        return ExperimentReport.from_dict(json.load(f))


def summarize(report):
    """Mean metrics over seeds, keyed by (clients, budget, branch); error rows skipped."""
    cells = {}
    for r in report.rows:
        if r.report is None:
            continue
        cells.setdefault((r.clients, r.budget, r.branch), []).append(r.report)
    out = {}
    for key, reps in sorted(cells.items()):
        out[key] = {
            "accuracy_extracted": float(np.mean([m.accuracy_extracted for m in reps])),
            "fidelity": float(np.mean([m.fidelity for m in reps])),
            "kl_divergence": float(np.mean([m.kl_divergence for m in reps])),
            "count": len(reps),
        }
    return out
