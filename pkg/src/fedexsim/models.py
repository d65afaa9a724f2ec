"""Model zoo: architecture specs, seeded init, SGD training, FXL1 serialization.

Desk-scale architectures:
  mlp         flatten -> dense(hidden) -> relu -> dense(K)
  basic_cnn   conv(8,3x3) -> relu -> pool2 -> conv(16,3x3) -> relu -> pool2
              -> dense(64) -> relu -> dense(K)
  mini_resnet stem conv(8,3x3,pad 1) -> relu -> 2x residual(conv-relu-conv, pad 1)
              -> global avg pool -> dense(K)
"""

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .errors import ConfigError, FormatError, ShapeError, SpecError

MAGIC = b"FXL1"

PROVENANCES = ("random_init", "federated_trained", "centralized_trained", "pretrained", "fine_tuned")
_TRANSITIONS = {
    "random_init": {"centralized_trained", "federated_trained", "pretrained"},
    "pretrained": {"fine_tuned"},
}


@dataclass(frozen=True)
class ArchitectureSpec:
    kind: str  # mlp | basic_cnn | mini_resnet
    input_shape: tuple  # (d,) for mlp, (C,H,W) for conv nets
    class_count: int
    hidden: int = 32  # mlp hidden width

    def __post_init__(self):
        if self.kind not in ("mlp", "basic_cnn", "mini_resnet"):
            raise SpecError(f"unknown architecture kind {self.kind!r}")
        if self.class_count < 2:
            raise SpecError("class_count must be >= 2")
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.kind == "mlp":
            if len(self.input_shape) != 1:
                raise SpecError(f"mlp wants a flat input shape, got {self.input_shape}")
        elif len(self.input_shape) != 3:
            raise SpecError(f"{self.kind} wants [C,H,W] input, got {self.input_shape}")

    def to_dict(self):
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "class_count": self.class_count,
            "hidden": self.hidden,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["input_shape"]), d["class_count"], d.get("hidden", 32))


@dataclass(frozen=True)
class ModelInstance:
    spec: ArchitectureSpec
    parameters: tuple  # ordered (name, float64 ndarray) pairs
    provenance: str = "random_init"

    def param_dict(self):
        return dict(self.parameters)

    def param_hash(self):
        import hashlib

        h = hashlib.sha256()
        for name, arr in self.parameters:
            h.update(name.encode())
            h.update(arr.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0,1)")


def build_layers(spec):
    """Instantiate the layer stack for a spec (parameters left at zero)."""
    k = spec.class_count
    if spec.kind == "mlp":
        return [nn.Dense(spec.input_shape[0], spec.hidden), nn.ReLU(), nn.Dense(spec.hidden, k)]
    c, h, w = spec.input_shape
    if spec.kind == "basic_cnn":
        h1, w1 = (h - 2) // 2, (w - 2) // 2
        h2, w2 = (h1 - 2) // 2, (w1 - 2) // 2
        if h2 < 1 or w2 < 1:
            raise SpecError(f"input {spec.input_shape} too small for basic_cnn")
        return [
            nn.Conv2D(c, 8, 3),
            nn.ReLU(),
            nn.MaxPool2(),
            nn.Conv2D(8, 16, 3),
            nn.ReLU(),
            nn.MaxPool2(),
            nn.Flatten(),
            nn.Dense(16 * h2 * w2, 64),
            nn.ReLU(),
            nn.Dense(64, k),
        ]
    if h < 3 or w < 3:
        raise SpecError(f"input {spec.input_shape} too small for mini_resnet")
    block = lambda: nn.Residual([nn.Conv2D(8, 8, 3, padding=1), nn.ReLU(), nn.Conv2D(8, 8, 3, padding=1)])
    return [nn.Conv2D(c, 8, 3, padding=1), nn.ReLU(), block(), block(), nn.GlobalAvgPool(), nn.Dense(8, k)]


def _fan_in(layer):
    w = layer.params["w"]
    if w.ndim == 2:
        return w.shape[0]
    return w.shape[1] * w.shape[2] * w.shape[3]


def initialize(spec, seed):
    """Seeded uniform(-b, b) init with b = sqrt(6 / fan_in) per layer."""
    layers = build_layers(spec)
    rng = np.random.default_rng(np.random.PCG64(seed))
    params = []
    for i, layer in enumerate(nn.iter_layers(layers)):
        if not layer.params:
            continue
        bound = np.sqrt(6.0 / _fan_in(layer))
        for key in sorted(layer.params):
            shape = layer.params[key].shape
            params.append((f"layer{i}.{key}", rng.uniform(-bound, bound, size=shape)))
    return ModelInstance(spec, tuple(params), "random_init")


def _load_into_layers(model):
    layers = build_layers(model.spec)
    have = dict(model.parameters)
    for name, ref in nn.named_parameters(layers):
        if name not in have or have[name].shape != ref.shape:
            raise SpecError(f"parameter {name} missing or mis-shaped for spec {model.spec.kind}")
        ref[...] = have[name]
    return layers


def _check_batch(spec, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != spec.input_shape:
        raise ShapeError(f"batch shape {batch.shape[1:]} != model input {spec.input_shape}")
    return batch


def logits(model, batch):
    batch = _check_batch(model.spec, batch)
    return nn.forward_stack(_load_into_layers(model), batch)


def predict(model, batch):
    """Probability matrix [n, class_count]; rows are softmax outputs."""
    return nn.softmax_rows(logits(model, batch))


def predict_labels(model, batch):
    """Top-1 class per row, lowest index winning ties."""
    return np.argmax(predict(model, batch), axis=1)


def _epoch_rng(seed, epoch):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(epoch)])


def train(model, inputs, targets, config, epoch_offset=0, provenance=None):
    """Mini-batch SGD with momentum on softmax cross-entropy.

    Shuffling is deterministic per epoch via (config.seed, epoch_offset + epoch);
    the momentum buffer resets at each epoch boundary so that training E epochs
    equals E successive 1-epoch calls with advancing epoch_offset.
    """
    updated, _ = train_with_losses(model, inputs, targets, config, epoch_offset, provenance)
    return updated


def train_with_losses(model, inputs, targets, config, epoch_offset=0, provenance=None):
    inputs = _check_batch(model.spec, inputs)
    targets = np.asarray(targets, dtype=np.float64)
    n = inputs.shape[0]
    if targets.shape != (n, model.spec.class_count):
        raise ShapeError(f"targets shape {targets.shape} != ({n},{model.spec.class_count})")
    if config.batch_size > n:
        raise ConfigError(f"batch_size {config.batch_size} exceeds dataset size {n}")

    layers = _load_into_layers(model)
    trainable = [l for l in nn.iter_layers(layers) if l.params]
    epoch_losses = []
    for e in range(config.epochs):
        perm = _epoch_rng(config.seed, epoch_offset + e).permutation(n)
        velocity = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in trainable]
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            x, t = inputs[idx], targets[idx]
            probs = nn.softmax_rows(nn.forward_stack(layers, x))
            total += float(-(t * np.log(np.clip(probs, nn.EPS, 1.0))).sum())
            nn.backward_stack(layers, (probs - t) / len(idx))
            for layer, vel in zip(trainable, velocity):
                for key in layer.params:
                    vel[key] = config.momentum * vel[key] - config.learning_rate * layer.grads[key]
                    layer.params[key] += vel[key]
        epoch_losses.append(total / n)

    if provenance is None:
        provenance = "fine_tuned" if model.provenance == "pretrained" else "centralized_trained"
    allowed = _TRANSITIONS.get(model.provenance, set()) | {model.provenance}
    if provenance not in allowed:
        raise ConfigError(f"provenance transition {model.provenance} -> {provenance} not allowed")
    params = tuple((name, arr.copy()) for name, arr in nn.named_parameters(layers))
    return ModelInstance(model.spec, params, provenance), epoch_losses


def mean_loss(model, inputs, targets):
    """Mean softmax cross-entropy without updating parameters."""
    probs = predict(model, inputs)
    t = np.asarray(targets, dtype=np.float64)
    return float(-(t * np.log(np.clip(probs, nn.EPS, 1.0))).sum() / len(t))


def save_parameters(model):
    """FXL1 byte stream: magic, JSON header, little-endian float64 tensor data."""
    header = {
        "spec": model.spec.to_dict(),
        "provenance": model.provenance,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in model.parameters],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<I", len(blob)), blob]
    for _, arr in model.parameters:
        out.append(arr.astype("<f8").tobytes())
    return b"".join(out)


def load_parameters(spec, data):
    """Inverse of save_parameters; the caller's spec must match the stored one."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise FormatError("truncated header")
    try:
        header = json.loads(data[8 : 8 + hlen])
    except json.JSONDecodeError as exc:
        raise FormatError(f"unparseable header: {exc}") from exc
    stored = ArchitectureSpec.from_dict(header["spec"])
    if spec is not None and stored != spec:
        raise FormatError(f"spec mismatch: expected {spec}, file holds {stored}")
    offset = 8 + hlen
    params = []
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        if offset + nbytes > len(data):
            raise FormatError(f"truncated tensor data for {entry['name']}")
        arr = np.frombuffer(data[offset : offset + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
        params.append((entry["name"], arr))
        offset += nbytes
    if offset != len(data):
        raise FormatError("trailing bytes after tensor data")
    model = ModelInstance(stored, tuple(params), header.get("provenance", "random_init"))
    _load_into_layers(model)  # validates shapes against the spec
    return model


def save_parameters_file(model, path):
    with open(path, "wb") as f:
        f.write(save_parameters(model))


def load_parameters_file(path, spec=None):
    with open(path, "rb") as f:
        return load_parameters(spec, f.read())


def with_provenance(model, provenance):
    if provenance not in PROVENANCES:
        raise ConfigError(f"unknown provenance {provenance}")
    return replace(model, provenance=provenance)
