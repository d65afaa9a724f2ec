"""Minimal dense tensor ops and layers with hand-written backward passes.

Everything is float64 and deterministic. Layers cache their forward
activations; calling backward before forward is a StateError.
"""

import numpy as np

from .errors import DomainError, ShapeError, StateError

EPS = 1e-9


def as_tensor(x):
    """Coerce to a float64 ndarray and reject non-finite values."""
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise DomainError("tensor contains non-finite values")
    return a


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def conv2d_forward(x, kernels, stride=1):
    """Valid-padding convolution of a single [C,H,W] input with [K,C,kh,kw] kernels."""
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    if x.ndim != 3 or kernels.ndim != 4:
        raise ShapeError(f"conv2d expects [C,H,W] and [K,C,kh,kw], got {x.shape} and {kernels.shape}")
    out = conv2d_batch(x[None], kernels, stride=stride)
    return out[0]


def conv2d_batch(x, kernels, stride=1):
    """Valid convolution over a batch [N,C,H,W] -> [N,K,H',W']."""
    n, c, h, w = x.shape
    k, ck, kh, kw = kernels.shape
    if ck != c:
        raise ShapeError(f"kernel channels {ck} != input channels {c}")
    if kh > h or kw > w:
        raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((n, k, ho, wo))
    for u in range(kh):
        for v in range(kw):
            xs = x[:, :, u : u + ho * stride : stride, v : v + wo * stride : stride]
            out += np.einsum("ncij,kc->nkij", xs, kernels[:, :, u, v])
    return out


def conv2d_backward(x, kernels, stride, grad_out):
    """Gradients of conv2d_batch w.r.t. input and kernels."""
    n, c, h, w = x.shape
    k, _, kh, kw = kernels.shape
    ho, wo = grad_out.shape[2], grad_out.shape[3]
    grad_x = np.zeros_like(x)
    grad_k = np.zeros_like(kernels)
    for u in range(kh):
        for v in range(kw):
            xs = x[:, :, u : u + ho * stride : stride, v : v + wo * stride : stride]
            grad_k[:, :, u, v] = np.einsum("nkij,ncij->kc", grad_out, xs)
            grad_x[:, :, u : u + ho * stride : stride, v : v + wo * stride : stride] += np.einsum(
                "nkij,kc->ncij", grad_out, kernels[:, :, u, v]
            )
    return grad_x, grad_k


def softmax(logits):
    """Stable softmax of a rank-1 tensor."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise DomainError(f"softmax expects a non-empty rank-1 tensor, got shape {z.shape}")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_rows(logits):
    """Row-wise stable softmax of a [n, k] matrix."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(prediction, target):
    """-sum(target * log(clamp(prediction))); accepts soft or one-hot targets."""
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"cross_entropy length mismatch: {p.shape} vs {t.shape}")
    for name, v in (("prediction", p), ("target", t)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise DomainError(f"{name} does not sum to 1 (sum={v.sum()})")
    return float(-(t * np.log(np.clip(p, EPS, 1.0))).sum())


class Layer:
    """Base layer: params and grads are dicts keyed by parameter name."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache


class Dense(Layer):
    def __init__(self, in_dim, out_dim):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.params = {"w": np.zeros((in_dim, out_dim)), "b": np.zeros(out_dim)}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"Dense expects [n,{self.in_dim}], got {x.shape}")
        self._cache = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, grad_out):
        x = self._cached()
        self.grads = {"w": x.T @ grad_out, "b": grad_out.sum(axis=0)}
        return grad_out @ self.params["w"].T


class Conv2D(Layer):
    """Convolution with optional zero padding (valid core, pad applied first)."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.params = {
            "w": np.zeros((out_channels, in_channels, kernel_size, kernel_size)),
            "b": np.zeros(out_channels),
        }

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.params["w"].shape[1]:
            raise ShapeError(f"Conv2D expects [n,{self.params['w'].shape[1]},H,W], got {x.shape}")
        p = self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        self._cache = x
        out = conv2d_batch(x, self.params["w"], stride=self.stride)
        return out + self.params["b"][None, :, None, None]

    def backward(self, grad_out):
        x = self._cached()
        grad_x, grad_k = conv2d_backward(x, self.params["w"], self.stride, grad_out)
        self.grads = {"w": grad_k, "b": grad_out.sum(axis=(0, 2, 3))}
        p = self.padding
        if p:
            grad_x = grad_x[:, :, p:-p, p:-p]
        return grad_x


class ReLU(Layer):
    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad_out):
        return grad_out * self._cached()


class MaxPool2(Layer):
    """2x2 max pool, stride 2; trailing odd row/column is dropped.

    Gradient flows to the first maximal element of each window (row-major)
    so backward is deterministic under ties.
    """

    def forward(self, x):
        n, c, h, w = x.shape
        ho, wo = h // 2, w // 2
        windows = x[:, :, : 2 * ho, : 2 * wo].reshape(n, c, ho, 2, wo, 2)
        windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
        out = windows.max(axis=-1)
        is_max = windows == out[..., None]
        first = (np.cumsum(is_max, axis=-1) == 1) & is_max
        self._cache = (x.shape, first)
        return out

    def backward(self, grad_out):
        (n, c, h, w), first = self._cached()
        ho, wo = h // 2, w // 2
        spread = first * grad_out[..., None]
        spread = spread.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        grad_x = np.zeros((n, c, h, w))
        grad_x[:, :, : 2 * ho, : 2 * wo] = spread.reshape(n, c, 2 * ho, 2 * wo)
        return grad_x


class GlobalAvgPool(Layer):
    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad_out):
        n, c, h, w = self._cached()
        return np.broadcast_to(grad_out[:, :, None, None], (n, c, h, w)) / (h * w)


class Flatten(Layer):
    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._cached())


class Residual(Layer):
    """Identity-skip block: relu(body(x) + x). Body must preserve shape."""

    def __init__(self, body):
        super().__init__()
        self.body = body

    @property
    def sublayers(self):
        return self.body

    def forward(self, x):
        h = x
        for layer in self.body:
            h = layer.forward(h)
        if h.shape != x.shape:
            raise ShapeError(f"residual body changed shape {x.shape} -> {h.shape}")
        s = h + x
        self._cache = s > 0
        return np.where(self._cache, s, 0.0)

    def backward(self, grad_out):
        grad = grad_out * self._cached()
        grad_body = grad
        for layer in reversed(self.body):
            grad_body = layer.backward(grad_body)
        return grad_body + grad


def iter_layers(layers):
    """Yield layers depth-first, expanding residual blocks."""
    for layer in layers:
        if isinstance(layer, Residual):
            yield from iter_layers(layer.body)
        else:
            yield layer


def named_parameters(layers):
    """Ordered (name, array) pairs over a layer stack."""
    out = []
    for i, layer in enumerate(iter_layers(layers)):
        for key in sorted(layer.params):
            out.append((f"layer{i}.{key}", layer.params[key]))
    return out


def forward_stack(layers, x):
    for layer in layers:
        x = layer.forward(x)
    return x


def backward_stack(layers, grad):
    for layer in reversed(layers):
        grad = layer.backward(grad)
    return grad
