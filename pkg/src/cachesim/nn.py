"""Small numpy network kernel with hand-written backward passes.

Only what the actor and critic need: a 1xK temporal convolution, dense
layers, batch norm, tanh, leaky ReLU and Adam. Every layer caches what its
backward pass needs during ``forward`` and accumulates parameter gradients
into ``Param.grad`` during ``backward``. Everything is float64.
"""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHECKPOINT_FORMAT = "cachesim-ckpt/1"


class NonFiniteError(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


def check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise NonFiniteError(f"non-finite values in {what}")
    return a


class Param:
    """A parameter tensor and its gradient buffer."""

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape})"


class Layer:
    kind = "layer"

    def params(self) -> list[Param]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def spec(self) -> dict:
        return {"kind": self.kind}

    def forward(self, x: np.ndarray, train: bool = False, update_stats: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1xK(Layer):
    """Valid, stride-1 correlation along the last axis with filters shared
    over the row axis.

    ``(B, R, T) -> (B, F, R, T-K+1)``. Weights have shape ``(F, 1, K)``.
    """
    kind = "conv1xk"

    def __init__(self, filters: int, width: int, rng: np.random.Generator, bias: bool = True):
        self.filters, self.width = filters, width
        bound = 1.0 / np.sqrt(width)
        self.W = Param(rng.uniform(-bound, bound, (filters, 1, width)), "conv.W")
        self.b = Param(rng.uniform(-bound, bound, filters), "conv.b") if bias else None

    def params(self):
        return [self.W] if self.b is None else [self.W, self.b]

    def spec(self):
        return {"kind": self.kind, "filters": self.filters, "width": self.width,
                "bias": self.b is not None}

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 3:
            raise ShapeError(f"conv expects (batch, rows, time), got {x.shape}")
        if x.shape[2] < self.width:
            raise ShapeError(f"time length {x.shape[2]} shorter than filter width {self.width}")
        B, R, T = x.shape
        K, F = self.width, self.filters
        Tp = T - K + 1
        # contiguous window matrix: BLAS is much faster than matmul on the strided view
        win = np.ascontiguousarray(sliding_window_view(x, K, axis=2)).reshape(-1, K)
        self._x_shape = x.shape
        self._win = win
        out = win @ self.W.value[:, 0, :].T  # (B*R*T', F)
        if self.b is not None:
            out += self.b.value
        return np.ascontiguousarray(out.reshape(B, R, Tp, F).transpose(0, 3, 1, 2))

    def backward(self, dout, need_input_grad=True):
        B, R, T = self._x_shape
        K, F = self.width, self.filters
        Tp = T - K + 1
        d2 = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, F)
        self.W.grad[:, 0, :] += d2.T @ self._win
        if self.b is not None:
            self.b.grad += d2.sum(axis=0)
        if not need_input_grad:
            return None
        dwin = (d2 @ self.W.value[:, 0, :]).reshape(B, R, Tp, K)
        dx = np.zeros(self._x_shape)
        for k in range(K):
            dx[:, :, k:k + Tp] += dwin[..., k]
        return dx


class Linear(Layer):
    kind = "linear"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.n_in, self.n_out = n_in, n_out
        bound = 1.0 / np.sqrt(n_in)
        self.W = Param(rng.uniform(-bound, bound, (n_out, n_in)), "fc.W")
        self.b = Param(rng.uniform(-bound, bound, n_out), "fc.b") if bias else None

    def params(self):
        return [self.W] if self.b is None else [self.W, self.b]

    def spec(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "bias": self.b is not None}

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"linear expects (batch, {self.n_in}), got {x.shape}")
        self._x = x
        out = x @ self.W.value.T
        return out if self.b is None else out + self.b.value

    def backward(self, dout):
        self.W.grad += dout.T @ self._x
        if self.b is not None:
            self.b.grad += dout.sum(axis=0)
        return dout @ self.W.value


class BatchNorm(Layer):
    """Normalizes over every axis except axis 1 (features / conv filters)."""
    kind = "batchnorm"

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.num_features, self.momentum, self.eps = num_features, momentum, eps
        self.gamma = Param(np.ones(num_features), "bn.gamma")
        self.beta = Param(np.zeros(num_features), "bn.beta")
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def spec(self):
        return {"kind": self.kind, "num_features": self.num_features,
                "momentum": self.momentum, "eps": self.eps}

    def _bshape(self, x):
        return (1, self.num_features) + (1,) * (x.ndim - 2)

    def forward(self, x, train=False, update_stats=True):
        if x.shape[1] != self.num_features:
            raise ShapeError(f"batchnorm expects {self.num_features} features, got {x.shape}")
        shp = self._bshape(x)
        axes = (0,) + tuple(range(2, x.ndim))
        self._train = train
        if train:
            if x.shape[0] < 2:
                raise ValueError("train-mode batch norm needs a batch of at least 2")
            mean = x.mean(axis=axes)
            xc = x - mean.reshape(shp)
            var = (xc * xc).mean(axis=axes)
            if update_stats:
                n = x.size // self.num_features
                m = self.momentum
                self.running_mean *= 1 - m
                self.running_mean += m * mean
                self.running_var *= 1 - m
                self.running_var += m * var * n / (n - 1)
        else:
            xc = x - self.running_mean.reshape(shp)
            var = self.running_var
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * invstd.reshape(shp)
        self._xhat, self._invstd, self._axes = xhat, invstd, axes
        return xhat * self.gamma.value.reshape(shp) + self.beta.value.reshape(shp)

    def backward(self, dout):
        shp = self._bshape(dout)
        axes, xhat = self._axes, self._xhat
        self.gamma.grad += (dout * xhat).sum(axis=axes)
        self.beta.grad += dout.sum(axis=axes)
        dxhat = dout * self.gamma.value.reshape(shp)
        invstd = self._invstd.reshape(shp)
        if not self._train:
            return dxhat * invstd
        n = dout.size // self.num_features
        s1 = dxhat.sum(axis=axes).reshape(shp)
        s2 = (dxhat * xhat).sum(axis=axes).reshape(shp)
        return invstd / n * (n * dxhat - s1 - xhat * s2)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, train=False, update_stats=True):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dout):
        return dout * (1.0 - self._y ** 2)


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, alpha: float = 0.1):
        self.alpha = alpha

    def spec(self):
        return {"kind": self.kind, "alpha": self.alpha}

    def forward(self, x, train=False, update_stats=True):
        self._mask = x >= 0
        return np.where(self._mask, x, self.alpha * x)

    def backward(self, dout):
        return np.where(self._mask, dout, self.alpha * dout)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False, update_stats=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def buffers(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers)
                for k, v in layer.buffers().items()}

    def spec(self):
        return {"kind": self.kind, "layers": [layer.spec() for layer in self.layers]}

    def forward(self, x, train=False, update_stats=True):
        for layer in self.layers:
            x = layer.forward(x, train, update_stats)
        return check_finite(x, "forward pass")

    def backward(self, dout, need_input_grad=True):
        """Returns the input gradient, or ``None`` when ``need_input_grad`` is
        false and the first layer can skip computing it."""
        for i in range(len(self.layers) - 1, 0, -1):
            dout = self.layers[i].backward(dout)
        first = self.layers[0]
        if not need_input_grad and isinstance(first, Conv1xK):
            first.backward(dout, need_input_grad=False)
            return None
        return check_finite(first.backward(dout), "backward pass")

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


def copy_into(dst: Layer, src: Layer) -> None:
    """Hard copy of parameters and buffers (architectures must match)."""
    soft_update(dst, src, 1.0)


def soft_update(target: Layer, online: Layer, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target`` for every parameter."""
    if target.spec() != online.spec():
        raise ShapeError("target and online networks differ in architecture")
    for pt, po in zip(target.params(), online.params()):
        pt.value *= 1.0 - tau
        pt.value += tau * po.value
    if tau == 1.0:
        for bt, bo in zip(target.buffers().values(), online.buffers().values()):
            bt[...] = bo


class Adam:
    def __init__(self, params: list[Param], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            check_finite(p.grad, f"gradient of {p.name}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out


def save_checkpoint(path: str | Path, nets: dict[str, Layer],
                    optimizers: dict[str, Adam] | None = None,
                    extra: dict | None = None) -> None:
    """Write networks, optimizer moments and JSON metadata into one ``.npz``."""
    optimizers = optimizers or {}
    arrays: dict[str, np.ndarray] = {}
    meta = {"format": CHECKPOINT_FORMAT, "nets": {}, "optimizers": {}, "extra": extra or {}}
    for name, net in nets.items():
        meta["nets"][name] = net.spec()
        for i, p in enumerate(net.params()):
            arrays[f"net/{name}/p{i}"] = p.value
        for k, b in net.buffers().items():
            arrays[f"net/{name}/buf/{k}"] = b
    for name, opt in optimizers.items():
        meta["optimizers"][name] = {"t": opt.t, "lr": opt.lr, "beta1": opt.beta1,
                                    "beta2": opt.beta2, "eps": opt.eps}
        for k, a in opt.state_arrays().items():
            arrays[f"opt/{name}/{k}"] = a
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, nets: dict[str, Layer],
                    optimizers: dict[str, Adam] | None = None) -> dict:
    """Restore in place into networks built with the same architecture.
    Returns the ``extra`` metadata dict."""
    optimizers = optimizers or {}
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        for name, net in nets.items():
            if meta["nets"].get(name) != net.spec():
                raise ShapeError(f"checkpoint architecture mismatch for {name!r}")
            for i, p in enumerate(net.params()):
                p.value[...] = data[f"net/{name}/p{i}"]
            for k, b in net.buffers().items():
                b[...] = data[f"net/{name}/buf/{k}"]
        for name, opt in optimizers.items():
            om = meta["optimizers"][name]
            opt.t = om["t"]
            for i in range(len(opt.params)):
                opt.m[i][...] = data[f"opt/{name}/m{i}"]
                opt.v[i][...] = data[f"opt/{name}/v{i}"]
    return meta["extra"]
