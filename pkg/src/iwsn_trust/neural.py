"""Small dense networks in plain numpy.

Just enough machinery to train the two GAN models used for trust
classification and redemption: affine layers with optional batch
normalization, four activations, manual backprop, Adam, and the two losses
the models need.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError, ShapeError, StateError

ACTIVATIONS = ("linear", "tanh", "sigmoid", "leaky")
LEAKY_SLOPE = 0.2
BN_VAR_FLOOR = 1e-8
BN_MOMENTUM = 0.1
INIT_STD = 0.05


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, width: int) -> "BatchNorm":
        return cls(np.ones(width), np.zeros(width), np.zeros(width), np.ones(width))


@dataclass
class DenseLayer:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str = "linear"
    bn: Optional[BatchNorm] = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight {self.weight.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.weight.shape[1]

    def params(self) -> list[np.ndarray]:
        out = [self.weight, self.bias]
        if self.bn is not None:
            out += [self.bn.gamma, self.bn.beta]
        return out


def _activate(kind: str, h: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return h
    if kind == "tanh":
        return np.tanh(h)
    if kind == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(h)
        pos = h >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-h[pos]))
        e = np.exp(h[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    return np.where(h > 0, h, LEAKY_SLOPE * h)


def _activate_grad(kind: str, h: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return np.ones_like(h)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.where(h > 0, 1.0, LEAKY_SLOPE)


class DenseNetwork:
    """A stack of fully connected layers.

    ``forward`` in train mode keeps the intermediate values needed by
    ``backward``; only the most recent forward pass is retained.
    """

    def __init__(self, layers: Sequence[DenseLayer]):
        if not layers:
            raise ShapeError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ShapeError(f"layer widths {prev.n_out} -> {nxt.n_in} do not chain")
        self.layers = list(layers)
        self._cache: Optional[list[dict]] = None

    @classmethod
    def build(
        cls,
        widths: Sequence[int],
        rng: np.random.Generator,
        hidden: str = "leaky",
        final: str = "linear",
        batch_norm: bool = False,
        init_std: float = INIT_STD,
    ) -> "DenseNetwork":
        """Gaussian-initialized network; batch norm goes on hidden layers only."""
        layers = []
        n = len(widths) - 1
        for i in range(n):
            last = i == n - 1
            layers.append(
                DenseLayer(
                    weight=rng.normal(0.0, init_std, size=(widths[i], widths[i + 1])),
                    bias=np.zeros(widths[i + 1]),
                    activation=final if last else hidden,
                    bn=BatchNorm.fresh(widths[i + 1]) if batch_norm and not last else None,
                )
            )
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def forward(self, batch: np.ndarray, train: bool = True, update_running: bool = True) -> np.ndarray:
        x = np.asarray(batch, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"expected batch with {self.n_in} columns, got shape {x.shape}")
        has_bn = any(layer.bn is not None for layer in self.layers)
        if train and has_bn and x.shape[0] < 2:
            raise ShapeError("train-mode batch norm needs at least 2 rows")

        cache = []
        for layer in self.layers:
            entry = {"x": x}
            h = x @ layer.weight + layer.bias
            bn = layer.bn
            if bn is not None:
                if train:
                    mu = h.mean(axis=0)
                    var = np.maximum(h.var(axis=0), BN_VAR_FLOOR)
                    if update_running:
                        bn.running_mean = (1 - BN_MOMENTUM) * bn.running_mean + BN_MOMENTUM * mu
                        bn.running_var = (1 - BN_MOMENTUM) * bn.running_var + BN_MOMENTUM * var
                else:
                    mu = bn.running_mean
                    var = np.maximum(bn.running_var, BN_VAR_FLOOR)
                inv_std = 1.0 / np.sqrt(var)
                xhat = (h - mu) * inv_std
                entry.update(xhat=xhat, inv_std=inv_std)
                h = bn.gamma * xhat + bn.beta
            a = _activate(layer.activation, h)
            entry.update(h=h, a=a)
            cache.append(entry)
            x = a

        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite activation in forward pass")
        self._cache = cache if train else None
        return x

    __call__ = forward

    def backward(self, upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients for every parameter (same order as ``params()``) and for the input."""
        if self._cache is None:
            raise StateError("backward called without a preceding train-mode forward")
        grad = np.asarray(upstream, dtype=float)
        out_shape = self._cache[-1]["a"].shape
        if grad.shape != out_shape:
            raise ShapeError(f"upstream gradient {grad.shape} != output {out_shape}")

        per_layer: list[list[np.ndarray]] = []
        for layer, entry in zip(reversed(self.layers), reversed(self._cache)):
            dh = grad * _activate_grad(layer.activation, entry["h"], entry["a"])
            grads_bn = []
            if layer.bn is not None:
                xhat = entry["xhat"]
                dgamma = (dh * xhat).sum(axis=0)
                dbeta = dh.sum(axis=0)
                dxhat = dh * layer.bn.gamma
                n = dh.shape[0]
                dh = (entry["inv_std"] / n) * (
                    n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
                )
                grads_bn = [dgamma, dbeta]
            dw = entry["x"].T @ dh
            db = dh.sum(axis=0)
            per_layer.append([dw, db] + grads_bn)
            grad = dh @ layer.weight.T

        grads = [g for layer_grads in reversed(per_layer) for g in layer_grads]
        return grads, grad

    def state(self) -> list[np.ndarray]:
        """All arrays including batch-norm running statistics, layer-ordered."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
            if layer.bn is not None:
                bn = layer.bn
                out += [bn.gamma, bn.beta, bn.running_mean, bn.running_var]
        return out

    def load_state(self, arrays: Sequence[np.ndarray]) -> None:
        arrays = list(arrays)
        own = self.state()
        if len(arrays) != len(own):
            raise ShapeError(f"expected {len(own)} arrays, got {len(arrays)}")
        for dst, src in zip(own, arrays):
            if dst.shape != np.shape(src):
                raise ShapeError(f"array shape {np.shape(src)} != {dst.shape}")
            dst[...] = src


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state differ in length")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ShapeError(f"gradient shape {np.shape(g)} != parameter {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class LossValue:
    value: float
    grad: np.ndarray = field(repr=False)


def _check_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    return pred, target


def loss_least_squares(pred, target) -> LossValue:
    """Mean of 1/2 (pred - target)^2."""
    pred, target = _check_pair(pred, target)
    diff = pred - target
    value = float(0.5 * np.mean(diff * diff))
    if not np.isfinite(value):
        raise NumericError("least-squares loss is not finite")
    return LossValue(value, diff / diff.size)


def loss_mean_abs(pred, target) -> LossValue:
    pred, target = _check_pair(pred, target)
    diff = pred - target
    value = float(np.mean(np.abs(diff)))
    if not np.isfinite(value):
        raise NumericError("mean-absolute loss is not finite")
    return LossValue(value, np.sign(diff) / diff.size)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-7) -> float:
    """Worst entrywise |a-b| / max(|a|, |b|); zero where both vanish below ``floor``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    err = np.where(scale < floor, 0.0, np.abs(a - b) / np.maximum(scale, floor))
    return float(err.max()) if err.size else 0.0


def gradient_check(
    net: DenseNetwork,
    batch: np.ndarray,
    epsilon: float = 1e-5,
    target: Optional[np.ndarray] = None,
    grad_hook: Optional[Callable[[list[np.ndarray]], list[np.ndarray]]] = None,
) -> float:
    """Compare backprop against central differences on a least-squares loss.

    ``grad_hook`` may rewrite the analytic gradients before comparison, which
    is how the checker is tested against itself.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    batch = np.asarray(batch, dtype=float)
    if target is None:
        target = np.zeros((batch.shape[0], net.n_out))

    def loss_at() -> float:
        out = net.forward(batch, train=True, update_running=False)
        return loss_least_squares(out, target).value

    out = net.forward(batch, train=True, update_running=False)
    analytic, _ = net.backward(loss_least_squares(out, target).grad)
    if grad_hook is not None:
        analytic = grad_hook(analytic)

    worst = 0.0
    for p, g in zip(net.params(), analytic):
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_at()
            flat[i] = orig - epsilon
            down = loss_at()
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * epsilon)
        worst = max(worst, relative_error(g, numeric))
    return worst
