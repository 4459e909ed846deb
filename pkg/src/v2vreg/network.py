"""Feed-forward ReLU regression network: forward, backprop, input Jacobian, SGD training."""
import os
import struct
import time
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DivergedTraining, ParseError, VersionError
from .losses import LossKind, batch_gradient, batch_loss, check_alpha
from .numerics import SeededRng

MODEL_MAGIC = b"V2VM"
MODEL_VERSION = 1


class Activation(IntEnum):
    RELU = 0
    LINEAR = 1


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.RELU


@dataclass
class Layer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray
    activation: Activation

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass
class Mlp:
    layers: list

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def copy(self):
        return Mlp([Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def specs(self):
        return [LayerSpec(l.in_dim, l.out_dim, l.activation) for l in self.layers]


def layer_specs(dims, hidden=Activation.RELU):
    """Chain of LayerSpecs for sizes like ``[387, 128, 128, 129]``; last layer is linear."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ContractViolation("need at least input and output sizes")
    return [
        LayerSpec(dims[k], dims[k + 1], Activation.LINEAR if k == len(dims) - 2 else hidden)
        for k in range(len(dims) - 1)
    ]


def _check_chain(spec):
    if not spec:
        raise ContractViolation("empty layer spec")
    for k, s in enumerate(spec):
        if s.in_dim < 1 or s.out_dim < 1:
            raise ContractViolation(f"layer {k} has non-positive size")
        if k and spec[k - 1].out_dim != s.in_dim:
            raise ContractViolation(
                f"layer {k} expects {s.in_dim} inputs but layer {k - 1} produces {spec[k - 1].out_dim}"
            )
    if spec[-1].activation != Activation.LINEAR:
        raise ContractViolation("the output layer must be linear")


def init_mlp(spec, seed):
    """He-normal weights for ReLU layers, Glorot-normal for linear ones, zero biases."""
    spec = list(spec)
    _check_chain(spec)
    rng = SeededRng(seed)
    layers = []
    for s in spec:
        if s.activation == Activation.RELU:
            std = np.sqrt(2.0 / s.in_dim)
        else:
            std = np.sqrt(2.0 / (s.in_dim + s.out_dim))
        w = (rng.normal(s.out_dim * s.in_dim) * std).reshape(s.out_dim, s.in_dim)
        layers.append(Layer(w, np.zeros(s.out_dim), Activation(s.activation)))
    return Mlp(layers)


def _inputs(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise ContractViolation(f"input has shape {x.shape}, network expects dim {net.input_dim}")
    return x


def _activate(z, act):
    return np.maximum(z, 0.0) if act == Activation.RELU else z


def forward(net, x):
    """Network output for one vector ``(d,)`` or a batch ``(N, d)``."""
    a = _inputs(net, x)
    for layer in net.layers:
        a = _activate(a @ layer.weights.T + layer.bias, layer.activation)
    return a


def _forward_trace(net, x):
    acts = [x]
    pre = []
    a = x
    for layer in net.layers:
        z = a @ layer.weights.T + layer.bias
        pre.append(z)
        a = _activate(z, layer.activation)
        acts.append(a)
    return pre, acts


def _reverse(net, pre, acts, delta):
    """Backpropagate output-side ``delta`` (N, q); returns parameter grads and input grad."""
    grads = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == Activation.RELU:
            delta = delta * (pre[k] > 0.0)
        grads[k] = (delta.T @ acts[k], delta.sum(axis=0))
        delta = delta @ layer.weights
    return grads, delta


def backward(net, inputs, targets, loss, alpha=None):
    """Exact gradients of the batch loss w.r.t. every ``(weights, bias)`` pair."""
    x = np.atleast_2d(_inputs(net, inputs))
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if y.shape != (x.shape[0], net.output_dim):
        raise ContractViolation(f"targets shape {y.shape} does not match ({x.shape[0]}, {net.output_dim})")
    pre, acts = _forward_trace(net, x)
    delta = batch_gradient(loss, acts[-1], y, alpha)
    grads, _ = _reverse(net, pre, acts, delta)
    return grads


def input_gradient(net, x, output_grad):
    """Vector-Jacobian product ``output_grad^T J(x)`` by one reverse sweep."""
    x = _inputs(net, x)
    pre, acts = _forward_trace(net, x[None, :])
    _, g = _reverse(net, pre, acts, np.asarray(output_grad, dtype=np.float64)[None, :])
    return g[0]


def input_jacobian(net, x):
    """(q, d) Jacobian at ``x``: row i is the gradient of output i (one sweep per output)."""
    x = _inputs(net, x)
    if x.ndim != 1:
        raise ContractViolation("input_jacobian takes a single input vector")
    q = net.output_dim
    pre, acts = _forward_trace(net, np.broadcast_to(x, (q, x.shape[0])))
    _, jac = _reverse(net, pre, acts, np.eye(q))
    return jac


class StopReason(str, Enum):
    MAX_EPOCHS = "max_epochs"
    EARLY_STOP = "early_stop"


@dataclass
class TrainConfig:
    loss: LossKind = LossKind.MSE
    learning_rate: float = 1e-3
    momentum: float = 0.4
    max_epochs: int = 20
    validation_fraction: float = 0.1
    batch_size: int = 128
    seed: int = 0
    patience: int = 1
    hidden: tuple = ()
    alpha: np.ndarray = None

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        if not self.learning_rate > 0:
            raise ContractViolation("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ContractViolation("momentum must be in [0, 1)")
        if not 0 < self.validation_fraction < 1:
            raise ContractViolation("validation_fraction must be in (0, 1)")
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ContractViolation("max_epochs, batch_size and patience must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.loss.needs_alpha and self.alpha is None:
            raise ContractViolation(f"{self.loss.value} training needs alpha")


@dataclass
class TrainLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    wall_time: list = field(default_factory=list, compare=False)
    stop_reason: StopReason = StopReason.MAX_EPOCHS
    best_epoch: int = -1

    def to_tsv(self, timing=True):
        """Tab-separated per-epoch log; ``timing=False`` drops the wall-clock column
        so that reruns are byte-identical."""
        lines = ["epoch\ttrain_loss\tval_loss" + ("\twall_time_s" if timing else "")]
        for k, (tl, vl, wt) in enumerate(zip(self.train_loss, self.val_loss, self.wall_time)):
            lines.append(f"{k + 1}\t{tl!r}\t{vl!r}" + (f"\t{wt:.3f}" if timing else ""))
        lines.append(f"# stop_reason\t{self.stop_reason.value}")
        lines.append(f"# best_epoch\t{self.best_epoch + 1}")
        return "\n".join(lines) + "\n"


def split_indices(n, fraction, rng):
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * fraction)))
    return perm[n_val:], perm[:n_val]


def train(inputs, targets, cfg, net=None, on_step=None):
    """Mini-batch SGD with heavy-ball momentum and validation early stopping.

    Returns the network from the best validation epoch and the training log.
    ``on_step(epoch, step, net)`` is called after every parameter update.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ContractViolation("inputs and targets must be (N, d) and (N, q) with equal N")
    if x.shape[0] < 10:
        raise ContractViolation(f"need at least 10 samples, got {x.shape[0]}")
    alpha = None
    if cfg.loss.needs_alpha:
        alpha = check_alpha(cfg.alpha, y.shape[1])
    if net is None:
        net = init_mlp(layer_specs([x.shape[1], *cfg.hidden, y.shape[1]]), cfg.seed)
    else:
        net = net.copy()
        if net.input_dim != x.shape[1] or net.output_dim != y.shape[1]:
            raise ContractViolation("initial network does not match data dimensions")

    rng = SeededRng(cfg.seed)
    train_idx, val_idx = split_indices(x.shape[0], cfg.validation_fraction, rng.spawn(1))
    if train_idx.size == 0:
        raise ContractViolation("validation split leaves no training data")
    x_val, y_val = x[val_idx], y[val_idx]
    shuffle = rng.spawn(2)

    velocity = [[np.zeros_like(l.weights), np.zeros_like(l.bias)] for l in net.layers]
    log = TrainLog()
    best = None
    best_val = np.inf
    bad = 0
    # overflow on the way to a non-finite loss is reported as DivergedTraining
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.max_epochs):
            t0 = time.perf_counter()
            order = train_idx[shuffle.permutation(train_idx.size)]
            total = 0.0
            for step, start in enumerate(range(0, order.size, cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                xb, yb = x[idx], y[idx]
                pre, acts = _forward_trace(net, xb)
                loss = batch_loss(cfg.loss, acts[-1], yb, alpha)
                if not np.isfinite(loss):
                    raise DivergedTraining(epoch)
                total += loss * idx.size
                grads, _ = _reverse(net, pre, acts, batch_gradient(cfg.loss, acts[-1], yb))
                for layer, vel, (gw, gb) in zip(net.layers, velocity, grads):
                    vel[0] *= cfg.momentum
                    vel[0] -= cfg.learning_rate * gw
                    vel[1] *= cfg.momentum
                    vel[1] -= cfg.learning_rate * gb
                    layer.weights += vel[0]
                    layer.bias += vel[1]
                if on_step is not None:
                    on_step(epoch, step, net)
            val = batch_loss(cfg.loss, forward(net, x_val), y_val, alpha)
            if not np.isfinite(val) or not np.isfinite(total):
                raise DivergedTraining(epoch)
            log.train_loss.append(total / order.size)
            log.val_loss.append(val)
            log.wall_time.append(time.perf_counter() - t0)
            if val < best_val:
                best_val, best, bad = val, net.copy(), 0
                log.best_epoch = epoch
            else:
                bad += 1
                if bad >= cfg.patience:
                    log.stop_reason = StopReason.EARLY_STOP
                    break
    return best, log


def save_model(path, net):
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(net.layers))]
    for layer in net.layers:
        parts.append(struct.pack("<IIB", layer.in_dim, layer.out_dim, int(layer.activation)))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    tmp = Path(path).with_name(Path(path).name + ".partial")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)


def _take(buf, offset, n, what):
    if offset + n > len(buf):
        raise ParseError(f"truncated model file while reading {what}", offset)
    return buf[offset:offset + n], offset + n


def load_model(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, off = _take(buf, 0, 4, "magic")
    if magic != MODEL_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}", 0)
    head, off = _take(buf, off, 8, "header")
    version, count = struct.unpack("<II", head)
    if version != MODEL_VERSION:
        raise VersionError(f"unsupported model format version {version}", 4)
    if count == 0:
        raise ParseError("model has no layers", 8)
    layers = []
    for k in range(count):
        start = off
        head, off = _take(buf, off, 9, f"layer {k} header")
        d_in, d_out, act = struct.unpack("<IIB", head)
        if act not in (0, 1):
            raise ParseError(f"layer {k} has unknown activation code {act}", start + 8)
        raw, off = _take(buf, off, 8 * d_in * d_out, f"layer {k} weights")
        w = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d_out, d_in)
        raw, off = _take(buf, off, 8 * d_out, f"layer {k} bias")
        b = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        layers.append(Layer(w, b, Activation(act)))
    if off != len(buf):
        raise ParseError("trailing bytes after last layer", off)
    net = Mlp(layers)
    try:
        _check_chain(net.specs())
    except ContractViolation as exc:
        raise ParseError(f"inconsistent layer chain: {exc}") from exc
    return net
