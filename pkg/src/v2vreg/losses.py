"""MAE, MSE and their Laplacian/Gaussian-scale generalizations, with gradients.

A batch is a pair of ``(N, q)`` arrays (a single 1-D vector is treated as a
batch of one). All losses are averaged over the N samples and summed over
the q output dimensions.
"""
from enum import Enum

import numpy as np

from .errors import ContractViolation

ALPHA_FLOOR = 1e-6


class LossKind(str, Enum):
    MAE = "mae"
    MSE = "mse"
    LD = "ld"
    GD = "gd"

    @property
    def needs_alpha(self):
        return self in (LossKind.LD, LossKind.GD)

    @property
    def absolute(self):
        return self in (LossKind.MAE, LossKind.LD)


def _as_batch(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ContractViolation(f"{name} must be a nonempty (N, q) batch, got shape {a.shape}")
    return a


def _pair(predictions, targets):
    x = _as_batch(predictions, "predictions")
    y = _as_batch(targets, "targets")
    if x.shape != y.shape:
        raise ContractViolation(f"batch shape mismatch: predictions {x.shape} vs targets {y.shape}")
    return x, y


def check_alpha(alpha, q):
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] != q:
        raise ContractViolation(f"alpha must be a vector of dim {q}, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ContractViolation("alpha entries must be finite and > 0")
    return a


def alpha_from_targets(targets, floor=ALPHA_FLOOR):
    """Per-dimension standard deviation of training targets, floored at ``floor``."""
    y = _as_batch(targets, "targets")
    return np.maximum(y.std(axis=0), floor)


def mae(predictions, targets):
    x, y = _pair(predictions, targets)
    return float(np.abs(x - y).sum() / x.shape[0])


def mse(predictions, targets):
    x, y = _pair(predictions, targets)
    d = x - y
    return float((d * d).sum() / x.shape[0])


def scale_term(alpha, n):
    return n * float(np.log(alpha).sum())


def ld_loss(predictions, targets, alpha):
    x, y = _pair(predictions, targets)
    a = check_alpha(alpha, x.shape[1])
    return mae(x, y) + scale_term(a, x.shape[0])


def gd_loss(predictions, targets, alpha):
    x, y = _pair(predictions, targets)
    a = check_alpha(alpha, x.shape[1])
    return mse(x, y) + scale_term(a, x.shape[0])


def batch_loss(kind, predictions, targets, alpha=None):
    kind = LossKind(kind)
    if kind is LossKind.MAE:
        return mae(predictions, targets)
    if kind is LossKind.MSE:
        return mse(predictions, targets)
    if alpha is None:
        raise ContractViolation(f"{kind.value} loss requires an alpha vector")
    if kind is LossKind.LD:
        return ld_loss(predictions, targets, alpha)
    return gd_loss(predictions, targets, alpha)


def loss_gradient(kind, prediction, target, n_batch, alpha=None):
    """Gradient of the batch loss with respect to one sample's prediction.

    The log-alpha terms of LD/GD do not depend on the prediction, so LD
    shares MAE's gradient and GD shares MSE's. ``sign(0)`` is taken as 0.
    """
    kind = LossKind(kind)
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ContractViolation(f"prediction/target shape mismatch: {p.shape} vs {t.shape}")
    if n_batch < 1:
        raise ContractViolation("n_batch must be >= 1")
    if kind.needs_alpha and alpha is not None:
        check_alpha(alpha, p.shape[-1])
    if kind.absolute:
        return np.sign(p - t) / n_batch
    return 2.0 * (p - t) / n_batch


def batch_gradient(kind, predictions, targets, alpha=None):
    """Row-wise ``loss_gradient`` for a whole ``(N, q)`` batch."""
    x, y = _pair(predictions, targets)
    return loss_gradient(kind, x, y, x.shape[0], alpha)
