"""Executable checks of the MAE/MSE Lipschitz results, the additive-noise bound
and empirical Rademacher complexity.

Every check returns a :class:`TheoryReport`. Bound claims hold when
``lhs <= rhs + BOUND_TOL``; violation claims hold only on strict ``lhs > rhs``.
"""
import hashlib
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .errors import ContractViolation, PreconditionError, TooLarge, UnsoundBound
from .losses import LossKind, batch_loss, gd_loss, ld_loss, mae, mse
from .network import Mlp, TrainConfig, forward, input_jacobian, train
from .numerics import SeededRng, as_vector, spectral_norm

log = logging.getLogger(__name__)

BOUND_TOL = 1e-9
MAX_EXACT_N = 20


class ClaimKind(str, Enum):
    BOUND = "bound"
    VIOLATION = "violation"
    DIAGNOSTIC = "diagnostic"


@dataclass(frozen=True)
class TheoryReport:
    claim: str
    digest: str
    lhs: float
    rhs: float
    holds: bool
    margin: float
    kind: ClaimKind = ClaimKind.BOUND

    def to_line(self):
        return "\t".join(
            [self.claim, self.digest, repr(self.lhs), repr(self.rhs),
             "PASS" if self.holds else "FAIL", repr(self.margin), self.kind.value]
        )

    @classmethod
    def from_line(cls, line):
        claim, digest, lhs, rhs, holds, margin, kind = line.rstrip("\n").split("\t")
        return cls(claim, digest, float(lhs), float(rhs), holds == "PASS", float(margin), ClaimKind(kind))


def digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def bound_report(claim, dig, lhs, rhs):
    lhs, rhs = float(lhs), float(rhs)
    return TheoryReport(claim, dig, lhs, rhs, lhs <= rhs + BOUND_TOL, rhs - lhs, ClaimKind.BOUND)


def violation_report(claim, dig, lhs, rhs):
    lhs, rhs = float(lhs), float(rhs)
    return TheoryReport(claim, dig, lhs, rhs, lhs > rhs, lhs - rhs, ClaimKind.VIOLATION)


def sample_signs(n, rng):
    """n independent uniform +-1 draws."""
    if n < 1:
        raise ContractViolation(f"need n >= 1 signs, got {n}")
    return rng.signs(n)


# -- MAE 1-Lipschitz and its MSE counterexample -----------------------------

def _same_dims(*vs):
    vs = [as_vector(v) for v in vs]
    if len({v.shape[0] for v in vs}) != 1:
        raise ContractViolation("vectors must share one dimension")
    return vs


def mae_lipschitz_sides(x1, x2, x):
    """Vectorized sides over rows: |‖x1−x‖₁ − ‖x2−x‖₁| and ‖x1−x2‖₁."""
    lhs = np.abs(np.abs(x1 - x).sum(axis=-1) - np.abs(x2 - x).sum(axis=-1))
    rhs = np.abs(x1 - x2).sum(axis=-1)
    return lhs, rhs


def check_mae_lipschitz(x1, x2, x):
    x1, x2, x = _same_dims(x1, x2, x)
    lhs, rhs = mae_lipschitz_sides(x1, x2, x)
    return bound_report("lemma1", digest(x1, x2, x), lhs, rhs)


def mse_violation_sides(x1, x2):
    """Vectorized sides of the x = 2*x2 construction over rows."""
    x = 2.0 * x2
    lhs = np.abs(((x1 - x) ** 2).sum(axis=-1) - ((x2 - x) ** 2).sum(axis=-1))
    rhs = ((x1 - x2) ** 2).sum(axis=-1)
    return lhs, rhs


def construct_mse_violation(x1, x2):
    """Target ``x = 2 x2`` makes the MSE difference exceed ‖x1 − x2‖₂²."""
    x1, x2 = _same_dims(x1, x2)
    if not x2 @ x2 > x1 @ x1:
        raise PreconditionError("construction needs ||x2||^2 > ||x1||^2")
    lhs, rhs = mse_violation_sides(x1, x2)
    return violation_report("lemma2", digest(x1, x2), lhs, rhs)


# -- Lipschitz constants of the network ------------------------------------

class LipschitzMethod(str, Enum):
    SPECTRAL_UPPER = "spectral_upper"
    EMPIRICAL_SUP = "empirical_sup"


@dataclass(frozen=True)
class LipschitzEstimate:
    per_output: np.ndarray
    total: float
    method: LipschitzMethod
    probe_count: int = 0


def _estimate(per_output, method, probes=0):
    per_output = np.asarray(per_output, dtype=np.float64)
    return LipschitzEstimate(per_output, float(per_output.sum()), method, probes)


def lipschitz_upper(net):
    """Per-output upper bound: last-layer row norm times the spectral norms of all
    earlier layers (ReLU and identity are both 1-Lipschitz)."""
    scale = 1.0
    for layer in net.layers[:-1]:
        scale *= spectral_norm(layer.weights)
    rows = np.linalg.norm(net.layers[-1].weights, axis=1)
    return _estimate(rows * scale, LipschitzMethod.SPECTRAL_UPPER)


def lipschitz_empirical(net, probes):
    """Largest Jacobian row norm seen over ``probes``; a lower estimate of the sup."""
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    if probes.shape[0] == 0 or probes.size == 0:
        raise ContractViolation("need at least one probe")
    best = np.zeros(net.output_dim)
    for p in probes:
        best = np.maximum(best, np.linalg.norm(input_jacobian(net, p), axis=1))
    return _estimate(best, LipschitzMethod.EMPIRICAL_SUP, probes.shape[0])


def noise_objective(net, x, target):
    return float(np.abs(forward(net, x) - target).sum(axis=-1))


def check_noise_bound(net, x, eta, L, target=None):
    """|h(x + eta) − h(x)| ≤ L₂ ‖eta‖₂ with h(x) = ‖f(x) − target‖₁."""
    if L.method != LipschitzMethod.SPECTRAL_UPPER:
        raise UnsoundBound("the noise bound needs an upper Lipschitz estimate, not an empirical one")
    x = as_vector(x, "x")
    eta = as_vector(eta, "eta")
    if x.shape != eta.shape or x.shape[0] != net.input_dim:
        raise ContractViolation("x and eta must match the network input dim")
    target = np.zeros(net.output_dim) if target is None else as_vector(target, "target")
    if target.shape[0] != net.output_dim:
        raise ContractViolation("target must match the network output dim")
    lhs = abs(noise_objective(net, x + eta, target) - noise_objective(net, x, target))
    rhs = L.total * float(np.linalg.norm(eta))
    return bound_report("theorem1", digest(x, eta, target, [L.total]), lhs, rhs)


# -- Rademacher complexity -------------------------------------------------

@dataclass(frozen=True)
class LinearBall:
    """Linear functionals ``x -> w.x`` with ``‖w‖₂ ≤ radius``."""
    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractViolation("LinearBall radius must be > 0")


@dataclass(frozen=True)
class FiniteSet:
    """Finitely many vector-valued maps: Mlp instances or (q, d) matrices."""
    members: tuple

    def __post_init__(self):
        if len(self.members) == 0:
            raise ContractViolation("FiniteSet must be nonempty")

    def scores(self, samples):
        """(K, N) matrix of 1ᵀ f_k(x_i)."""
        rows = []
        for f in self.members:
            if isinstance(f, Mlp):
                out = forward(f, samples)
            else:
                out = samples @ np.asarray(f, dtype=np.float64).T
            rows.append(np.asarray(out).reshape(samples.shape[0], -1).sum(axis=1))
        return np.array(rows)


@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    std_error: float
    draws: int
    exact: bool


def _samples(samples):
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ContractViolation("samples must be a nonempty (N, dim) array")
    return x


def rademacher_mc(samples, family, draws, rng, chunk=8192):
    """Monte-Carlo estimate of the empirical Rademacher complexity.

    The inner supremum is exact for both family kinds: closed form for a
    linear ball, a max over members for a finite set (with the sign shared
    across output dimensions through the all-ones inner product).
    """
    x = _samples(samples)
    if draws < 1:
        raise ContractViolation("draws must be >= 1")
    n = x.shape[0]
    if isinstance(family, FiniteSet):
        scores = family.scores(x)
    vals = np.empty(draws)
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        signs = rng.signs(m * n).reshape(m, n)
        if isinstance(family, LinearBall):
            vals[start:start + m] = family.radius / n * kernels.draws_ball(signs, x)
        else:
            vals[start:start + m] = kernels.draws_finite(signs, scores) / n
    se = float(vals.std(ddof=1) / np.sqrt(draws)) if draws > 1 and np.ptp(vals) > 0 else 0.0
    return RademacherEstimate(float(vals.mean()), se, draws, False)


def rademacher_exact(samples, family):
    """Exact expectation by enumerating all 2**N sign vectors."""
    x = _samples(samples)
    n = x.shape[0]
    if n > MAX_EXACT_N:
        raise TooLarge(f"exact enumeration is limited to N <= {MAX_EXACT_N} (got {n}); use rademacher_mc")
    if isinstance(family, LinearBall):
        value = family.radius / n * kernels.exact_ball_mean(np.ascontiguousarray(x))
    else:
        value = kernels.exact_finite_mean(np.ascontiguousarray(family.scores(x))) / n
    return RademacherEstimate(float(value), 0.0, 1 << n, True)


def generalization_probe(net, train_set, held_out_set, loss, snapshots=None, alpha=None,
                         draws=2000, seed=0):
    """Train/held-out loss gap next to a Rademacher estimate over training snapshots.

    Diagnostic only: the gap is a single-function lower proxy for the
    estimation error and the snapshot family is a tiny subset of the model
    class, so ``holds`` carries no guarantee.
    """
    x_tr, y_tr = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in train_set)
    x_ho, y_ho = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in held_out_set)
    if x_tr.size == 0 or x_ho.size == 0:
        raise ContractViolation("train and held-out sets must be nonempty")
    loss = LossKind(loss)
    gap = abs(batch_loss(loss, forward(net, x_ho), y_ho, alpha)
              - batch_loss(loss, forward(net, x_tr), y_tr, alpha))
    family = FiniteSet(tuple(snapshots) if snapshots else (net,))
    if x_tr.shape[0] <= 16:
        est = rademacher_exact(x_tr, family)
    else:
        est = rademacher_mc(x_tr, family, draws, SeededRng(seed))
    value = est.value
    if value < 0:
        log.info("Rademacher estimate %.3g clamped to 0 (Monte-Carlo noise)", value)
        value = 0.0
    dig = digest(x_tr, y_tr, x_ho, y_ho)
    return TheoryReport("generalization", dig, gap, value, gap <= value + BOUND_TOL,
                        value - gap, ClaimKind.DIAGNOSTIC)


# -- randomized suites (used by the CLI and the acceptance tests) -----------

@dataclass(frozen=True)
class SuiteResult:
    claim: str
    trials: int
    failures: int
    worst: TheoryReport
    max_failures: int = 0

    @property
    def passed(self):
        return self.trials > 0 and self.failures <= self.max_failures

    def to_line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}\t{self.claim}\ttrials={self.trials}\tfailures={self.failures}\tworst={self.worst.to_line()}"


def _worst(claim, kind, lhs, rhs, dig):
    margin = (rhs - lhs) if kind is ClaimKind.BOUND else (lhs - rhs)
    k = int(np.argmin(margin))
    make = bound_report if kind is ClaimKind.BOUND else violation_report
    return make(claim, dig, lhs[k], rhs[k])


def lemma1_suite(trials=100_000, dims=(1, 2, 8, 64), seed=1, tol=1e-12):
    """Random triples split evenly over ``dims``; failure means lhs > rhs + tol."""
    rng = SeededRng(seed)
    per = -(-trials // len(dims))
    lhs_all, rhs_all, done = [], [], 0
    for d in dims:
        m = min(per, trials - done)
        if m <= 0:
            break
        x1, x2, x = (rng.normal(m * d).reshape(m, d) for _ in range(3))
        lhs, rhs = mae_lipschitz_sides(x1, x2, x)
        lhs_all.append(lhs)
        rhs_all.append(rhs)
        done += m
    lhs, rhs = np.concatenate(lhs_all), np.concatenate(rhs_all)
    failures = int(np.count_nonzero(lhs > rhs + tol))
    return SuiteResult("lemma1", done, failures, _worst("lemma1", ClaimKind.BOUND, lhs, rhs, f"seed={seed}"))


def lemma2_suite(trials=100_000, dims=(1, 2, 8, 64), seed=2):
    """Random pairs ordered so that ‖x2‖ > ‖x1‖; failure means no strict violation."""
    rng = SeededRng(seed)
    per = -(-trials // len(dims))
    lhs_all, rhs_all, done = [], [], 0
    for d in dims:
        m = min(per, trials - done)
        if m <= 0:
            break
        a = rng.normal(m * d).reshape(m, d)
        b = rng.normal(m * d).reshape(m, d)
        na, nb = (a * a).sum(1), (b * b).sum(1)
        swap = na > nb
        x1 = np.where(swap[:, None], b, a)
        x2 = np.where(swap[:, None], a, b)
        n1, n2 = np.minimum(na, nb), np.maximum(na, nb)
        # near-ties make the strict inequality a rounding coin-flip; push them apart
        tie = n2 <= n1 * (1 + 1e-6)
        x2[tie] *= 1.01
        lhs, rhs = mse_violation_sides(x1, x2)
        lhs_all.append(lhs)
        rhs_all.append(rhs)
        done += m
    lhs, rhs = np.concatenate(lhs_all), np.concatenate(rhs_all)
    failures = int(np.count_nonzero(~(lhs > rhs)))
    return SuiteResult("lemma2", done, failures, _worst("lemma2", ClaimKind.VIOLATION, lhs, rhs, f"seed={seed}"))


def theorem1_suite(net, inputs, trials=1000, seed=3, eta_range=(1e-3, 1.0), target=None):
    """Noise bound on random (x, eta) pairs; x drawn from ``inputs`` rows,
    ‖eta‖₂ log-uniform in ``eta_range``."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    rng = SeededRng(seed)
    upper = lipschitz_upper(net)
    d = net.input_dim
    pick = (rng.uniform(trials) * inputs.shape[0]).astype(np.int64)
    x = inputs[pick]
    direction = rng.normal(trials * d).reshape(trials, d)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    lo, hi = np.log(eta_range[0]), np.log(eta_range[1])
    radius = np.exp(lo + (hi - lo) * rng.uniform(trials))
    eta = direction * radius[:, None]
    target = np.zeros(net.output_dim) if target is None else np.asarray(target, dtype=np.float64)
    h0 = np.abs(forward(net, x) - target).sum(axis=1)
    h1 = np.abs(forward(net, x + eta) - target).sum(axis=1)
    lhs = np.abs(h1 - h0)
    rhs = upper.total * np.linalg.norm(eta, axis=1)
    failures = int(np.count_nonzero(lhs > rhs + BOUND_TOL))
    return SuiteResult("theorem1", trials, failures,
                       _worst("theorem1", ClaimKind.BOUND, lhs, rhs, digest(x[:1], eta[:1])))


def random_rademacher_instance(rng, max_n=12):
    """One random (samples, family) pair: LinearBall or FiniteSet with equal odds."""
    n = 1 + int(rng.uniform(1)[0] * max_n)
    if rng.uniform(1)[0] < 0.5:
        dim = 1 + int(rng.uniform(1)[0] * 4)
        radius = 0.5 + 2.0 * rng.uniform(1)[0]
        return rng.normal(n * dim).reshape(n, dim), LinearBall(radius, dim)
    d = 1 + int(rng.uniform(1)[0] * 4)
    q = 1 + int(rng.uniform(1)[0] * 3)
    k = 1 + int(rng.uniform(1)[0] * 5)
    members = tuple(rng.normal(q * d).reshape(q, d) for _ in range(k))
    return rng.normal(n * d).reshape(n, d), FiniteSet(members)


def rademacher_suite(instances=200, draws=100_000, seed=4, max_n=12, sigmas=3.0, coverage=0.99):
    """Monte-Carlo vs exact enumeration; an instance fails when they differ by more
    than ``sigmas`` reported standard errors. The suite passes when at least
    ``coverage`` of the instances agree."""
    rng = SeededRng(seed)
    lhs, rhs = np.empty(instances), np.empty(instances)
    for k in range(instances):
        x, fam = random_rademacher_instance(rng, max_n)
        mc = rademacher_mc(x, fam, draws, rng.spawn(k))
        ex = rademacher_exact(x, fam)
        lhs[k] = abs(mc.value - ex.value)
        rhs[k] = sigmas * mc.std_error
    failures = int(np.count_nonzero(lhs > rhs + 1e-12))
    return SuiteResult("rademacher", instances, failures,
                       _worst("rademacher", ClaimKind.BOUND, lhs, rhs, f"seed={seed}"),
                       max_failures=int(np.floor((1.0 - coverage) * instances + 1e-9)))


def losses_equivalence_suite(batches=1000, seed=5, steps_net=(6, 5, 3), samples=64):
    """LD/GD against MAE/MSE.

    With unit alpha the losses must agree exactly on random batches. With a
    constant alpha, LD and MAE training from the same seed must produce
    bit-identical parameters after every update.
    """
    rng = SeededRng(seed)
    gaps = []
    for _ in range(batches):
        n = 1 + int(rng.uniform(1)[0] * 16)
        q = 1 + int(rng.uniform(1)[0] * 16)
        p = rng.normal(n * q).reshape(n, q)
        t = rng.normal(n * q).reshape(n, q)
        one = np.ones(q)
        gaps.append(abs(ld_loss(p, t, one) - mae(p, t)))
        gaps.append(abs(gd_loss(p, t, one) - mse(p, t)))

    d, h, q = steps_net
    x = rng.normal(samples * d).reshape(samples, d)
    y = rng.normal(samples * q).reshape(samples, q)
    alpha = np.full(q, 0.5 + 2.0 * rng.uniform(1)[0])
    trail = {}
    for kind in (LossKind.MAE, LossKind.LD):
        seen = []
        cfg = TrainConfig(loss=kind, learning_rate=1e-2, max_epochs=3, batch_size=8, seed=seed,
                          patience=3, hidden=(h,), alpha=alpha if kind.needs_alpha else None)
        train(x, y, cfg, on_step=lambda e, s, net, seen=seen: seen.append(
            np.concatenate([np.r_[l.weights.ravel(), l.bias] for l in net.layers])))
        trail[kind] = np.array(seen)
    a, b = trail[LossKind.MAE], trail[LossKind.LD]
    if a.shape != b.shape:
        step_gaps = [np.inf]
    else:
        step_gaps = list(np.abs(a - b).max(axis=1))
    lhs = np.array(gaps + step_gaps, dtype=np.float64)
    rhs = np.zeros_like(lhs)
    failures = int(np.count_nonzero(lhs > 0))
    return SuiteResult("losses-equivalence", lhs.size, failures,
                       _worst("losses-equivalence", ClaimKind.BOUND, lhs, rhs, f"seed={seed}"))
