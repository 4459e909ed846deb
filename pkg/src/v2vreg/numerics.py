"""Dense float64 helpers, the seeded random stream and the spectral norm.

Vectors and matrices are plain float64 numpy arrays; ``as_vector`` and
``as_matrix`` enforce shape and finiteness at public boundaries.
"""
import numpy as np

from .errors import ContractViolation, NonConvergence

POWER_ITERATION_SEED = 0xA11CE
_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi


def as_vector(v, name="vector"):
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] == 0:
        raise ContractViolation(f"{name} must be a nonempty 1-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    return a


def as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ContractViolation(f"{name} must be a nonempty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    return a


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class SeededRng:
    """Deterministic random stream keyed by a 64-bit seed.

    Raw words come from the Philox4x64-10 counter-based generator (numpy's
    ``Philox`` bit generator, whose raw output is version-stable). Every
    transform on top of the raw words is implemented here and fixed:

    * uniform: ``((w >> 11) + 0.5) * 2**-53``, strictly inside (0, 1);
    * normal: Box-Muller on consecutive uniform pairs ``(u1, u2)``, emitting
      ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``; an odd tail value is dropped;
    * sign: the top bit of a word, 0 -> +1 and 1 -> -1;
    * permutation: stable argsort of fresh uniforms.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed <= _MASK64:
            raise ContractViolation(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self._bits = np.random.Philox(key=seed)

    def raw(self, n):
        return self._bits.random_raw(int(n)).astype(np.uint64)

    def uniform(self, n):
        w = self.raw(n)
        return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, n):
        n = int(n)
        if n < 1:
            raise ContractViolation(f"need at least one draw, got n={n}")
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = _TWO_PI * u[1::2]
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def signs(self, n):
        w = self.raw(n)
        return 1.0 - 2.0 * (w >> np.uint64(63)).astype(np.float64)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def spawn(self, key):
        """Independent child stream; same (seed, key) always gives the same child."""
        return SeededRng(splitmix64(self.seed ^ splitmix64(int(key) & _MASK64)))


def sample_standard_normal(rng, n):
    return rng.normal(n)


def matvec(m, v):
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ContractViolation(f"matvec: matrix has {m.shape[1]} columns, vector has dim {v.shape[0]}")
    return m @ v


def spectral_norm(m, tol=1e-10, max_iter=100_000):
    """Largest singular value of ``m`` by power iteration on the Gram matrix.

    Iteration stops once the eigen-residual ``||G v - theta v||`` falls below
    ``tol * theta``; the Rayleigh quotient error is then of order
    ``(tol * theta)**2 / gap``, far below ``tol``. The start vector is drawn
    from ``SeededRng(POWER_ITERATION_SEED)``, so results are reproducible.
    """
    a = as_matrix(m)
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    gram = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    if not np.any(gram):
        return 0.0
    v = SeededRng(POWER_ITERATION_SEED).normal(gram.shape[0])
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iter):
        w = gram @ v
        theta = float(v @ w)
        resid = np.linalg.norm(w - theta * v)
        if resid <= tol * theta:
            return float(np.sqrt(theta))
        v = w / np.linalg.norm(w)
    raise NonConvergence(
        f"power iteration did not converge in {max_iter} iterations",
        last_iterate=float(np.sqrt(max(theta, 0.0))),
        iterations=max_iter,
    )
