"""Hot-loop kernels with two interchangeable backends.

The backend is picked once at import from the ``V2V_BACKEND`` environment
variable: ``numba`` (default) or ``numpy``. If numba cannot be imported the
numpy path is used silently. Both backends are importable directly as
``numpy_backend`` / ``numba_backend()`` for parity tests and benchmarks.
"""
import os

from . import _numpy as numpy_backend

KERNELS = (
    "frame_signal",
    "overlap_add",
    "exact_ball_mean",
    "exact_finite_mean",
    "draws_ball",
    "draws_finite",
    "stoi_segments",
)


def numba_backend():
    """Return the numba kernel module, or None when numba is unavailable."""
    try:
        from . import _numba
    except ImportError:
        return None
    return _numba


def _select(name):
    name = name.strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"V2V_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba":
        mod = numba_backend()
        if mod is not None:
            return "numba", mod
    return "numpy", numpy_backend


BACKEND, _impl = _select(os.environ.get("V2V_BACKEND", "numba"))

frame_signal = _impl.frame_signal
overlap_add = _impl.overlap_add
exact_ball_mean = _impl.exact_ball_mean
exact_finite_mean = _impl.exact_finite_mean
draws_ball = _impl.draws_ball
draws_finite = _impl.draws_finite
stoi_segments = _impl.stoi_segments
