"""Evaluation: feature-domain MAE/MSE, STOI and segmental SNR."""
from dataclasses import asdict, dataclass
from math import gcd

import numpy as np
from scipy.signal import resample_poly

from . import kernels
from .errors import ContractViolation
from .losses import mae, mse
from .network import forward

# STOI reference constants
STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0

SEG_SNR_RANGE = (-10.0, 35.0)


@dataclass
class EvalReport:
    label: str
    mae: float
    mse: float
    stoi: float
    seg_snr_db: float
    utterance_count: int
    noisy_stoi: float = float("nan")
    noisy_seg_snr_db: float = float("nan")
    raw_mae: float = float("nan")
    raw_mse: float = float("nan")

    FIELDS = ("label", "mae", "mse", "stoi", "seg_snr_db", "utterance_count",
              "noisy_stoi", "noisy_seg_snr_db", "raw_mae", "raw_mse")

    def to_line(self):
        d = asdict(self)
        return "\t".join(d[k] if k == "label" else repr(d[k]) for k in self.FIELDS)

    @classmethod
    def header(cls):
        return "\t".join(cls.FIELDS)


def eval_features(model, shard):
    """(mae, mse) of model predictions against shard targets, normalized domain."""
    x = np.asarray(shard.inputs, dtype=np.float64)
    y = np.asarray(shard.targets, dtype=np.float64)
    if x.shape[1] != model.input_dim or y.shape[1] != model.output_dim:
        raise ContractViolation("shard widths do not match the model")
    pred = forward(model, x)
    return mae(pred, y), mse(pred, y)


def thirdoct_matrix(fs=STOI_FS, nfft=STOI_NFFT, num_bands=STOI_BANDS, min_freq=STOI_MIN_FREQ):
    """One-third octave band selection matrix over rfft bins, edges snapped to bins."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(num_bands, dtype=np.float64)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((num_bands, f.shape[0]))
    for i in range(num_bands):
        a = int(np.argmin((f - lo[i]) ** 2))
        b = int(np.argmin((f - hi[i]) ** 2))
        obm[i, a:b] = 1.0
    return obm


_OBM = thirdoct_matrix()


def _stoi_frames(x, n, hop):
    count = len(range(0, x.shape[0] - n, hop))
    if count <= 0:
        return np.zeros((0, n))
    return kernels.frame_signal(x, n, hop)[:count]


def remove_silent_frames(x, y, dyn_range=STOI_DYN_RANGE_DB, n=STOI_FRAME, hop=STOI_FRAME // 2):
    """Drop frames more than ``dyn_range`` dB below the loudest clean frame, then re-synthesize."""
    w = np.hanning(n + 2)[1:-1]
    xf = _stoi_frames(x, n, hop) * w
    yf = _stoi_frames(y, n, hop) * w
    energy = 20 * np.log10(np.linalg.norm(xf, axis=1) + np.finfo(np.float64).eps)
    keep = (energy.max() - dyn_range - energy) < 0
    xf, yf = xf[keep], yf[keep]
    if xf.shape[0] == 0:
        return np.zeros(0), np.zeros(0)
    return (kernels.overlap_add(np.ascontiguousarray(xf), hop),
            kernels.overlap_add(np.ascontiguousarray(yf), hop))


def _band_envelopes(x):
    w = np.hanning(STOI_FRAME + 2)[1:-1]
    frames = _stoi_frames(x, STOI_FRAME, STOI_FRAME // 2) * w
    spec = np.fft.rfft(frames, n=STOI_NFFT, axis=1)
    return np.sqrt(_OBM @ (np.abs(spec) ** 2).T)


def _to_10k(x, sr):
    if sr == STOI_FS:
        return x
    g = gcd(STOI_FS, sr)
    return resample_poly(x, STOI_FS // g, sr // g)


def stoi(clean, processed, sr):
    """Short-time objective intelligibility in [0, 1]."""
    c = clean.samples if hasattr(clean, "samples") else np.asarray(clean, dtype=np.float64)
    p = processed.samples if hasattr(processed, "samples") else np.asarray(processed, dtype=np.float64)
    if c.shape != p.shape:
        raise ContractViolation(f"length mismatch: {c.shape[0]} vs {p.shape[0]}")
    if sr not in (8000, 16000, STOI_FS):
        raise ContractViolation(f"unsupported sample rate {sr}")
    x, y = remove_silent_frames(_to_10k(c, sr), _to_10k(p, sr))
    if x.shape[0] < STOI_FRAME + 1:
        raise ContractViolation("too little active speech for STOI")
    xb = np.ascontiguousarray(_band_envelopes(x))
    yb = np.ascontiguousarray(_band_envelopes(y))
    if xb.shape[1] < STOI_SEGMENT:
        raise ContractViolation(f"need at least {STOI_SEGMENT} active frames for STOI, got {xb.shape[1]}")
    clip = 1.0 + 10.0 ** (-STOI_BETA_DB / 20.0)
    d = kernels.stoi_segments(xb, yb, STOI_SEGMENT, clip)
    return float(min(1.0, max(0.0, d)))


def seg_snr(clean, processed, frame=256, active_ratio=0.01):
    """Mean over active frames of the per-frame SNR, each clamped to [-10, 35] dB.

    A frame is active when its clean energy exceeds ``active_ratio`` times the
    mean clean frame energy; a trailing partial frame is ignored.
    """
    c = clean.samples if hasattr(clean, "samples") else np.asarray(clean, dtype=np.float64)
    p = processed.samples if hasattr(processed, "samples") else np.asarray(processed, dtype=np.float64)
    if c.shape != p.shape:
        raise ContractViolation(f"length mismatch: {c.shape[0]} vs {p.shape[0]}")
    if frame < 64:
        raise ContractViolation("frame must be >= 64 samples")
    count = c.shape[0] // frame
    if count == 0:
        raise ContractViolation("signal shorter than one frame")
    cf = c[: count * frame].reshape(count, frame)
    ef = (c - p)[: count * frame].reshape(count, frame)
    sig = (cf ** 2).sum(axis=1)
    err = (ef ** 2).sum(axis=1)
    active = sig > active_ratio * sig.mean()
    if not active.any():
        raise ContractViolation("clean signal is silent")
    with np.errstate(divide="ignore"):
        snr = 10 * np.log10(sig[active] / err[active])
    return float(np.clip(snr, *SEG_SNR_RANGE).mean())
