"""Short-time spectral analysis/synthesis and the LPS feature pipeline.

FFT convention: forward unnormalized, inverse scaled by ``1/fft_size``
(numpy's ``rfft``/``irfft``). Analysis uses a periodic Hann window at 50%
overlap, whose shifted copies sum to exactly one, so synthesis is a plain
overlap-add of the inverse frames with no extra window.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractViolation

POWER_FLOOR = 1e-10
STD_FLOOR = 1e-6
NAT_LEAD_FRAMES = 6


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int
    fft_size: int
    hop: int = None
    window: str = "hann"

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ContractViolation(f"fft_size must be a power of two, got {n}")
        if self.hop is None:
            object.__setattr__(self, "hop", n // 2)
        if self.hop != n // 2:
            raise ContractViolation("hop must be fft_size/2 (50% overlap)")
        if self.window != "hann":
            raise ContractViolation(f"unsupported window {self.window!r}")
        if self.sample_rate <= 0:
            raise ContractViolation("sample_rate must be positive")

    @property
    def bins(self):
        return self.fft_size // 2 + 1


PROFILES = {
    "desk": StftConfig(8000, 256),
    "paper": StftConfig(16000, 512),
}


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ContractViolation("waveform must be a nonempty 1-D signal")
        if self.sample_rate <= 0:
            raise ContractViolation("sample_rate must be positive")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class Spectrogram:
    frames: np.ndarray  # complex, (T, bins)
    config: StftConfig

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.bins:
            raise ContractViolation(f"spectrogram needs {self.config.bins} bins, got shape {self.frames.shape}")


@dataclass
class LpsSequence:
    frames: np.ndarray  # real, (T, bins)
    config: StftConfig

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.bins:
            raise ContractViolation(f"LPS needs {self.config.bins} bins, got shape {self.frames.shape}")

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class GvStats:
    reference_std: np.ndarray
    produced_std: np.ndarray


def hann(n):
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(w, cfg):
    x = w.samples
    if x.shape[0] < cfg.fft_size:
        raise ContractViolation(f"signal of {x.shape[0]} samples is shorter than fft_size {cfg.fft_size}")
    frames = kernels.frame_signal(x, cfg.fft_size, cfg.hop) * hann(cfg.fft_size)
    return Spectrogram(np.fft.rfft(frames, axis=1), cfg)


def _same_shape(a, b):
    if a.frames.shape != b.frames.shape or a.config != b.config:
        raise ContractViolation(f"shape/config mismatch: {a.frames.shape} vs {b.frames.shape}")


def overlap_add(spec, phase_source, cfg):
    """Waveform from the magnitudes of ``spec`` and the phases of ``phase_source``."""
    _same_shape(spec, phase_source)
    if spec.config != cfg:
        raise ContractViolation("spectrogram config differs from cfg")
    z = np.abs(spec.frames) * np.exp(1j * np.angle(phase_source.frames))
    frames = np.fft.irfft(z, n=cfg.fft_size, axis=1)
    # periodic Hann at hop n/2 sums to 1, so the constant-overlap-add gain is 1
    return Waveform(kernels.overlap_add(np.ascontiguousarray(frames), cfg.hop), cfg.sample_rate)


def lps(spec, floor=POWER_FLOOR):
    if not floor > 0:
        raise ContractViolation("power floor must be > 0")
    power = spec.frames.real ** 2 + spec.frames.imag ** 2
    return LpsSequence(np.log(np.maximum(power, floor)), spec.config)


def lps_to_spectrogram(l, phase_source):
    if l.frames.shape != phase_source.frames.shape:
        raise ContractViolation("LPS and phase source shapes differ")
    mag = np.sqrt(np.exp(l.frames))
    return Spectrogram(mag * np.exp(1j * np.angle(phase_source.frames)), phase_source.config)


def fit_norm(train_lps):
    seqs = list(train_lps)
    if not seqs:
        raise ContractViolation("cannot fit normalization on an empty corpus")
    stacked = np.concatenate([s.frames for s in seqs], axis=0)
    return NormStats(stacked.mean(axis=0), np.maximum(stacked.std(axis=0), STD_FLOOR))


def apply_norm(l, s):
    return LpsSequence((l.frames - s.mean) / s.std, l.config)


def invert_norm(l, s):
    return LpsSequence(l.frames * s.std + s.mean, l.config)


def make_context(l, width=3):
    """Per-frame concatenation of the ``width`` surrounding frames (edges replicated)."""
    if width < 1 or width % 2 == 0:
        raise ContractViolation(f"context width must be odd and >= 1, got {width}")
    half = width // 2
    x = l.frames
    padded = np.concatenate([np.repeat(x[:1], half, axis=0), x, np.repeat(x[-1:], half, axis=0)])
    return np.concatenate([padded[k:k + x.shape[0]] for k in range(width)], axis=1)


def nat_estimate(noisy, lead_frames=NAT_LEAD_FRAMES):
    """Noise estimate: per-bin mean of the first ``lead_frames`` frames."""
    if not 1 <= lead_frames <= len(noisy):
        raise ContractViolation(f"lead_frames must be in [1, {len(noisy)}], got {lead_frames}")
    return noisy.frames[:lead_frames].mean(axis=0)


def gv_equalize(enhanced, g):
    ref = np.asarray(g.reference_std, dtype=np.float64)
    prod = np.asarray(g.produced_std, dtype=np.float64)
    if np.any(ref <= 0) or np.any(prod <= 0):
        raise ContractViolation("GV statistics must be positive")
    mean = enhanced.frames.mean(axis=0)
    return LpsSequence((enhanced.frames - mean) * (ref / prod) + mean, enhanced.config)
