"""Corpus plumbing: PCM16 WAV I/O, synthetic speech and noise, SNR mixing,
manifests, feature shards and the binary stats format.

Binary formats (all little-endian):

* ``V2VF`` shard: magic, version u32, rows u32, d_in u32, d_out u32,
  32-byte provenance digest, inputs f32 row-major, targets f32 row-major.
* ``V2VS`` stats: magic, version u32, dim u32, mean f64 x dim, std f64 x dim.
"""
import hashlib
import os
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import signal

from .dsp import (NAT_LEAD_FRAMES, GvStats, NormStats, PROFILES, StftConfig, Waveform, apply_norm,
                  fit_norm, lps, make_context, nat_estimate, stft)
from .errors import ContractViolation, ParseError, UnsupportedFormat, UtteranceError, VersionError
from .numerics import SeededRng

SUPPORTED_RATES = (8000, 16000, 48000)
SHARD_MAGIC = b"V2VF"
STATS_MAGIC = b"V2VS"
FORMAT_VERSION = 1
PEAK_LIMIT = 0.99
ACTIVE_FRAME_S = 0.02
ACTIVE_RATIO = 0.01
ASPIRATION_CUTOFF_HZ = 2000.0

TRAIN_SNRS = (15.0, 10.0, 5.0, 0.0)
TEST_SNRS = (17.5, 12.5, 7.5, 2.5)


# -- WAV ---------------------------------------------------------------------

def read_wav(path):
    """Read a mono 16-bit PCM RIFF/WAVE file into a Waveform scaled by 1/32768."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12:
        raise ParseError("file too short for a RIFF header", len(buf))
    if buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise ParseError("not a RIFF/WAVE file", 0)
    off = 12
    fmt = None
    data = None
    while off + 8 <= len(buf):
        cid = buf[off:off + 4]
        size = struct.unpack_from("<I", buf, off + 4)[0]
        body = off + 8
        if body + size > len(buf):
            raise ParseError(f"chunk {cid!r} runs past end of file", off)
        if cid == b"fmt ":
            if size < 16:
                raise ParseError("fmt chunk shorter than 16 bytes", off)
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", buf, body)
            fmt = (tag, channels, rate, bits, off)
        elif cid == b"data":
            data = (body, size)
        off = body + size + (size & 1)
    if fmt is None:
        raise ParseError("missing fmt chunk", 12)
    tag, channels, rate, bits, fmt_off = fmt
    if tag != 1 or bits != 16:
        raise UnsupportedFormat(f"only 16-bit PCM is supported (format tag {tag}, {bits} bits)", fmt_off + 8)
    if channels != 1:
        raise UnsupportedFormat(f"only mono is supported, got {channels} channels", fmt_off + 10)
    if rate not in SUPPORTED_RATES:
        raise UnsupportedFormat(f"sample rate {rate} not in {SUPPORTED_RATES}", fmt_off + 12)
    if data is None:
        raise ParseError("missing data chunk", off)
    start, size = data
    if size < 2:
        raise ParseError("empty data chunk", start)
    pcm = np.frombuffer(buf, dtype="<i2", count=size // 2, offset=start)
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def quantize(samples):
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, w):
    x = w.samples
    if np.any(np.abs(x) > 1.0):
        raise ContractViolation("samples must lie in [-1, 1]")
    if w.sample_rate not in SUPPORTED_RATES:
        raise ContractViolation(f"sample rate {w.sample_rate} not in {SUPPORTED_RATES}")
    pcm = quantize(x).tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate, 2 * w.sample_rate, 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    _atomic_write(path, header + pcm)


# -- synthesis ---------------------------------------------------------------

def _smooth_gate(n, sr, rng):
    """0/1 voice-activity envelope with 20 ms raised-cosine edges."""
    gate = np.zeros(n)
    t = int(rng.uniform(1)[0] * 0.15 * sr)
    voiced = True
    while t < n:
        dur = 0.25 + 0.45 * rng.uniform(1)[0] if voiced else 0.05 + 0.2 * rng.uniform(1)[0]
        end = min(n, t + int(dur * sr))
        if voiced:
            gate[t:end] = 1.0
        t = end
        voiced = not voiced
    ramp = max(2, int(0.02 * sr))
    kernel = hann_kernel(ramp)
    return np.convolve(gate, kernel / kernel.sum(), mode="same")


def hann_kernel(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * (np.arange(n) + 1) / (n + 1))


def synth_clean(duration_s, sr, seed):
    """Speech stand-in: 3-6 harmonics of a gliding 100-300 Hz fundamental plus weak
    high-band aspiration, slow amplitude modulation, voice/silence gating and a
    -60 dB noise floor; peak scaled to 0.5."""
    if duration_s < 0.5:
        raise ContractViolation("duration must be at least 0.5 s")
    rng = SeededRng(seed)
    n = int(round(duration_s * sr))
    t = np.arange(n) / sr
    f0 = 100.0 + 200.0 * rng.uniform(1)[0]
    glide = 1.0 + 0.08 * np.sin(2 * np.pi * (0.5 + rng.uniform(1)[0]) * t + 2 * np.pi * rng.uniform(1)[0])
    phase = 2 * np.pi * np.cumsum(f0 * glide) / sr
    n_harm = 3 + int(rng.uniform(1)[0] * 4)
    amps = 1.0 / np.arange(1, n_harm + 1) * (0.6 + 0.4 * rng.uniform(n_harm))
    offsets = 2 * np.pi * rng.uniform(n_harm)
    x = sum(a * np.sin(k * phase + o) for k, a, o in zip(range(1, n_harm + 1), amps, offsets))
    # aspiration: high-passed noise at about -15 dB re the harmonics, so every
    # band up to Nyquist carries a speech-shaped envelope
    hp = signal.butter(4, ASPIRATION_CUTOFF_HZ, btype="highpass", fs=sr, output="sos")
    breath = signal.sosfilt(hp, rng.normal(n))
    x = x + 0.18 * np.sqrt(np.mean(x * x) / np.mean(breath * breath)) * breath
    am_rate = 2.0 + 4.0 * rng.uniform(1)[0]
    x = x * (0.6 + 0.4 * np.sin(2 * np.pi * am_rate * t + 2 * np.pi * rng.uniform(1)[0]))
    x = x * _smooth_gate(n, sr, rng)
    # recording noise floor, 60 dB below the voiced level
    x = x + 1e-3 * np.sqrt(np.mean(x * x)) * rng.normal(n)
    peak = np.max(np.abs(x))
    if peak == 0:
        x[n // 2] = 1.0
        peak = 1.0
    return Waveform(0.5 * x / peak, sr)


class NoiseKind(str, Enum):
    WHITE = "white"
    PINK = "pink"
    BABBLE = "babble"
    FILE = "file"


# Kellet's 3-pole/3-zero approximation of a -3 dB/octave slope
_PINK_B = np.array([0.049922035, -0.095993537, 0.050612699, -0.004408786])
_PINK_A = np.array([1.0, -2.494956002, 2.017265875, -0.522189400])


def make_noise(kind, n, sr, seed, path=None):
    kind = NoiseKind(kind)
    rng = SeededRng(seed)
    if kind is NoiseKind.WHITE:
        x = rng.normal(n)
    elif kind is NoiseKind.PINK:
        warm = 2048
        x = signal.lfilter(_PINK_B, _PINK_A, rng.normal(n + warm))[warm:]
    elif kind is NoiseKind.BABBLE:
        dur = max(0.5, n / sr)
        x = sum(synth_clean(dur, sr, rng.spawn(k).seed).samples[:n] for k in range(8))
        hi = min(3400.0, 0.45 * sr)
        sos = signal.butter(4, [100.0, hi], btype="bandpass", fs=sr, output="sos")
        x = signal.sosfilt(sos, x)
    else:
        if path is None:
            raise ContractViolation("file noise needs a path")
        w = read_wav(path)
        if w.sample_rate != sr:
            raise ContractViolation(f"noise file rate {w.sample_rate} != {sr}")
        x = np.resize(w.samples, n)
    rms = np.sqrt(np.mean(x * x))
    return Waveform(x / rms if rms > 0 else x, sr)


def active_mask(x, sr):
    """Samples belonging to frames whose energy exceeds 1/100 of the mean frame energy."""
    frame = max(1, int(round(ACTIVE_FRAME_S * sr)))
    count = -(-x.shape[0] // frame)
    padded = np.zeros(count * frame)
    padded[: x.shape[0]] = x
    energy = (padded.reshape(count, frame) ** 2).sum(axis=1)
    keep = energy > ACTIVE_RATIO * energy.mean()
    return np.repeat(keep, frame)[: x.shape[0]]


def scaled_noise(clean, noise, snr_db):
    """Noise tiled/truncated to the clean length and scaled to the requested SNR."""
    if clean.sample_rate != noise.sample_rate:
        raise ContractViolation("clean and noise sample rates differ")
    if not np.isfinite(snr_db):
        raise ContractViolation("snr_db must be finite")
    c = clean.samples
    v = np.resize(noise.samples, c.shape[0])
    mask = active_mask(c, clean.sample_rate)
    p_clean = np.mean(c[mask] ** 2) if mask.any() else 0.0
    if p_clean == 0:
        raise ContractViolation("clean signal is silent")
    p_noise = np.mean(v[mask] ** 2)
    if p_noise == 0:
        raise ContractViolation("noise is silent over the clean active region")
    return v * np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))


def mix_at_snr(clean, noise, snr_db):
    return Waveform(clean.samples + scaled_noise(clean, noise, snr_db), clean.sample_rate)


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class MixSpec:
    snr_db: float
    noise_kind: NoiseKind
    seed: int


@dataclass
class CorpusManifest:
    entries: list
    split: str = "train"
    profile: str = "desk"

    def __post_init__(self):
        ids = [uid for uid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ContractViolation("utterance ids must be unique within a split")

    def to_text(self):
        lines = [f"# split\t{self.split}", f"# profile\t{self.profile}"]
        for uid, m in self.entries:
            lines.append(f"{uid}\t{m.noise_kind.value}\t{m.snr_db!r}\t{m.seed}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def parse_manifest(text):
    meta = {}
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].strip().split("\t")
            if len(parts) == 2:
                meta[parts[0].strip()] = parts[1].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"manifest line {lineno}: expected 4 tab-separated fields")
        uid, kind, snr, seed = parts
        try:
            entries.append((uid, MixSpec(float(snr), NoiseKind(kind), int(seed))))
        except ValueError as exc:
            raise ParseError(f"manifest line {lineno}: {exc}") from exc
    return CorpusManifest(entries, meta.get("split", "train"), meta.get("profile", "desk"))


def read_manifest(path):
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def synthetic_manifest(n, split, snrs, kinds, seed, profile="desk"):
    """Round-robin over SNRs and noise kinds; per-utterance seeds derived from ``seed``."""
    rng = SeededRng(seed)
    seeds = rng.raw(n) >> np.uint64(1)
    kinds = [NoiseKind(k) for k in kinds]
    entries = [
        (f"{split}{i:05d}", MixSpec(float(snrs[i % len(snrs)]), kinds[(i // len(snrs)) % len(kinds)], int(seeds[i])))
        for i in range(n)
    ]
    return CorpusManifest(entries, split, profile)


# -- utterances and datasets -------------------------------------------------

def utterance_duration(seed):
    return 1.0 + SeededRng(seed).spawn(7).uniform(1)[0]


def synth_utterance(spec, sr, root=None, uid=None):
    """(clean, noisy) pair for one manifest row, peak-limited to ``PEAK_LIMIT``."""
    base = SeededRng(spec.seed)
    clean = synth_clean(utterance_duration(spec.seed), sr, base.spawn(1).seed)
    path = None
    if spec.noise_kind is NoiseKind.FILE:
        if root is None or uid is None:
            raise ContractViolation("file noise needs the corpus root and utterance id")
        path = Path(root) / "noise" / f"{uid}.wav"
    noise = make_noise(spec.noise_kind, len(clean), sr, base.spawn(2).seed, path)
    noisy = clean.samples + scaled_noise(clean, noise, spec.snr_db)
    peak = np.max(np.abs(noisy))
    gain = PEAK_LIMIT / peak if peak > PEAK_LIMIT else 1.0
    return Waveform(clean.samples * gain, sr), Waveform(noisy * gain, sr)


def load_utterance(uid, spec, sr, root=None):
    """Clean/noisy WAVs from ``root`` when present, else the deterministic synthesis."""
    if root is not None:
        cp = Path(root) / "clean" / f"{uid}.wav"
        npth = Path(root) / "noisy" / f"{uid}.wav"
        if cp.exists() and npth.exists():
            clean, noisy = read_wav(cp), read_wav(npth)
            if clean.sample_rate != sr or noisy.sample_rate != sr:
                raise ContractViolation(f"{uid}: WAV rate does not match profile rate {sr}")
            n = min(len(clean), len(noisy))
            return Waveform(clean.samples[:n], sr), Waveform(noisy.samples[:n], sr)
    return synth_utterance(spec, sr, root, uid)


@dataclass(frozen=True)
class FeatureConfig:
    stft: StftConfig = PROFILES["desk"]
    context: int = 3
    nat: bool = False
    nat_frames: int = NAT_LEAD_FRAMES
    per_utterance_norm: bool = False

    @property
    def d_in(self):
        return (self.context + (1 if self.nat else 0)) * self.stft.bins

    @property
    def d_out(self):
        return self.stft.bins

    def describe(self):
        s = self.stft
        return (f"sr={s.sample_rate};fft={s.fft_size};hop={s.hop};win={s.window};context={self.context};"
                f"nat={int(self.nat)};nat_frames={self.nat_frames};per_utt={int(self.per_utterance_norm)}")


@dataclass
class FeatureShard:
    inputs: np.ndarray   # float32 (N, d_in)
    targets: np.ndarray  # float32 (N, d_out)
    provenance: bytes = b"\0" * 32

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float32)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float32)
        if self.inputs.ndim != 2 or self.targets.ndim != 2 or self.inputs.shape[0] != self.targets.shape[0]:
            raise ContractViolation("shard inputs/targets must be 2-D with equal row counts")
        if len(self.provenance) != 32:
            raise ContractViolation("provenance digest must be 32 bytes")


@dataclass
class Dataset:
    shard: FeatureShard
    input_norm: NormStats
    target_norm: NormStats
    gv: GvStats
    frames_per_utterance: list = field(default_factory=list)


def input_features(noisy_lps, norm, fcfg):
    """Network inputs for one utterance: normalized context windows (+ NAT vector)."""
    if fcfg.per_utterance_norm:
        norm = fit_norm([noisy_lps])
    z = apply_norm(noisy_lps, norm)
    x = make_context(z, fcfg.context)
    if fcfg.nat:
        lead = min(fcfg.nat_frames, len(z))
        x = np.concatenate([x, np.broadcast_to(nat_estimate(z, lead), (len(z), z.frames.shape[1]))], axis=1)
    return x


def build_dataset(manifest, fcfg, norms=None, root=None):
    """Feature shard for ``manifest``. Normalization statistics are fitted here
    unless ``norms=(input_norm, target_norm)`` is given (test splits)."""
    if not manifest.entries:
        raise ContractViolation("manifest is empty")
    sr = fcfg.stft.sample_rate
    noisy_l, clean_l = [], []
    for uid, spec in manifest.entries:
        try:
            clean, noisy = load_utterance(uid, spec, sr, root)
            noisy_l.append(lps(stft(noisy, fcfg.stft)))
            clean_l.append(lps(stft(clean, fcfg.stft)))
        except (ValueError, OSError) as exc:
            raise UtteranceError(uid, exc) from exc
    if norms is None:
        in_norm, tgt_norm = fit_norm(noisy_l), fit_norm(clean_l)
    else:
        in_norm, tgt_norm = norms
    inputs = np.concatenate([input_features(l, in_norm, fcfg) for l in noisy_l])
    targets = np.concatenate([apply_norm(l, tgt_norm).frames for l in clean_l])
    ref_std = fit_norm(clean_l).std
    prov = hashlib.sha256((manifest.to_text() + fcfg.describe()).encode()).digest()
    return Dataset(FeatureShard(inputs, targets, prov), in_norm, tgt_norm, GvStats(ref_std, ref_std.copy()),
                   [len(l) for l in noisy_l])


# -- binary formats ----------------------------------------------------------

def _atomic_write(path, payload):
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def save_shard(path, s):
    rows, d_in = s.inputs.shape
    d_out = s.targets.shape[1]
    head = SHARD_MAGIC + struct.pack("<IIII", FORMAT_VERSION, rows, d_in, d_out) + s.provenance
    _atomic_write(path, head + s.inputs.astype("<f4").tobytes() + s.targets.astype("<f4").tobytes())


def load_shard(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 52:
        raise ParseError("truncated shard header", len(buf))
    if buf[:4] != SHARD_MAGIC:
        raise ParseError(f"bad magic {buf[:4]!r}", 0)
    version, rows, d_in, d_out = struct.unpack_from("<IIII", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported shard version {version}", 4)
    if d_out == 0 or d_in % d_out:
        raise ParseError(f"d_in={d_in} is not a whole number of {d_out}-bin frames", 12)
    prov = buf[20:52]
    need = 52 + 4 * rows * (d_in + d_out)
    if len(buf) != need:
        raise ParseError(f"shard size {len(buf)} != expected {need}", min(len(buf), need))
    off = 52
    x = np.frombuffer(buf, dtype="<f4", count=rows * d_in, offset=off).reshape(rows, d_in)
    off += 4 * rows * d_in
    y = np.frombuffer(buf, dtype="<f4", count=rows * d_out, offset=off).reshape(rows, d_out)
    return FeatureShard(x.astype(np.float32), y.astype(np.float32), prov)


def shard_layout(s):
    """(context, nat) implied by a shard's widths: odd multiples have no NAT block."""
    k = s.inputs.shape[1] // s.targets.shape[1]
    return (k, False) if k % 2 else (k - 1, True)


def save_stats(path, s):
    mean = np.asarray(s.mean, dtype="<f8")
    std = np.asarray(s.std, dtype="<f8")
    _atomic_write(path, STATS_MAGIC + struct.pack("<II", FORMAT_VERSION, mean.shape[0])
                  + mean.tobytes() + std.tobytes())


def load_stats(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12:
        raise ParseError("truncated stats header", len(buf))
    if buf[:4] != STATS_MAGIC:
        raise ParseError(f"bad magic {buf[:4]!r}", 0)
    version, dim = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported stats version {version}", 4)
    if len(buf) != 12 + 16 * dim:
        raise ParseError(f"stats size {len(buf)} != expected {12 + 16 * dim}", min(len(buf), 12 + 16 * dim))
    mean = np.frombuffer(buf, dtype="<f8", count=dim, offset=12).astype(np.float64)
    std = np.frombuffer(buf, dtype="<f8", count=dim, offset=12 + 8 * dim).astype(np.float64)
    return NormStats(mean, std)
