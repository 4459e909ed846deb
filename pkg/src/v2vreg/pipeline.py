"""Glue between features, the network and waveforms: enhancement and corpus evaluation."""
from dataclasses import dataclass

import numpy as np

from .corpus import build_dataset, input_features, load_utterance
from .dsp import (POWER_FLOOR, STD_FLOOR, GvStats, LpsSequence, NormStats, Waveform, gv_equalize, invert_norm, lps,
                  lps_to_spectrogram, overlap_add, stft)
from .metrics import EvalReport, eval_features, seg_snr, stoi
from .network import forward


@dataclass
class ModelBundle:
    """A trained network plus the statistics needed to run it on waveforms."""
    net: object
    input_norm: NormStats
    target_norm: NormStats
    produced: NormStats = None  # normalized-domain output stats on training data, for GV
    label: str = "model"

    def gv_stats(self):
        if self.produced is None:
            return None
        # reference = clean-train LPS std; produced = std of denormalized training outputs
        return GvStats(self.target_norm.std, np.maximum(self.produced.std * self.target_norm.std, STD_FLOOR))


def output_stats(net, inputs):
    pred = forward(net, np.asarray(inputs, dtype=np.float64))
    return NormStats(pred.mean(axis=0), np.maximum(pred.std(axis=0), STD_FLOOR))


def enhance_waveform(bundle, noisy, fcfg, use_gv=True):
    """noisy -> LPS -> normalize -> context(+NAT) -> network -> denormalize -> GV -> overlap-add."""
    cfg = fcfg.stft
    if noisy.sample_rate != cfg.sample_rate:
        raise ValueError(f"input rate {noisy.sample_rate} != profile rate {cfg.sample_rate}")
    spec = stft(noisy, cfg)
    x = input_features(lps(spec), bundle.input_norm, fcfg)
    out = invert_norm(LpsSequence(forward(bundle.net, x), cfg), bundle.target_norm)
    gv = bundle.gv_stats() if use_gv else None
    if gv is not None:
        out = gv_equalize(out, gv)
    # a runaway output must not overflow exp(); full scale tops out near fft_size^2
    out = LpsSequence(np.clip(out.frames, np.log(POWER_FLOOR), 2 * np.log(cfg.fft_size)), cfg)
    return overlap_add(lps_to_spectrogram(out, spec), spec, cfg)


def _align(a, b):
    n = min(len(a), len(b))
    return Waveform(a.samples[:n], a.sample_rate), Waveform(b.samples[:n], b.sample_rate)


def evaluate(bundle, manifest, fcfg, root=None, use_gv=True, detail=None):
    """EvalReport for one model over a test manifest.

    ``detail``, when a list, receives one ``(uid, stoi, seg_snr, noisy_stoi, noisy_seg_snr)``
    tuple per utterance.
    """
    norms = (bundle.input_norm, bundle.target_norm)
    data = build_dataset(manifest, fcfg, norms=norms, root=root)
    f_mae, f_mse = eval_features(bundle.net, data.shard)
    pred = forward(bundle.net, data.shard.inputs.astype(np.float64)) * bundle.target_norm.std
    ref = data.shard.targets.astype(np.float64) * bundle.target_norm.std
    raw_mae = float(np.abs(pred - ref).sum(axis=1).mean())
    raw_mse = float(((pred - ref) ** 2).sum(axis=1).mean())
    sr = fcfg.stft.sample_rate
    rows = []
    for uid, spec in manifest.entries:
        clean, noisy = load_utterance(uid, spec, sr, root)
        enhanced = enhance_waveform(bundle, noisy, fcfg, use_gv)
        c, e = _align(clean, enhanced)
        c2, n2 = _align(clean, noisy)
        rows.append((uid, stoi(c, e, sr), seg_snr(c, e), stoi(c2, n2, sr), seg_snr(c2, n2)))
    if detail is not None:
        detail.extend(rows)
    arr = np.array([r[1:] for r in rows])
    return EvalReport(bundle.label, f_mae, f_mse, float(arr[:, 0].mean()), float(arr[:, 1].mean()),
                      len(rows), float(arr[:, 2].mean()), float(arr[:, 3].mean()), raw_mae, raw_mse)
