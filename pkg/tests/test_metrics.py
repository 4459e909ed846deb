import numpy as np
import pytest
from scipy.signal import resample_poly
from hypothesis import given
from hypothesis import strategies as st

from v2vreg.corpus import FeatureShard, make_noise, mix_at_snr, synth_clean
from v2vreg.dsp import Waveform
from v2vreg.errors import ContractViolation
from v2vreg.losses import mae, mse
from v2vreg.metrics import EvalReport, eval_features, seg_snr, stoi, thirdoct_matrix
from v2vreg.network import Activation, Layer, Mlp, forward, init_mlp, layer_specs
from v2vreg.numerics import SeededRng

try:
    import pystoi
except ImportError:  # reference implementation is a test-only extra
    pystoi = None
needs_pystoi = pytest.mark.skipif(pystoi is None, reason="pystoi not installed")


def linear_model(w, b):
    return Mlp([Layer(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64), Activation.LINEAR)])


# -- feature-domain errors --

def test_eval_perfect_predictor():
    rng = SeededRng(1)
    x = rng.normal(40 * 3).reshape(40, 3)
    w = rng.normal(6).reshape(2, 3)
    model = linear_model(w, np.zeros(2))
    y = forward(model, x.astype(np.float32).astype(np.float64))
    a, s = eval_features(model, FeatureShard(x, y))
    assert a <= 1e-5 and s <= 1e-10


def test_eval_zero_model_on_standardized_targets():
    rng = SeededRng(2)
    y = rng.normal(20000 * 4).reshape(20000, 4)
    model = linear_model(np.zeros((4, 2)), np.zeros(4))
    _, s = eval_features(model, FeatureShard(np.ones((20000, 2)), y))
    assert s == pytest.approx(4.0, rel=0.05)


def test_eval_matches_losses():
    rng = SeededRng(3)
    model = init_mlp(layer_specs([6, 5, 3]), 3)
    shard = FeatureShard(rng.normal(30 * 6).reshape(30, 6), rng.normal(30 * 3).reshape(30, 3))
    pred = forward(model, shard.inputs.astype(np.float64))
    y = shard.targets.astype(np.float64)
    a, s = eval_features(model, shard)
    assert abs(a - mae(pred, y)) <= 1e-12 and abs(s - mse(pred, y)) <= 1e-12


@given(st.integers(0, 2**32), st.integers(1, 30))
def test_eval_cauchy_schwarz(seed, n):
    # per-sample |e|_1 <= sqrt(d) |e|_2, so mae^2 <= d * mse after Jensen
    rng = SeededRng(seed)
    model = init_mlp(layer_specs([4, 3, 5]), seed)
    shard = FeatureShard(rng.normal(n * 4).reshape(n, 4), rng.normal(n * 5).reshape(n, 5))
    a, s = eval_features(model, shard)
    assert a >= 0 and s >= 0
    assert a * a <= 5 * s * (1 + 1e-9)


def test_eval_width_mismatch():
    with pytest.raises(ContractViolation):
        eval_features(linear_model(np.zeros((2, 3)), np.zeros(2)), FeatureShard(np.zeros((1, 4)), np.zeros((1, 2))))


def test_report_line():
    r = EvalReport("mae", 0.5, 0.25, 0.9, 7.0, 40)
    fields = r.to_line().split("\t")
    assert fields[:6] == ["mae", "0.5", "0.25", "0.9", "7.0", "40"]
    assert len(fields) == len(EvalReport.header().split("\t"))


# -- STOI --

@pytest.fixture(scope="module")
def clean16():
    return synth_clean(3.0, 16000, 31)


def test_thirdoct_shape():
    obm = thirdoct_matrix()
    assert obm.shape == (15, 257)
    assert np.all(obm.sum(axis=0) <= 1)


def test_stoi_identity(clean16):
    assert stoi(clean16, clean16, 16000) == pytest.approx(1.0, abs=1e-9)


def test_stoi_scale_invariant(clean16):
    half = Waveform(0.5 * clean16.samples, 16000)
    assert stoi(clean16, half, 16000) == pytest.approx(1.0, abs=1e-9)


def test_stoi_monotone_in_snr():
    inversions = 0
    for seed in range(20):
        clean = synth_clean(2.0, 8000, 100 + seed)
        noise = make_noise("white", len(clean), 8000, 200 + seed)
        scores = [stoi(clean, mix_at_snr(clean, noise, snr), 8000) for snr in (-5, 0, 5, 10, 20)]
        inversions += sum(b < a for a, b in zip(scores, scores[1:]))
    assert inversions <= 1


@needs_pystoi
@pytest.mark.parametrize("snr", [-5.0, 0.0, 10.0])
@pytest.mark.parametrize("kind", ["white", "babble"])
def test_stoi_matches_reference_at_10k(kind, snr):
    # synthesis only supports the corpus rates, so build at 16 kHz and resample
    c16 = synth_clean(3.0, 16000, 41)
    noisy16 = mix_at_snr(c16, make_noise(kind, len(c16), 16000, 42), snr)
    c = resample_poly(c16.samples, 5, 8)
    n = resample_poly(noisy16.samples, 5, 8)
    ref = pystoi.stoi(c, n, 10000, extended=False)
    assert stoi(c, n, 10000) == pytest.approx(ref, abs=1e-6)


@needs_pystoi
def test_stoi_matches_reference_with_resampling(clean16):
    noisy = mix_at_snr(clean16, make_noise("pink", len(clean16), 16000, 5), 3.0)
    ref = pystoi.stoi(clean16.samples, noisy.samples, 16000, extended=False)
    # both sides resample to 10 kHz, with different filters
    assert stoi(clean16, noisy, 16000) == pytest.approx(ref, abs=1e-3)


def test_stoi_errors(clean16):
    with pytest.raises(ContractViolation):
        stoi(clean16, Waveform(clean16.samples[:-1], 16000), 16000)
    with pytest.raises(ContractViolation):
        stoi(clean16, clean16, 22050)
    short = np.ones(1000)
    with pytest.raises(ContractViolation):
        stoi(short, short, 16000)


# -- segmental SNR --

def test_seg_snr_hand_computed():
    # two active frames: error energies 1/10 and 1/1000 of signal -> 10 and 30 dB
    c = np.ones(128)
    e = np.concatenate([np.full(64, np.sqrt(0.1)), np.full(64, np.sqrt(0.001))])
    assert seg_snr(c, c - e, frame=64) == pytest.approx(20.0, abs=1e-9)


def test_seg_snr_clamps():
    c = np.ones(256)
    assert seg_snr(c, c, frame=64) == 35.0
    assert seg_snr(c, -100 * c, frame=64) == -10.0


def test_seg_snr_ignores_silent_frames_and_tail():
    c = np.concatenate([np.ones(64), np.zeros(64), np.ones(30)])
    p = c.copy()
    p[64:128] = 5.0  # garbage in the silent frame is not scored
    p[:64] -= np.sqrt(0.1)
    assert seg_snr(c, p, frame=64) == pytest.approx(10.0, abs=1e-9)


def test_seg_snr_errors():
    with pytest.raises(ContractViolation):
        seg_snr(np.ones(100), np.ones(99))
    with pytest.raises(ContractViolation):
        seg_snr(np.ones(100), np.ones(100), frame=32)
    with pytest.raises(ContractViolation):
        seg_snr(np.zeros(512), np.zeros(512))
    with pytest.raises(ContractViolation):
        seg_snr(np.ones(50), np.ones(50), frame=64)
