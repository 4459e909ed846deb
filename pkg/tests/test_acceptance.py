"""Acceptance criteria 1-10. Each test records one PASS/FAIL line, printed in the
terminal summary, with the measured values and runtime next to the tolerance."""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import central_diff
from v2vreg.cli import train_config
from v2vreg.config import resolve
from v2vreg.corpus import build_dataset, synthetic_manifest, write_wav, read_wav
from v2vreg.dsp import Waveform, apply_norm, fit_norm, invert_norm, overlap_add, stft, StftConfig, LpsSequence
from v2vreg.losses import LossKind, batch_loss
from v2vreg.network import TrainConfig, backward, forward, init_mlp, input_jacobian, layer_specs, train
from v2vreg.numerics import SeededRng
from v2vreg.pipeline import ModelBundle, evaluate, output_stats
from v2vreg.theory import (LinearBall, construct_mse_violation, lemma1_suite, lemma2_suite, lipschitz_empirical,
                           lipschitz_upper, losses_equivalence_suite, rademacher_exact, rademacher_suite,
                           theorem1_suite)

SEEDS = range(5)
KINDS = ("white", "pink", "babble")


def record(number, ok, detail, seconds, limit):
    in_time = seconds < limit
    status = "PASS" if ok and in_time else "FAIL"
    ACCEPTANCE_LINES.append(f"criterion {number}: {status}  {detail}  [{seconds:.1f}s < {limit:g}s]")
    return ok and in_time


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# -- 1, 2: lemma suites --

def test_criterion_1_lemma1():
    with Timer() as t:
        r = lemma1_suite(100_000, dims=(1, 2, 8, 64), tol=1e-12)
    assert record(1, r.trials == 100_000 and r.failures == 0,
                  f"trials={r.trials} violations={r.failures}", t.seconds, 10)


def test_criterion_2_lemma2():
    with Timer() as t:
        r = lemma2_suite(100_000)
        hand = construct_mse_violation(np.array([0.0]), np.array([1.0]))
    hand_ok = hand.lhs == 3.0 and hand.rhs == 1.0
    assert record(2, r.trials == 100_000 and r.failures == 0 and hand_ok,
                  f"trials={r.trials} non-violations={r.failures} hand lhs={hand.lhs!r} rhs={hand.rhs!r}",
                  t.seconds, 10)


# -- shared desk-scale runs for 3, 7, 8 --

@pytest.fixture(scope="module")
def desk_runs():
    t0 = time.perf_counter()
    cfg = resolve(env={})
    fcfg = cfg.feature_config()
    train_m = synthetic_manifest(200, "train", (15.0, 10.0, 5.0, 0.0), KINDS, 11)
    test_m = synthetic_manifest(40, "test", (17.5, 12.5, 7.5, 2.5), KINDS, 12)
    data = build_dataset(train_m, fcfg)
    x = data.shard.inputs.astype(np.float64)
    y = data.shard.targets.astype(np.float64)
    runs = {"mae": [], "mse": []}
    for loss in runs:
        for seed in SEEDS:
            c = cfg.with_overrides([f"train.loss={loss}", f"train.seed={seed}"])
            net, _ = train(x, y, train_config(c, y))
            bundle = ModelBundle(net, data.input_norm, data.target_norm, output_stats(net, x), loss)
            runs[loss].append((net, evaluate(bundle, test_m, fcfg)))
    return runs, x, time.perf_counter() - t0


# -- 3: noise bound on trained nets --

def test_criterion_3_theorem1(desk_runs):
    runs, x, _ = desk_runs
    with Timer() as t:
        parts, ok = [], True
        for loss in ("mae", "mse"):
            net = runs[loss][0][0]
            r = theorem1_suite(net, x, 1000)
            probes = x[np.linspace(0, x.shape[0] - 1, 200).astype(np.int64)]
            emp, up = lipschitz_empirical(net, probes).total, lipschitz_upper(net).total
            ok &= r.trials == 1000 and r.failures == 0 and emp <= up
            parts.append(f"{loss}: violations={r.failures}/{r.trials} empirical={emp:.3g}<=upper={up:.3g}")
    assert record(3, ok, "; ".join(parts), t.seconds, 300)


# -- 4: Monte-Carlo vs exact Rademacher --

def test_criterion_4_rademacher():
    with Timer() as t:
        r = rademacher_suite(200, 100_000, max_n=12, sigmas=3.0, coverage=0.99)
        closed = rademacher_exact(np.array([[1.0], [1.0]]), LinearBall(1.0, 1)).value
    agree = (r.trials - r.failures) / r.trials
    assert record(4, r.passed and closed == 0.5,
                  f"agree={agree:.3f} (>=0.99) closed-form={closed!r}", t.seconds, 120)


# -- 5: gradients --

def _rel(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / scale)


def test_criterion_5_gradients():
    worst = 0.0
    with Timer() as t:
        rng = SeededRng(55)
        for trial in range(12):
            depth = 1 + trial % 4
            dims = [2 + int(v * 15) for v in rng.uniform(depth + 1)]
            net = init_mlp(layer_specs(dims), 1000 + trial)
            for layer in net.layers:
                layer.bias[:] = 0.1 * rng.normal(layer.bias.shape[0])
            x = rng.normal(4 * dims[0]).reshape(4, dims[0])
            pred = forward(net, x)
            for loss in (LossKind.MSE, LossKind.MAE):
                if loss is LossKind.MSE:
                    y = rng.normal(pred.size).reshape(pred.shape)
                else:  # residuals kept at least 0.5 from the kink
                    sign = np.where(rng.uniform(pred.size) < 0.5, -1.0, 1.0).reshape(pred.shape)
                    y = pred + sign * (0.5 + rng.uniform(pred.size).reshape(pred.shape))
                grads = backward(net, x, y, loss)
                for k, (gw, gb) in enumerate(grads):
                    for g, p in ((gw, net.layers[k].weights), (gb, net.layers[k].bias)):
                        def f(v, p=p):
                            keep = p.copy()
                            p[...] = v
                            out = batch_loss(loss, forward(net, x), y)
                            p[...] = keep
                            return out
                        worst = max(worst, _rel(g, central_diff(f, p.copy(), h=1e-6)))
            for row in x:
                jac = input_jacobian(net, row)
                fd = np.array([central_diff(lambda z: forward(net, z)[i], row, h=1e-6) for i in range(dims[-1])])
                worst = max(worst, _rel(jac, fd))
    assert record(5, worst <= 1e-5, f"worst relative error={worst:.2e} (<=1e-5)", t.seconds, 60)


# -- 6: round trips --

def test_criterion_6_round_trips(tmp_path):
    with Timer() as t:
        rng = SeededRng(66)
        stft_err = 0.0
        for n in (16, 256, 512):
            cfg = StftConfig(8000, n)
            w = Waveform(2 * rng.uniform(40 * n) - 1, 8000)
            spec = stft(w, cfg)
            y = overlap_add(spec, spec, cfg).samples
            stft_err = max(stft_err, float(np.max(np.abs(y[n // 2:-n // 2] - w.samples[n // 2:len(y) - n // 2]))))
        x = np.clip(0.5 * rng.normal(20_000), -1, 1)
        write_wav(tmp_path / "r.wav", Waveform(x, 16000))
        wav_err = float(np.max(np.abs(read_wav(tmp_path / "r.wav").samples - x)))
        seq = LpsSequence(5 * rng.normal(1000 * 129).reshape(1000, 129) - 3, StftConfig(8000, 256))
        s = fit_norm([seq])
        norm_err = float(np.max(np.abs(invert_norm(apply_norm(seq, s), s).frames - seq.frames)))
    ok = stft_err <= 1e-10 and wav_err <= 1 / 32768 and norm_err <= 1e-12
    assert record(6, ok, f"stft={stft_err:.1e} wav={wav_err:.2e} norm={norm_err:.1e}", t.seconds, 30)


# -- 7, 8: desk-scale trends --

def _seed_mean(runs, loss, field):
    return float(np.mean([getattr(rep, field) for _, rep in runs[loss]]))


def test_criterion_7_error_trend(desk_runs):
    runs, _, seconds = desk_runs
    mae_of = {k: _seed_mean(runs, k, "mae") for k in runs}
    mse_of = {k: _seed_mean(runs, k, "mse") for k in runs}
    raw = {k: (_seed_mean(runs, k, "raw_mae"), _seed_mean(runs, k, "raw_mse")) for k in runs}
    a = mae_of["mae"] < mae_of["mse"]
    b = all(mae_of[k] < mse_of[k] for k in runs)
    detail = (f"(a) MAE-net mae={mae_of['mae']:.3f} < MSE-net mae={mae_of['mse']:.3f}: {'yes' if a else 'no'}; "
              f"(b) mae<mse per net: mae-net {mae_of['mae']:.3f}/{mse_of['mae']:.3f}, "
              f"mse-net {mae_of['mse']:.3f}/{mse_of['mse']:.3f}: {'yes' if b else 'no'} "
              f"(denormalized: mae-net {raw['mae'][0]:.1f}/{raw['mae'][1]:.1f}, "
              f"mse-net {raw['mse'][0]:.1f}/{raw['mse'][1]:.1f})")
    assert record(7, a and b, detail, seconds, 1800)


def test_criterion_8_stoi_trend(desk_runs):
    runs, _, seconds = desk_runs
    s = {k: _seed_mean(runs, k, "stoi") for k in runs}
    noisy = _seed_mean(runs, "mae", "noisy_stoi")
    ok = s["mae"] >= s["mse"] - 0.005 and all(v - noisy >= 0.01 for v in s.values())
    detail = f"stoi mae-net={s['mae']:.4f} mse-net={s['mse']:.4f} noisy={noisy:.4f}"
    assert record(8, ok, detail, seconds, 1800)


# -- 9: LD/GD equivalence --

def test_criterion_9_losses_equivalence():
    with Timer() as t:
        r = losses_equivalence_suite()
    assert record(9, r.passed, f"checks={r.trials} mismatches={r.failures}", t.seconds, 120)


# -- 10: median vs mean --

def test_criterion_10_median_mean():
    hits = {"mae": 0, "mse": 0}
    with Timer() as t:
        for seed in SEEDS:
            rng = SeededRng(100 + seed)
            n = 20_000
            x = np.ones((n, 1))
            y = np.where(rng.uniform(n) < 0.25, 4.0, 0.0)[:, None]
            for loss, ref in (("mae", np.median(y)), ("mse", y.mean())):
                net, _ = train(x, y, TrainConfig(loss=loss, seed=seed))
                hits[loss] += abs(forward(net, [1.0])[0] - ref) < 0.2
    ok = hits["mae"] == 5 and hits["mse"] == 5
    assert record(10, ok, f"near median {hits['mae']}/5, near mean {hits['mse']}/5", t.seconds, 60)
