"""Command-line entry point: ``v2vreg {synth,features,train,enhance,eval,verify}``.

Exit codes: 0 success, 1 validation or contract failure (including a claim
that does not hold), 2 internal error. Files are written under a ``.partial``
name and renamed once complete.
"""
import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from .corpus import (build_dataset, load_shard, load_stats, read_manifest, read_wav, save_shard, save_stats,
                     synth_utterance, synthetic_manifest, write_wav)
from .dsp import PROFILES, Waveform
from .errors import ContractViolation, DivergedTraining
from .losses import LossKind, alpha_from_targets
from .metrics import EvalReport
from .network import TrainConfig, load_model, save_model, train
from .pipeline import ModelBundle, enhance_waveform, evaluate, output_stats
from .theory import (LinearBall, bound_report, digest, lemma1_suite, lemma2_suite, lipschitz_empirical,
                     lipschitz_upper, losses_equivalence_suite, rademacher_exact, rademacher_suite,
                     theorem1_suite)

log = logging.getLogger("v2vreg")

CLAIMS = ("lemma1", "lemma2", "theorem1", "rademacher", "losses-equivalence")
CONFIG_ECHO = "config.txt"
LIPSCHITZ_PROBES = 200


@dataclass
class CommandOutcome:
    code: int = 0
    artifacts: list = field(default_factory=list)


def _write_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def _outdir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo(cfg, out, outcome):
    outcome.artifacts.append(_write_text(Path(out) / CONFIG_ECHO, cfg.to_text()))


def _test_seed(cfg):
    return cfg["data.seed"] + 1


def manifests(cfg):
    """(train, test) synthetic manifests described by ``cfg``."""
    kinds = cfg["data.noise_kinds"]
    tr = synthetic_manifest(cfg["data.n_train"], "train", cfg["data.snr_list"], kinds, cfg["data.seed"],
                            cfg.profile)
    te = synthetic_manifest(cfg["data.n_test"], "test", cfg["data.test_snr_list"], kinds, _test_seed(cfg),
                            cfg.profile)
    return tr, te


def train_config(cfg, targets):
    loss = LossKind(cfg["train.loss"])
    alpha = None
    if loss.needs_alpha:
        q = targets.shape[1]
        alpha = alpha_from_targets(targets) if cfg["alpha.source"] == "target_std" else np.ones(q)
    return TrainConfig(loss=loss, learning_rate=cfg["train.lr"], momentum=cfg["train.momentum"],
                       max_epochs=cfg["train.max_epochs"], validation_fraction=cfg["train.validation"],
                       batch_size=cfg["train.batch"], seed=cfg["train.seed"], patience=cfg["train.patience"],
                       hidden=cfg["net.hidden"], alpha=alpha)


def load_bundle(model_dir):
    d = Path(model_dir)
    if not (d / "model.v2vm").exists():
        raise FileNotFoundError(f"no model.v2vm in {d}")
    produced = load_stats(d / "produced.v2vs") if (d / "produced.v2vs").exists() else None
    return ModelBundle(load_model(d / "model.v2vm"), load_stats(d / "input_norm.v2vs"),
                       load_stats(d / "target_norm.v2vs"), produced, d.resolve().name)


def _check_widths(net, fcfg):
    if net.input_dim != fcfg.d_in or net.output_dim != fcfg.d_out:
        raise ContractViolation(f"model is {net.input_dim}->{net.output_dim} but the configured features are "
                                f"{fcfg.d_in}->{fcfg.d_out}")


# -- commands ----------------------------------------------------------------

def cmd_synth(cfg, out):
    outcome = CommandOutcome()
    out = _outdir(out)
    sr = PROFILES[cfg.profile].sample_rate
    for m in manifests(cfg):
        d = _outdir(out / m.split)
        _outdir(d / "clean")
        _outdir(d / "noisy")
        for uid, spec in m.entries:
            clean, noisy = synth_utterance(spec, sr, d, uid)
            write_wav(d / "clean" / f"{uid}.wav", clean)
            write_wav(d / "noisy" / f"{uid}.wav", noisy)
        outcome.artifacts.append(_write_text(d / "manifest.tsv", m.to_text()))
        log.info("%s: %d utterances, manifest %s", m.split, len(m.entries), m.digest()[:16])
    _echo(cfg, out, outcome)
    return outcome


def _corpus_manifest(corpus, split, cfg):
    m = read_manifest(Path(corpus) / split / "manifest.tsv")
    if m.profile != cfg.profile:
        raise ContractViolation(f"corpus was synthesized for profile {m.profile!r}, config says {cfg.profile!r}")
    return m


def cmd_features(cfg, corpus, out):
    outcome = CommandOutcome()
    out = _outdir(out)
    fcfg = cfg.feature_config()
    corpus = Path(corpus)
    data = build_dataset(_corpus_manifest(corpus, "train", cfg), fcfg, root=corpus / "train")
    save_shard(out / "train.v2vf", data.shard)
    save_stats(out / "input_norm.v2vs", data.input_norm)
    save_stats(out / "target_norm.v2vs", data.target_norm)
    outcome.artifacts += [out / "train.v2vf", out / "input_norm.v2vs", out / "target_norm.v2vs"]
    log.info("train shard: %d frames x %d -> %d", *data.shard.inputs.shape, data.shard.targets.shape[1])
    if (corpus / "test" / "manifest.tsv").exists():
        test = build_dataset(_corpus_manifest(corpus, "test", cfg), fcfg,
                             norms=(data.input_norm, data.target_norm), root=corpus / "test")
        save_shard(out / "test.v2vf", test.shard)
        outcome.artifacts.append(out / "test.v2vf")
    _echo(cfg, out, outcome)
    return outcome


def cmd_train(cfg, shard_path, out):
    outcome = CommandOutcome()
    shard_path = Path(shard_path)
    shard = load_shard(shard_path)
    in_norm = load_stats(shard_path.parent / "input_norm.v2vs")
    tgt_norm = load_stats(shard_path.parent / "target_norm.v2vs")
    fcfg = cfg.feature_config()
    if shard.inputs.shape[1] != fcfg.d_in or shard.targets.shape[1] != fcfg.d_out:
        raise ContractViolation(f"shard is {shard.inputs.shape[1]}->{shard.targets.shape[1]} but the configured "
                                f"features are {fcfg.d_in}->{fcfg.d_out}")
    x = shard.inputs.astype(np.float64)
    y = shard.targets.astype(np.float64)
    tcfg = train_config(cfg, y)
    log.info("training %s on %d frames, hidden %s", tcfg.loss.value, x.shape[0], tcfg.hidden)
    net, tlog = train(x, y, tcfg)
    out = _outdir(out)
    save_model(out / "model.v2vm", net)
    save_stats(out / "input_norm.v2vs", in_norm)
    save_stats(out / "target_norm.v2vs", tgt_norm)
    save_stats(out / "produced.v2vs", output_stats(net, x))
    _write_text(out / "trainlog.tsv", tlog.to_tsv(timing=False))
    outcome.artifacts += [out / n for n in ("model.v2vm", "input_norm.v2vs", "target_norm.v2vs",
                                            "produced.v2vs", "trainlog.tsv")]
    log.info("best epoch %d, val %.4f (%s)", tlog.best_epoch + 1, min(tlog.val_loss), tlog.stop_reason.value)
    _echo(cfg, out, outcome)
    return outcome


def cmd_enhance(cfg, model_dir, noisy_wav, out_wav):
    outcome = CommandOutcome()
    bundle = load_bundle(model_dir)
    fcfg = cfg.feature_config()
    _check_widths(bundle.net, fcfg)
    noisy = read_wav(noisy_wav)
    enhanced = enhance_waveform(bundle, noisy, fcfg, cfg["gv.enabled"] == "on")
    peak = float(np.max(np.abs(enhanced.samples)))
    if peak > 1.0:
        log.warning("enhanced peak %.3f clipped to full scale", peak)
    out_wav = Path(out_wav)
    out_wav.parent.mkdir(parents=True, exist_ok=True)
    write_wav(out_wav, Waveform(np.clip(enhanced.samples, -1.0, 1.0), enhanced.sample_rate))
    outcome.artifacts.append(out_wav)
    outcome.artifacts.append(_write_text(out_wav.with_name(out_wav.name + ".config.txt"), cfg.to_text()))
    return outcome


def cmd_eval(cfg, model_dirs, corpus, out):
    outcome = CommandOutcome()
    corpus = Path(corpus)
    manifest = _corpus_manifest(corpus, "test", cfg)
    fcfg = cfg.feature_config()
    lines = ["# mae/mse: normalized LPS (primary); raw_mae/raw_mse: denormalized LPS", EvalReport.header()]
    details = {}
    for d in model_dirs:
        bundle = load_bundle(d)
        _check_widths(bundle.net, fcfg)
        rows = []
        rep = evaluate(bundle, manifest, fcfg, root=corpus / "test", use_gv=cfg["gv.enabled"] == "on",
                       detail=rows)
        lines.append(rep.to_line())
        details[bundle.label] = rows
        print(rep.to_line())
    out = _outdir(out)
    outcome.artifacts.append(_write_text(out / "eval.tsv", "\n".join(lines) + "\n"))
    for label, rows in details.items():
        body = ["uid\tstoi\tseg_snr_db\tnoisy_stoi\tnoisy_seg_snr_db"]
        body += ["\t".join([r[0]] + [repr(float(v)) for v in r[1:]]) for r in rows]
        outcome.artifacts.append(_write_text(out / f"detail_{label}.tsv", "\n".join(body) + "\n"))
    _echo(cfg, out, outcome)
    return outcome


def theorem1_nets(cfg):
    """Freshly trained (label, net, inputs) triples, one per loss, on a small synthetic corpus."""
    fcfg = cfg.feature_config()
    m = synthetic_manifest(cfg["verify.theorem1_utterances"], "train", cfg["data.snr_list"],
                           cfg["data.noise_kinds"], cfg["data.seed"], cfg.profile)
    data = build_dataset(m, fcfg)
    x = data.shard.inputs.astype(np.float64)
    y = data.shard.targets.astype(np.float64)
    nets = []
    for loss in ("mae", "mse"):
        c = cfg.with_overrides([f"train.loss={loss}", f"train.max_epochs={cfg['verify.theorem1_epochs']}"])
        net, _ = train(x, y, train_config(c, y))
        nets.append((loss, net, x))
    return nets


def verify_claim(cfg, claim, model_dir=None, shard=None):
    """(SuiteResult-or-TheoryReport, ...) for one claim."""
    if claim == "lemma1":
        return [lemma1_suite(cfg["verify.lemma_trials"])]
    if claim == "lemma2":
        return [lemma2_suite(cfg["verify.lemma_trials"])]
    if claim == "rademacher":
        closed = rademacher_exact(np.array([[1.0], [1.0]]), LinearBall(1.0, 1))
        exact = bound_report("rademacher-closed-form", "N=2,x=[1],B=1", abs(closed.value - 0.5), 0.0)
        return [rademacher_suite(cfg["verify.rademacher_instances"], cfg["verify.rademacher_draws"]), exact]
    if claim == "losses-equivalence":
        return [losses_equivalence_suite()]
    if claim == "theorem1":
        if model_dir is not None:
            if shard is None:
                raise ContractViolation("theorem1 on a saved model needs --shard for the probe inputs")
            nets = [(Path(model_dir).name, load_bundle(model_dir).net,
                     load_shard(shard).inputs.astype(np.float64))]
        else:
            nets = theorem1_nets(cfg)
        out = []
        for label, net, x in nets:
            out.append(theorem1_suite(net, x, cfg["verify.theorem1_trials"]))
            probes = x[np.linspace(0, x.shape[0] - 1, min(LIPSCHITZ_PROBES, x.shape[0])).astype(np.int64)]
            emp = lipschitz_empirical(net, probes)
            up = lipschitz_upper(net)
            out.append(bound_report(f"lipschitz-order[{label}]", digest(probes[:1]), emp.total, up.total))
        return out
    raise ContractViolation(f"unknown claim {claim!r}; expected one of {', '.join(CLAIMS)} or all")


def _passed(r):
    return r.passed if hasattr(r, "passed") else r.holds


def cmd_verify(cfg, claim, out=None, model_dir=None, shard=None):
    claims = CLAIMS if claim == "all" else (claim,)
    results = []
    for c in claims:
        results += verify_claim(cfg, c, model_dir, shard)
    lines = [r.to_line() for r in results]
    for line in lines:
        print(line)
    outcome = CommandOutcome(0 if all(_passed(r) for r in results) else 1)
    if out is not None:
        out = _outdir(out)
        outcome.artifacts.append(_write_text(out / "verify.tsv", "\n".join(lines) + "\n"))
        _echo(cfg, out, outcome)
    return outcome


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="key = value config file")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="overrides train.seed and data.seed")
    g.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only warnings on stderr")
    g.add_argument("--set", metavar="KEY=VALUE", action="append", default=argparse.SUPPRESS,
                   help="config override, repeatable")

    p = _Parser(prog="v2vreg", parents=[common],
                description="Vector-to-vector regression for speech enhancement: MAE vs MSE.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("synth", parents=[common], help="synthesize train/test WAVs and manifests")
    s = sub.add_parser("features", parents=[common], help="build feature shards and stats from a corpus")
    s.add_argument("corpus")
    s = sub.add_parser("train", parents=[common], help="train a model on a feature shard")
    s.add_argument("shard")
    s = sub.add_parser("enhance", parents=[common], help="enhance one noisy WAV")
    s.add_argument("model")
    s.add_argument("noisy_wav")
    s.add_argument("out_wav")
    s = sub.add_parser("eval", parents=[common], help="evaluate models on a corpus test split")
    s.add_argument("models", nargs="+", metavar="model")
    s.add_argument("corpus")
    s = sub.add_parser("verify", parents=[common], help="run a theory claim suite")
    s.add_argument("claim", choices=CLAIMS + ("all",))
    s.add_argument("--model", default=None, help="check theorem1 on a saved model instead of fresh ones")
    s.add_argument("--shard", default=None, help="probe inputs for --model")
    return p


DEFAULT_OUT = {"synth": "corpus", "features": "features", "train": "model", "eval": "eval"}


def run(ns):
    overrides = list(getattr(ns, "set", []) or [])
    if hasattr(ns, "seed"):
        overrides += [f"train.seed={ns.seed}", f"data.seed={ns.seed}"]
    text = Path(ns.config).read_text(encoding="utf-8") if hasattr(ns, "config") else None
    cfg = config_mod.resolve(text, overrides)
    out = getattr(ns, "out", DEFAULT_OUT.get(ns.command))
    if ns.command == "synth":
        return cmd_synth(cfg, out)
    if ns.command == "features":
        return cmd_features(cfg, ns.corpus, out)
    if ns.command == "train":
        return cmd_train(cfg, ns.shard, out)
    if ns.command == "enhance":
        return cmd_enhance(cfg, ns.model, ns.noisy_wav, ns.out_wav)
    if ns.command == "eval":
        return cmd_eval(cfg, ns.models, ns.corpus, out)
    return cmd_verify(cfg, ns.claim, out, ns.model, ns.shard)


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(ns, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        outcome = run(ns)
    except (ContractViolation, DivergedTraining, ValueError, OSError) as exc:
        print(f"v2vreg: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is a bug
        log.exception("internal error")
        print(f"v2vreg: internal error: {exc}", file=sys.stderr)
        return 2
    for path in outcome.artifacts:
        log.info("wrote %s", path)
    return outcome.code


if __name__ == "__main__":
    sys.exit(main())
