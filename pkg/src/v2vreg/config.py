"""Run configuration: flat ``key = value`` text with ``#`` comments.

Defaults come from the selected profile; a config file and then command-line
``key=value`` overrides are layered on top. Every value is validated when it
is parsed, and unknown keys are rejected.
"""
import os
from dataclasses import dataclass

from .corpus import FeatureConfig, NoiseKind
from .dsp import PROFILES
from .errors import ContractViolation
from .losses import LossKind

PROFILE_ENV = "V2V_PROFILE"


def _choice(*allowed):
    def parse(v):
        if v not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return v
    return parse


def _switch(v):
    if v in ("on", "true", "1", "yes"):
        return "on"
    if v in ("off", "false", "0", "no"):
        return "off"
    raise ValueError("expected on or off")


def _positive(kind):
    def parse(v):
        x = kind(v)
        if not x > 0:
            raise ValueError("must be > 0")
        return x
    return parse


def _nonneg_int(v):
    x = int(v)
    if x < 0:
        raise ValueError("must be >= 0")
    return x


def _fraction(v):
    x = float(v)
    if not 0 < x < 1:
        raise ValueError("must be in (0, 1)")
    return x


def _momentum(v):
    x = float(v)
    if not 0 <= x < 1:
        raise ValueError("must be in [0, 1)")
    return x


def _floats(v):
    out = tuple(float(s) for s in v.split(",") if s.strip())
    if not out:
        raise ValueError("need at least one value")
    return out


def _dims(v):
    if v.strip() in ("", "none"):
        return ()
    out = tuple(int(s) for s in v.split(","))
    if any(h < 1 for h in out):
        raise ValueError("layer widths must be >= 1")
    return out


def _kinds(v):
    out = tuple(NoiseKind(s.strip()).value for s in v.split(",") if s.strip())
    if not out:
        raise ValueError("need at least one noise kind")
    return out


PARSERS = {
    "stft.profile": _choice(*PROFILES),
    "train.loss": _choice(*(k.value for k in LossKind)),
    "train.lr": _positive(float),
    "train.momentum": _momentum,
    "train.max_epochs": _positive(int),
    "train.batch": _positive(int),
    "train.seed": _nonneg_int,
    "train.patience": _positive(int),
    "train.validation": _fraction,
    "net.hidden": _dims,
    "data.n_train": _positive(int),
    "data.n_test": _positive(int),
    "data.snr_list": _floats,
    "data.test_snr_list": _floats,
    "data.noise_kinds": _kinds,
    "data.seed": _nonneg_int,
    "features.context": _positive(int),
    "features.nat": _switch,
    "features.nat_frames": _positive(int),
    "features.norm": _choice("global", "utterance"),
    "alpha.source": _choice("target_std", "unit"),
    "gv.enabled": _switch,
    "verify.lemma_trials": _positive(int),
    "verify.theorem1_trials": _positive(int),
    "verify.theorem1_utterances": _positive(int),
    "verify.theorem1_epochs": _positive(int),
    "verify.rademacher_instances": _positive(int),
    "verify.rademacher_draws": _positive(int),
}

_COMMON = {
    "train.loss": "mae",
    "train.lr": "1e-3",
    "train.momentum": "0.4",
    "train.max_epochs": "20",
    "train.seed": "0",
    "train.validation": "0.1",
    "data.n_train": "200",
    "data.n_test": "40",
    "data.snr_list": "0,5,10,15",
    "data.test_snr_list": "2.5,7.5,12.5,17.5",
    "data.noise_kinds": "white,pink,babble",
    "data.seed": "11",
    "features.context": "3",
    "features.nat": "off",
    "features.nat_frames": "6",
    "features.norm": "global",
    "alpha.source": "target_std",
    "gv.enabled": "on",
    "verify.lemma_trials": "100000",
    "verify.theorem1_trials": "1000",
    "verify.theorem1_utterances": "40",
    "verify.theorem1_epochs": "5",
    "verify.rademacher_instances": "200",
    "verify.rademacher_draws": "100000",
}

# desk runs the full epoch budget in smaller batches; see the README
PROFILE_DEFAULTS = {
    "desk": {"net.hidden": "128,128", "train.batch": "32", "train.patience": "20"},
    "paper": {"net.hidden": "800,800,800,800,800,1600", "train.batch": "128", "train.patience": "1"},
}


def _format(v):
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def profile(self):
        return self.values["stft.profile"]

    def to_text(self):
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in sorted(self.values))

    def feature_config(self):
        v = self.values
        return FeatureConfig(PROFILES[self.profile], v["features.context"], v["features.nat"] == "on",
                             v["features.nat_frames"], v["features.norm"] == "utterance")

    def with_overrides(self, pairs):
        return resolve(self.to_text(), pairs)


def parse_pairs(text, source="config"):
    """``key = value`` lines to a dict of raw strings; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"{source} line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in PARSERS:
            raise ContractViolation(f"{source} line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def parse_override(arg):
    if "=" not in arg:
        raise ContractViolation(f"override {arg!r} is not key=value")
    key, value = (s.strip() for s in arg.split("=", 1))
    if key not in PARSERS:
        raise ContractViolation(f"unknown key {key!r}")
    return key, value


def resolve(file_text=None, overrides=(), env=None):
    """Defaults for the profile, then the file, then overrides.

    The profile is taken from the overrides, else the file, else ``V2V_PROFILE``
    (consulted only when there is no file), else ``desk``.
    """
    env = os.environ if env is None else env
    from_file = parse_pairs(file_text) if file_text is not None else {}
    from_cli = dict(parse_override(a) for a in overrides)
    profile = from_cli.get("stft.profile") or from_file.get("stft.profile")
    if profile is None:
        profile = env.get(PROFILE_ENV, "desk") if file_text is None else "desk"
    raw = dict(_COMMON)
    raw["stft.profile"] = profile
    if profile in PROFILE_DEFAULTS:
        raw.update(PROFILE_DEFAULTS[profile])
    raw.update(from_file)
    raw.update(from_cli)
    values = {}
    for key, text in raw.items():
        try:
            values[key] = PARSERS[key](text)
        except ValueError as exc:
            raise ContractViolation(f"bad value for {key}: {text!r} ({exc})") from exc
    return RunConfig(values)
