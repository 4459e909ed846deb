import pytest

from v2vreg.config import PARSERS, resolve
from v2vreg.errors import ContractViolation


def test_desk_defaults():
    cfg = resolve(env={})
    assert cfg.profile == "desk"
    assert cfg["net.hidden"] == (128, 128) and cfg["train.batch"] == 32
    assert cfg["train.lr"] == 1e-3 and cfg["train.momentum"] == 0.4
    assert cfg["data.snr_list"] == (0.0, 5.0, 10.0, 15.0)
    fc = cfg.feature_config()
    assert (fc.d_in, fc.d_out) == (387, 129)


def test_paper_profile():
    cfg = resolve(overrides=["stft.profile=paper"], env={})
    assert cfg["net.hidden"] == (800,) * 5 + (1600,)
    assert cfg["train.batch"] == 128
    assert cfg.feature_config().d_in == 771


def test_file_parsing_and_comments():
    text = "# a run\ntrain.loss = mse   # squared\n\nnet.hidden = 16\nfeatures.nat = on\n"
    cfg = resolve(text, env={})
    assert cfg["train.loss"] == "mse" and cfg["net.hidden"] == (16,)
    assert cfg.feature_config().d_in == 4 * 129


def test_overrides_beat_file():
    cfg = resolve("train.lr = 0.1\n", ["train.lr=0.5"], env={})
    assert cfg["train.lr"] == 0.5


def test_profile_precedence():
    env = {"V2V_PROFILE": "paper"}
    assert resolve(env=env).profile == "paper"
    # a config file without a profile pins the default; the env var is ignored
    assert resolve("train.loss = mse\n", env=env).profile == "desk"
    assert resolve("stft.profile = paper\n", env={}).profile == "paper"
    assert resolve("stft.profile = paper\n", ["stft.profile=desk"], env={}).profile == "desk"


@pytest.mark.parametrize("text", ["bogus.key = 1\n", "train.loss mae\n", "train.loss = huber\n",
                                  "train.lr = -1\n", "train.momentum = 1\n", "net.hidden = 8,0\n",
                                  "data.noise_kinds = purple\n", "train.validation = 1.5\n"])
def test_rejected(text):
    with pytest.raises(ContractViolation):
        resolve(text, env={})


def test_bad_override():
    with pytest.raises(ContractViolation):
        resolve(overrides=["nokey"], env={})
    with pytest.raises(ContractViolation):
        resolve(overrides=["x.y=1"], env={})


def test_echo_round_trip():
    cfg = resolve("train.loss = ld\ndata.snr_list = 0\n", ["net.hidden=none"], env={})
    again = resolve(cfg.to_text(), env={})
    assert again == cfg
    assert set(cfg.values) == set(PARSERS)
    assert cfg["net.hidden"] == ()
