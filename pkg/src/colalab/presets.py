"""Named bundles of corpus, model, trainer and eval settings."""

import copy
from dataclasses import asdict

from .exceptions import InvalidArgumentError
from .glyphsynth.corpus import CorpusConfig
from .model.config import DESK_MODEL, PAPER_MODEL
from .trainer import TrainConfig

DESK_TRAIN = TrainConfig(
    total_steps=2500,
    warmup_steps=250,
    halve_every_steps=1250,
    lr_backbone_peak=3e-4,
    lr_decoder_peak=9e-4,
    teacher_steps=1500,
    teacher_batch_size=32,
)

# learning-rate settings used with the full-size datasets; total length is open-ended
PAPER_TRAIN = TrainConfig(
    total_steps=1_000_000,
    warmup_steps=30_000,
    halve_every_steps=250_000,
    lr_backbone_peak=1e-4,
    lr_decoder_peak=3e-4,
    teacher_steps=1500,
    teacher_batch_size=8,
)

EVAL_DEFAULTS = {"trials": 3, "n_templates": 10, "sampled": False, "batch_size": 32, "k": 10}

PRESETS = {
    "desk": {"corpus": CorpusConfig(), "model": DESK_MODEL, "train": DESK_TRAIN},
    "paper-scale": {"corpus": CorpusConfig(), "model": PAPER_MODEL, "train": PAPER_TRAIN},
}


def preset(name):
    """A deep copy of the named preset as plain dictionaries."""
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    corpus = asdict(p["corpus"])
    corpus["splits"] = list(corpus["splits"])
    return {
        "preset": name,
        "corpus": corpus,
        "model": p["model"].to_dict(),
        "train": p["train"].to_dict(),
        "eval": copy.deepcopy(EVAL_DEFAULTS),
    }
