import json
import math
from dataclasses import asdict, dataclass, fields

from ..exceptions import InvalidArgumentError


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``n_slots``, ``slot_dim``, ``feat_dim``, ``iters``, ``sigma``, ``canvas``,
    ``teacher_channels`` and ``teacher_grid`` are the model-level knobs; the
    remaining widths size the individual networks.
    """

    n_slots: int = 3
    slot_dim: int = 128
    feat_dim: int = 192
    iters: int = 3
    sigma: float = math.sqrt(2) / 2
    canvas: int = 80
    teacher_channels: int = 1024
    teacher_grid: int = 16
    backbone_channels: int = 192
    decoder_hidden: int = 1024
    teacher_widths: tuple = (64, 128, 256)
    slot_mlp: bool = False
    slot_mlp_hidden: int = 256
    layer_norm: bool = True

    def __post_init__(self):
        if self.n_slots < 1:
            raise InvalidArgumentError("n_slots must be >= 1")
        if self.iters < 1:
            raise InvalidArgumentError("iters must be >= 1")
        if not self.sigma > 0:
            raise InvalidArgumentError("sigma must be > 0")
        if self.canvas % 2:
            raise InvalidArgumentError("canvas must be even")
        self.teacher_widths = tuple(self.teacher_widths)

    @property
    def grid(self):
        """Backbone feature grid side."""
        return self.canvas // 2

    def to_dict(self):
        d = asdict(self)
        d["teacher_widths"] = list(self.teacher_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


PAPER_MODEL = ModelConfig()

DESK_MODEL = ModelConfig(
    canvas=40,
    feat_dim=64,
    backbone_channels=32,
    decoder_hidden=128,
    teacher_channels=128,
    teacher_grid=10,
    teacher_widths=(32, 64, 128),
)

TINY_MODEL = ModelConfig(
    n_slots=2,
    slot_dim=8,
    feat_dim=8,
    iters=2,
    canvas=16,
    teacher_channels=4,
    teacher_grid=4,
    backbone_channels=4,
    decoder_hidden=8,
    teacher_widths=(4, 4, 4),
)
