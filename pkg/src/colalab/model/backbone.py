import torch
import torch.nn.functional as F
from torch import nn

from ..exceptions import ShapeError


def cartesian_grid(size, device=None, dtype=None):
    """``(size*size, 4)`` coordinates ``[x, y, 1-x, 1-y]`` over a square grid."""
    ticks = torch.linspace(0.0, 1.0, size, device=device, dtype=dtype)
    yy, xx = torch.meshgrid(ticks, ticks, indexing="ij")
    grid = torch.stack([xx, yy, 1 - xx, 1 - yy], dim=-1)
    return grid.reshape(size * size, 4)


def fit_canvas(images, canvas):
    """Average-pool square images down to ``canvas`` when the side is an integer multiple."""
    side = images.shape[-1]
    if side == canvas or side % canvas or images.shape[-2] != side:
        return images
    return F.avg_pool2d(images, side // canvas)


class CartesianPositionEmbedding(nn.Module):
    """Adds a linear projection of the 4-channel Cartesian grid."""

    def __init__(self, channels, size):
        super().__init__()
        self.size = size
        self.proj = nn.Linear(4, channels)

    def forward(self, x):
        grid = cartesian_grid(self.size, x.device, x.dtype)
        return x + self.proj(grid)


class Backbone(nn.Module):
    """Conv stack + positional embedding + LayerNorm + two-layer MLP.

    Maps ``(B, canvas, canvas)`` images to features ``(B, M, feat_dim)`` with
    ``M = (canvas/2)**2``. Larger inputs whose side is a multiple of
    ``canvas`` are average-pooled first.
    """

    def __init__(self, config):
        super().__init__()
        c = config.backbone_channels
        self.canvas = config.canvas
        self.grid = config.grid
        self.convs = nn.Sequential(
            nn.Conv2d(1, c, 5, stride=2, padding=2), nn.ReLU(),
            nn.Conv2d(c, c, 5, stride=1, padding=2), nn.ReLU(),
            nn.Conv2d(c, c, 5, stride=1, padding=2), nn.ReLU(),
            nn.Conv2d(c, c, 5, stride=1, padding=2),
        )
        self.position = CartesianPositionEmbedding(c, self.grid)
        self.norm = nn.LayerNorm(c) if config.layer_norm else nn.Identity()
        self.mlp = nn.Sequential(
            nn.Linear(c, config.feat_dim), nn.ReLU(), nn.Linear(config.feat_dim, config.feat_dim)
        )

    def forward(self, images):
        if images.dim() == 2:
            images = images[None]
        if images.dim() == 3:
            images = images[:, None]
        images = fit_canvas(images, self.canvas)
        if images.shape[-2:] != (self.canvas, self.canvas) or images.shape[1] != 1:
            raise ShapeError(
                f"expected (B, {self.canvas}, {self.canvas}) images, got {tuple(images.shape)}"
            )
        x = self.convs(images)
        x = x.flatten(2).transpose(1, 2)  # (B, M, C)
        x = self.position(x)
        return self.mlp(self.norm(x))
