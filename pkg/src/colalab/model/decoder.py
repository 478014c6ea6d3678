from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class DecodedOutput:
    logits: torch.Tensor  # (B, K, 1, P) mask logits, P = grid**2
    features: torch.Tensor  # (B, K, C, P) per-slot features
    masks: torch.Tensor  # (B, K, 1, P), sums to 1 over K
    mu_d: torch.Tensor  # (B, C, grid, grid)


class SpatialBroadcastDecoder(nn.Module):
    """Decodes each slot independently onto the teacher grid.

    A slot is projected, broadcast to every grid position, offset by a learned
    positional embedding and run through a per-position MLP whose last layer
    emits ``teacher_channels`` features plus one mask logit.
    """

    def __init__(self, config):
        super().__init__()
        g = config.teacher_grid
        h = config.decoder_hidden
        self.grid = g
        self.channels = config.teacher_channels
        self.project = nn.Linear(config.slot_dim, config.feat_dim)
        self.position = nn.Parameter(torch.randn(g * g, config.feat_dim) * 0.02)
        self.mlp = nn.Sequential(
            nn.Linear(config.feat_dim, h), nn.ReLU(),
            nn.Linear(h, h), nn.ReLU(),
            nn.Linear(h, h), nn.ReLU(),
            nn.Linear(h, config.teacher_channels + 1),
        )
        self.compose = nn.Linear(config.teacher_channels, config.teacher_channels, bias=False)

    @property
    def out_width(self):
        return self.mlp[-1].out_features

    def forward(self, slots):
        b, k, _ = slots.shape
        x = self.project(slots)[:, :, None, :] + self.position  # (B, K, P, F)
        out = self.mlp(x).transpose(2, 3)  # (B, K, C+1, P)
        features, logits = out[:, :, :-1], out[:, :, -1:]
        masks = torch.softmax(logits, dim=1)
        mixed = (masks * features).sum(dim=1)  # (B, C, P)
        mu_d = self.compose(mixed.transpose(1, 2)).transpose(1, 2)
        return DecodedOutput(logits, features, masks, mu_d.reshape(b, self.channels, self.grid, self.grid))
