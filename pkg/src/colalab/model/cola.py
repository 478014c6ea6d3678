"""The full latent-component network: encoder, sampler and decoder."""

import math
from dataclasses import dataclass

import torch
from torch import nn

from ..exceptions import InvalidArgumentError
from .backbone import Backbone
from .config import ModelConfig
from .decoder import SpatialBroadcastDecoder
from .slot_attention import SlotAttention
from .teacher import TeacherEncoder

SAMPLED = "sampled"
FIXED = "fixed"


@dataclass
class SlotInit:
    """Slot initialization ``(K, D)``; fixes the component order for matching."""

    values: torch.Tensor
    source: str = FIXED

    def detach(self):
        return SlotInit(self.values.detach(), self.source)


@dataclass
class ComponentSet:
    mean: torch.Tensor  # (B, K, D)
    sample: torch.Tensor  # (B, K, D)
    attention: torch.Tensor = None  # (B, K, M), final round

    def __len__(self):
        return self.mean.shape[0]


def sample_components(mean, sigma, generator=None, eval_mode=False):
    """Reparameterized draw ``mean + sigma * noise``; ``eval_mode`` returns the mean."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma}")
    if eval_mode:
        return mean
    noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=mean.device)
    return mean + sigma * noise


class CoLaNet(nn.Module):
    """Backbone, slot attention, learnable slot-init Gaussian, decoder and teacher."""

    def __init__(self, config=None):
        super().__init__()
        self.config = config or ModelConfig()
        c = self.config
        self.backbone = Backbone(c)
        self.slot_attention = SlotAttention(c)
        self.decoder = SpatialBroadcastDecoder(c)
        self.eps_mu = nn.Parameter(torch.randn(c.n_slots, c.slot_dim))
        self.eps_log_sigma = nn.Parameter(torch.full((c.n_slots, c.slot_dim), math.log(0.3)))
        self.teacher = TeacherEncoder(c)

    @property
    def sigma(self):
        return self.config.sigma

    def encoder_parameters(self):
        yield from self.backbone.parameters()
        yield from self.slot_attention.parameters()
        yield self.eps_mu
        yield self.eps_log_sigma

    def decoder_parameters(self):
        return self.decoder.parameters()

    def slot_init(self, generator=None, sample=True):
        """Draw from the learnable init Gaussian, or return its mean."""
        if not sample:
            return SlotInit(self.eps_mu, FIXED)
        z = torch.randn(self.eps_mu.shape, generator=generator, dtype=self.eps_mu.dtype)
        return SlotInit(self.eps_mu + self.eps_log_sigma.exp() * z, SAMPLED)

    def features(self, images):
        return self.backbone(images)

    def encode(self, images, eps, generator=None, eval_mode=True):
        """Images ``(B, canvas, canvas)`` to a ComponentSet."""
        values = eps.values if isinstance(eps, SlotInit) else eps
        h = self.backbone(images)
        mean, attn = self.slot_attention(h, values)
        sample = sample_components(mean, self.sigma, generator, eval_mode=eval_mode)
        return ComponentSet(mean, sample, attn)

    def decode(self, slots):
        if isinstance(slots, ComponentSet):
            slots = slots.sample
        return self.decoder(slots)

    def forward(self, images, eps, generator=None, eval_mode=True):
        comps = self.encode(images, eps, generator, eval_mode)
        return comps, self.decode(comps.sample)
