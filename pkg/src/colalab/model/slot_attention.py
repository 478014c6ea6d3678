import math

import torch
from torch import nn

from ..exceptions import NumericError, ShapeError


class GRUUpdate(nn.Module):
    """GRU cell applied slot-wise: ``new = GRU(hidden=slots, input=updates)``."""

    def __init__(self, dim):
        super().__init__()
        self.cell = nn.GRUCell(dim, dim)

    def forward(self, slots, updates):
        b, k, d = slots.shape
        out = self.cell(updates.reshape(b * k, d), slots.reshape(b * k, d))
        return out.reshape(b, k, d)


class SlotAttention(nn.Module):
    """Iterative attention with the softmax taken over slots.

    Each round computes ``logits = q(slots) . k(H) / sqrt(D)``, attention
    ``A = softmax over slots``, assignment weights ``W = A / sum_j A`` per slot,
    and updates every slot with a GRU fed the ``W``-weighted mean of ``v(H)``.
    Both normalizations run in log space.
    """

    def __init__(self, config):
        super().__init__()
        d = config.slot_dim
        self.iters = config.iters
        self.scale = 1.0 / math.sqrt(d)
        self.norm_inputs = nn.LayerNorm(config.feat_dim) if config.layer_norm else nn.Identity()
        self.norm_slots = nn.LayerNorm(d) if config.layer_norm else nn.Identity()
        self.project_q = nn.Linear(d, d, bias=False)
        self.project_k = nn.Linear(config.feat_dim, d, bias=False)
        self.project_v = nn.Linear(config.feat_dim, d, bias=False)
        self.update = GRUUpdate(d)
        if config.slot_mlp:
            self.norm_mlp = nn.LayerNorm(d)
            self.mlp = nn.Sequential(
                nn.Linear(d, config.slot_mlp_hidden), nn.ReLU(), nn.Linear(config.slot_mlp_hidden, d)
            )
        else:
            self.mlp = None

    def forward(self, features, init):
        """Return ``(slots, attention)`` with shapes ``(B, K, D)`` and ``(B, K, M)``.

        ``init`` is ``(K, D)`` (shared by the batch) or ``(B, K, D)``.
        """
        b = features.shape[0]
        if init.dim() == 2:
            init = init.expand(b, *init.shape)
        if init.shape[0] != b or init.shape[-1] != self.project_q.in_features:
            raise ShapeError(f"slot init {tuple(init.shape)} does not match batch {b}")
        inputs = self.norm_inputs(features)
        keys = self.project_k(inputs)
        values = self.project_v(inputs)
        slots = init
        attn = None
        for it in range(self.iters):
            q = self.project_q(self.norm_slots(slots))
            logits = torch.einsum("bkd,bmd->bkm", q, keys) * self.scale
            log_attn = torch.log_softmax(logits, dim=1)
            log_weights = log_attn - torch.logsumexp(log_attn, dim=2, keepdim=True)
            weights = log_weights.exp()
            updates = torch.einsum("bkm,bmd->bkd", weights, values)
            slots = self.update(slots, updates)
            if self.mlp is not None:
                slots = slots + self.mlp(self.norm_mlp(slots))
            attn = log_attn.exp()
            if not torch.isfinite(slots).all():
                raise NumericError("non-finite slot state", iteration=it)
        return slots, attn
