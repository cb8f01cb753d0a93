"""Transformation-paradigm modules: ``E_fr`` is computed directly, no weight matrix."""
from __future__ import annotations

import math

import torch
from torch import nn

from .base import FieldwiseLinear, FRDescriptor, FRModule, MultiHeadSelfAttention, register
from .selection import TCE


@register
class DRM(FRModule):
    """Single-head self-attention along the embedding-dimension axis.

    ``E`` is transposed to ``D x F`` so each latent dimension is a token with
    ``F`` features; queries, keys and values are ``F x F`` maps.
    """

    descriptor = FRDescriptor("DRM", frozenset({"OI"}), True, None, None, None, True,
                              "transformation", "DRM")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.query = nn.Linear(num_fields, num_fields, bias=False)
        self.key = nn.Linear(num_fields, num_fields, bias=False)
        self.value = nn.Linear(num_fields, num_fields, bias=False)

    def scores(self, E):
        x = E.transpose(1, 2)
        return torch.softmax(self.query(x) @ self.key(x).transpose(1, 2)
                             / math.sqrt(self.num_fields), dim=-1)

    def refine(self, E):
        return (self.scores(E) @ self.value(E.transpose(1, 2))).transpose(1, 2)


@register
class SelfAtt(FRModule):
    """``ReLU(FeedForward(MultiHead(E) W^O))`` over the field axis."""

    descriptor = FRDescriptor("SelfAtt", frozenset({"CF"}), True, None, None, None, True,
                              "transformation", "SelfAtt")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.attention = MultiHeadSelfAttention(dim, self.cfg.heads, self.cfg.head_dim)
        self.feed_forward = nn.Linear(dim, dim)

    def scores(self, E):
        return self.attention.scores(E)

    def refine(self, E):
        return torch.relu(self.feed_forward(self.attention(E)))


@register
class PFFN(FRModule):
    """TCE followed by ``depth`` per-field feed-forward blocks with residual + LayerNorm."""

    descriptor = FRDescriptor("PFFN", frozenset({"IF", "CI"}), True, None, None, None, True,
                              "transformation", "PFFN")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.tce = TCE(num_fields, dim, self.cfg)
        self.blocks = nn.ModuleList()
        for _ in range(self.cfg.depth):
            self.blocks.append(nn.ModuleDict({
                "ff1": FieldwiseLinear(num_fields, dim, dim),
                "ff2": FieldwiseLinear(num_fields, dim, dim),
                "norm": nn.LayerNorm(dim),
            }))

    def refine(self, E):
        x = self.tce(E)
        for blk in self.blocks:
            x = blk["norm"](x + blk["ff2"](torch.relu(blk["ff1"](x))))
        return x
