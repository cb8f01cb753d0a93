"""Composite-paradigm modules: sigmoid gate between ``E`` and complementary embeddings."""
from __future__ import annotations

import torch
from torch import nn

from .base import (UNIT, CompositeModule, ContextVector, FieldwiseLinear, FRDescriptor,
                   MultiHeadSelfAttention, register)


class _FieldContextBranch(nn.Module):
    """Intra-field ``D -> D`` map per field plus the broadcast context vector."""

    def __init__(self, num_fields, dim, cfg):
        super().__init__()
        self.fieldwise = FieldwiseLinear(num_fields, dim, dim)
        self.context = ContextVector(num_fields, dim, hidden=(cfg.hidden,) * cfg.depth,
                                     dropout=cfg.dropout)

    def forward(self, E):
        return self.fieldwise(E) + self.context(E).unsqueeze(1)


@register
class GFRL(CompositeModule):
    descriptor = FRDescriptor("GFRL", frozenset({"IF", "CI"}), True, "bit", "sigmoid", UNIT, True,
                              "composite", "GFRL")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.aux = _FieldContextBranch(num_fields, dim, self.cfg)
        self.gate = _FieldContextBranch(num_fields, dim, self.cfg)

    def gate_activation(self, x):
        return torch.sigmoid(x)

    def complementary(self, E):
        return self.aux(E)

    def weights(self, E):
        return self.gate_activation(self.gate(E))


class InformationExtraction(nn.Module):
    """Cross-feature attention output scaled element-wise by the instance context."""

    def __init__(self, num_fields, dim, cfg):
        super().__init__()
        self.attention = MultiHeadSelfAttention(dim, cfg.heads, cfg.head_dim)
        self.context = ContextVector(num_fields, dim, hidden=(cfg.hidden,) * (1 + cfg.depth),
                                     dropout=cfg.dropout)

    def forward(self, E):
        return self.attention(E) * self.context(E).unsqueeze(1)


class _FRNet(CompositeModule):
    bit_level: bool

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.complement_unit = InformationExtraction(num_fields, dim, self.cfg)
        self.weight_unit = InformationExtraction(num_fields, dim, self.cfg)
        if not self.bit_level:
            self.to_scalar = nn.Linear(dim, 1)

    def gate_activation(self, x):
        return torch.sigmoid(x)

    def complementary(self, E):
        return self.complement_unit(E)

    def weights(self, E):
        logits = self.weight_unit(E)
        if not self.bit_level:
            logits = self.to_scalar(logits).squeeze(-1)
        return self.gate_activation(logits)


@register
class FRNetV(_FRNet):
    descriptor = FRDescriptor("FRNetV", frozenset({"CF", "CI"}), True, "vector", "sigmoid", UNIT,
                              True, "composite", "FRNet-V")
    bit_level = False


@register
class FRNetB(_FRNet):
    descriptor = FRDescriptor("FRNetB", frozenset({"CF", "CI"}), True, "bit", "sigmoid", UNIT,
                              True, "composite", "FRNet-B")
    bit_level = True
