"""Selection-paradigm modules: learn a weight matrix and re-weight ``E``."""
from __future__ import annotations

import torch
from torch import nn

from .base import (NONNEG, REAL, UNIT, FieldwiseLinear, FRConfig, FRDescriptor, FRModule,
                   MultiHeadSelfAttention, SelectionModule, mlp, register)


@register
class SKIP(FRModule):
    """Identity; the unaugmented baseline."""

    descriptor = FRDescriptor("SKIP", frozenset(), False, "vector", "identity", UNIT, False,
                              "selection", "SKIP")

    def refine(self, E):
        return E

    def weights(self, E):
        return torch.ones(E.shape[:2], dtype=E.dtype, device=E.device)

    def gate_activation(self, x):
        return torch.ones_like(x)


@register
class FEN(SelectionModule):
    """MLP over the flattened instance, softmax over fields.

    The softmax weights are scaled by ``F`` in the selection step, so a uniform
    softmax leaves ``E`` unchanged.
    """

    descriptor = FRDescriptor("FEN", frozenset({"CI"}), True, "vector", "softmax", UNIT, False,
                              "selection", "FEN")

    def __init__(self, num_fields, dim, cfg: FRConfig | None = None):
        super().__init__(num_fields, dim, cfg)
        m = self.cfg.hidden
        self.body = mlp(num_fields * dim, [m] * (1 + self.cfg.depth), self.cfg.dropout)
        self.head = nn.Linear(m, num_fields)
        self.weight_scale = float(num_fields)

    def gate_activation(self, x):
        return torch.softmax(x, dim=-1)

    def weights(self, E):
        return self.gate_activation(self.head(self.body(E.flatten(1))))


@register
class SENET(SelectionModule):
    """Squeeze rows by their mean, excite with two ``F -> F`` ReLU layers."""

    descriptor = FRDescriptor("SENET", frozenset({"OI"}), True, "vector", "relu", NONNEG, False,
                              "selection", "SENET")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.excite1 = nn.Linear(num_fields, num_fields)
        self.excite2 = nn.Linear(num_fields, num_fields)

    def squeeze(self, E):
        return E.mean(dim=-1)

    def gate_activation(self, x):
        return torch.relu(x)

    def weights(self, E):
        return self.gate_activation(self.excite2(torch.relu(self.excite1(self.squeeze(E)))))


@register
class FWN(SelectionModule):
    """A private ``D -> D`` ReLU network per field produces bit-level weights."""

    descriptor = FRDescriptor("FWN", frozenset({"IF"}), False, "bit", "relu", NONNEG, False,
                              "selection", "FWN")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.fieldwise = FieldwiseLinear(num_fields, dim, dim, bias=True)

    def gate_activation(self, x):
        return torch.relu(x)

    def weights(self, E):
        return self.gate_activation(self.fieldwise(E))


@register
class DFEN(SelectionModule):
    """Residual multi-head attention feeding an FEN-style tail with ReLU weights."""

    descriptor = FRDescriptor("DFEN", frozenset({"CF", "CI"}), True, "vector", "relu", NONNEG,
                              False, "selection", "DFEN")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        c = self.cfg
        self.attention = MultiHeadSelfAttention(dim, c.heads, c.head_dim)
        self.body = mlp(num_fields * dim, [c.hidden] * (1 + c.depth), c.dropout)
        self.head = nn.Linear(c.hidden, num_fields)

    def gate_activation(self, x):
        return torch.relu(x)

    def weights(self, E):
        h = E + self.attention(E)
        return self.gate_activation(self.head(self.body(h.flatten(1))))


@register
class VGate(SelectionModule):
    """Per-field linear ``D -> 1`` gate, no activation."""

    descriptor = FRDescriptor("VGate", frozenset({"IF"}), False, "vector", "identity", REAL, False,
                              "selection", "VGate")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.gate = FieldwiseLinear(num_fields, dim, 1, bias=False)

    def gate_activation(self, x):
        return x

    def weights(self, E):
        return self.gate(E).squeeze(-1)


@register
class BGate(SelectionModule):
    """Per-field linear ``D -> D`` gate, no activation."""

    descriptor = FRDescriptor("BGate", frozenset({"IF"}), False, "bit", "identity", REAL, False,
                              "selection", "BGate")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        self.gate = FieldwiseLinear(num_fields, dim, dim, bias=False)

    def gate_activation(self, x):
        return x

    def weights(self, E):
        return self.gate(E)


@register
class TCE(SelectionModule):
    """Shared ``F*D -> m`` aggregation, then a per-field ``m -> D`` projection."""

    descriptor = FRDescriptor("TCE", frozenset({"CI"}), True, "bit", "identity", REAL, True,
                              "selection", "TCE")

    def __init__(self, num_fields, dim, cfg=None):
        super().__init__(num_fields, dim, cfg)
        m = self.cfg.hidden
        self.aggregate = nn.Linear(num_fields * dim, m, bias=False)
        self.project = nn.Parameter(torch.empty(num_fields, m, dim))
        nn.init.xavier_uniform_(self.project.view(num_fields * m, dim))

    def gate_activation(self, x):
        return x

    def weights(self, E):
        z = self.aggregate(E.flatten(1))
        return torch.einsum("bm,fmd->bfd", z, self.project)
