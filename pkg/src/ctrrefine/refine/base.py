"""Shared machinery for feature-refinement modules.

Every module maps a batch of embedding matrices ``(B, F, D)`` to refined
matrices of the same shape and carries an :class:`FRDescriptor` declaring
its taxonomy properties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import ClassVar

import torch
from torch import nn

# weight-range classes
UNIT = "[0,1]"
NONNEG = "[0,inf)"
REAL = "(-inf,inf)"

INFO_TYPES = ("IF", "CF", "CI", "OI")


class ContractError(ValueError):
    """Input violates a module's construction-time contract."""


@dataclass(frozen=True)
class FRDescriptor:
    name: str
    information: frozenset
    context_aware: bool
    granularity: str | None  # "vector" | "bit" | None
    activation: str | None  # "softmax" | "sigmoid" | "relu" | "identity" | None
    weight_range: str | None  # UNIT | NONNEG | REAL | None
    non_linear: bool
    paradigm: str  # "selection" | "transformation" | "composite"
    display_name: str = ""

    def __post_init__(self):
        assert self.information <= set(INFO_TYPES)
        none_cols = (self.granularity is None, self.activation is None, self.weight_range is None)
        assert len(set(none_cols)) == 1, "weight columns are all set or all empty"
        assert (self.paradigm == "transformation") == none_cols[0]

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["information"] = sorted(self.information)
        return out


@dataclass
class FRConfig:
    """Hyper-parameters shared by the FR family; unused keys are ignored per module."""

    hidden: int = 64  # m
    depth: int = 1  # L_d
    heads: int = 2  # h
    head_dim: int = 16  # d_K
    dropout: float = 0.5
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("hidden", "depth", "heads", "head_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"fr config {name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict | None) -> "FRConfig":
        d = dict(d or {})
        aliases = {"m": "hidden", "L_d": "depth", "h": "heads", "d_K": "head_dim", "d_k": "head_dim"}
        known = {f.name for f in fields(cls)} - {"extra"}
        kwargs, extra = {}, {}
        for k, v in d.items():
            k = aliases.get(k, k)
            (kwargs if k in known else extra)[k] = v
        return cls(**kwargs, extra=extra)


REGISTRY: dict[str, type["FRModule"]] = {}


def register(cls):
    REGISTRY[cls.descriptor.name] = cls
    return cls


def normalize_name(name: str) -> str:
    return name.replace("-", "").replace("_", "")


def get_module_class(name: str) -> type["FRModule"]:
    key = normalize_name(name)
    for k, cls in REGISTRY.items():
        if k.lower() == key.lower():
            return cls
    if key.lower() == "egate":  # complexity tables call BGate "EGate"
        return REGISTRY["BGate"]
    raise KeyError(f"unknown FR module {name!r}; known: {sorted(REGISTRY)}")


def canonical_name(name: str) -> str:
    """Registry spelling of ``name`` (``"frnet-b"`` -> ``"FRNetB"``)."""
    return get_module_class(name).descriptor.name


def build_module(name: str, num_fields: int, dim: int, cfg: FRConfig | dict | None = None) -> "FRModule":
    if not isinstance(cfg, FRConfig):
        cfg = FRConfig.from_dict(cfg)
    return get_module_class(name)(num_fields, dim, cfg)


def count_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def added_param_count(module: nn.Module) -> int:
    """The module's own parameter count (an FR module never holds the embedding table)."""
    return count_params(module)


class FRModule(nn.Module):
    descriptor: ClassVar[FRDescriptor]

    def __init__(self, num_fields: int, dim: int, cfg: FRConfig | None = None):
        super().__init__()
        if num_fields < 1 or dim < 1:
            raise ContractError("num_fields and dim must be positive")
        self.num_fields = num_fields
        self.dim = dim
        self.cfg = cfg or FRConfig()

    def check(self, E: torch.Tensor):
        if E.dim() != 3 or E.shape[1:] != (self.num_fields, self.dim):
            raise ContractError(
                f"{self.descriptor.name} expects (B, {self.num_fields}, {self.dim}), "
                f"got {tuple(E.shape)}")

    def forward(self, E: torch.Tensor) -> torch.Tensor:
        self.check(E)
        return self.refine(E)

    def refine(self, E: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def weights(self, E: torch.Tensor) -> torch.Tensor | None:
        """Learned weight matrix ``W`` (``(B, F)`` or ``(B, F, D)``); None for transformations."""
        return None

    def gate_activation(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    @property
    def param_count(self) -> int:
        return count_params(self)


class SelectionModule(FRModule):
    """Re-weight rows (vector weights) or elements (bit weights) of ``E``."""

    #: constant factor applied by the selection step on top of ``W``
    weight_scale: float = 1.0

    def refine(self, E):
        return select(E, self.weights(E), self.weight_scale)


class CompositeModule(FRModule):
    """Soft-gate blend of ``E`` with complementary embeddings."""

    def complementary(self, E: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def refine(self, E):
        return soft_gate_combine(E, self.complementary(E), self.weights(E))


def _broadcast(W: torch.Tensor, E: torch.Tensor) -> torch.Tensor:
    return W.unsqueeze(-1) if W.dim() == E.dim() - 1 else W


def select(E: torch.Tensor, W: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    W = _broadcast(W, E)
    return E * W if scale == 1.0 else E * (scale * W)


def soft_gate_combine(E: torch.Tensor, E_com: torch.Tensor, W: torch.Tensor,
                      check_range: bool = True) -> torch.Tensor:
    """``E * W + E_com * (1 - W)``; vector weights broadcast across ``D``."""
    if E.shape != E_com.shape:
        raise ContractError(f"E {tuple(E.shape)} and E_com {tuple(E_com.shape)} differ")
    if check_range and W.numel() and (W.min() < 0 or W.max() > 1):
        raise ContractError("soft gate weights must lie in [0, 1]")
    W = _broadcast(W, E)
    return E * W + E_com * (1 - W)


# -- building blocks ---------------------------------------------------------

def _uniform_(t: torch.Tensor, fan_in: int):
    bound = 1.0 / math.sqrt(fan_in)
    nn.init.uniform_(t, -bound, bound)


class FieldwiseLinear(nn.Module):
    """One independent affine map per field: ``(B, F, i) -> (B, F, o)``."""

    def __init__(self, num_fields: int, in_dim: int, out_dim: int, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(num_fields, in_dim, out_dim))
        _uniform_(self.weight, in_dim)
        if bias:
            self.bias = nn.Parameter(torch.empty(num_fields, out_dim))
            _uniform_(self.bias, in_dim)
        else:
            self.register_parameter("bias", None)

    def forward(self, x):
        out = torch.einsum("bfi,fio->bfo", x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


def mlp(in_dim: int, widths, dropout: float = 0.0, bias: bool = True) -> nn.Sequential:
    """ReLU stack with dropout after every hidden layer; returns the last hidden vector."""
    layers = []
    for w in widths:
        layers += [nn.Linear(in_dim, w, bias=bias), nn.ReLU()]
        if dropout > 0:
            layers.append(nn.Dropout(dropout))
        in_dim = w
    return nn.Sequential(*layers)


class MultiHeadSelfAttention(nn.Module):
    """Scaled dot-product self-attention over the field axis.

    Per-head projections ``D -> d_K`` for queries, keys and values, heads
    concatenated and mapped back with ``W^O: h*d_K -> out_dim``.
    """

    def __init__(self, dim: int, heads: int, head_dim: int, out_dim: int | None = None,
                 bias: bool = False):
        super().__init__()
        self.heads, self.head_dim = heads, head_dim
        inner = heads * head_dim
        self.query = nn.Linear(dim, inner, bias=bias)
        self.key = nn.Linear(dim, inner, bias=bias)
        self.value = nn.Linear(dim, inner, bias=bias)
        self.out = nn.Linear(inner, out_dim or dim, bias=bias)

    def _split(self, x):
        b, f, _ = x.shape
        return x.view(b, f, self.heads, self.head_dim).transpose(1, 2)

    def scores(self, E):
        """Attention probabilities, ``(B, h, F, F)``; each row sums to one."""
        q, k = self._split(self.query(E)), self._split(self.key(E))
        return torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.head_dim), dim=-1)

    def forward(self, E):
        att = self.scores(E) @ self._split(self.value(E))
        b, _, f, _ = att.shape
        return self.out(att.transpose(1, 2).reshape(b, f, self.heads * self.head_dim))


class ContextVector(nn.Module):
    """Condense a whole instance into one ``D``-vector.

    With ``hidden=()`` this is the plain affine map ``F*D -> D``; otherwise a
    ReLU MLP over the flattened matrix precedes the final ``-> D`` layer.
    """

    def __init__(self, num_fields: int, dim: int, hidden=(), dropout: float = 0.0):
        super().__init__()
        self.num_fields, self.dim = num_fields, dim
        self.body = mlp(num_fields * dim, hidden, dropout)
        self.head = nn.Linear(hidden[-1] if hidden else num_fields * dim, dim)

    def forward(self, E):
        if E.dim() != 3 or E.shape[1:] != (self.num_fields, self.dim):
            raise ContractError(f"expected (B, {self.num_fields}, {self.dim}), got {tuple(E.shape)}")
        return self.head(self.body(E.flatten(1)))
