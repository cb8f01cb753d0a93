"""Feature-interaction backbones, the prediction layer, and the two metrics."""
from __future__ import annotations

import math

import numpy as np
import torch
from scipy.stats import rankdata
from torch import nn

from .refine.base import mlp

EPS = 1e-7


def bi_interaction(E: torch.Tensor) -> torch.Tensor:
    """``0.5 * ((sum_i e_i)^2 - sum_i e_i^2)`` over the field axis, ``(B, D)``."""
    return 0.5 * (E.sum(dim=1).pow(2) - E.pow(2).sum(dim=1))


class Backbone(nn.Module):
    """Maps ``(B, F, D)`` to a compact representation ``h`` and a scalar logit."""

    out_dim: int

    def hidden(self, E: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def logit_from_hidden(self, h: torch.Tensor) -> torch.Tensor:
        return self.head(h).squeeze(-1)

    def forward(self, E):
        return self.logit_from_hidden(self.hidden(E))


class FM(Backbone):
    """Second-order factorization machine term; first-order part lives in the embedding table."""

    def __init__(self, num_fields, dim, **_):
        super().__init__()
        self.out_dim = dim

    def hidden(self, E):
        return bi_interaction(E)

    def logit_from_hidden(self, h):
        return h.sum(dim=-1)


class CrossNet(Backbone):
    """Rank-one cross layers: ``x_{l+1} = x_0 (x_l . w_l) + b_l + x_l``."""

    def __init__(self, num_fields, dim, depth: int = 3, **_):
        super().__init__()
        n = num_fields * dim
        self.out_dim = n
        self.w = nn.ParameterList([nn.Parameter(torch.empty(n)) for _ in range(depth)])
        self.b = nn.ParameterList([nn.Parameter(torch.zeros(n)) for _ in range(depth)])
        for w in self.w:
            nn.init.normal_(w, std=1.0 / math.sqrt(n))
        self.head = nn.Linear(n, 1)

    def cross(self, x0):
        x = x0
        for w, b in zip(self.w, self.b):
            x = x0 * (x @ w).unsqueeze(-1) + b + x
        return x

    def hidden(self, E):
        return self.cross(E.flatten(1))


class CrossNetV2(Backbone):
    """Full-matrix cross layers: ``x_{l+1} = x_0 * (W_l x_l + b_l) + x_l``."""

    def __init__(self, num_fields, dim, depth: int = 3, **_):
        super().__init__()
        n = num_fields * dim
        self.out_dim = n
        self.layers = nn.ModuleList(nn.Linear(n, n) for _ in range(depth))
        self.head = nn.Linear(n, 1)

    def cross(self, x0):
        x = x0
        for lin in self.layers:
            x = x0 * lin(x) + x
        return x

    def hidden(self, E):
        return self.cross(E.flatten(1))


class DNN(Backbone):
    def __init__(self, num_fields, dim, widths=(400, 400, 400), dropout: float = 0.5, **_):
        super().__init__()
        widths = list(widths)
        self.out_dim = widths[-1] if widths else num_fields * dim
        self.body = mlp(num_fields * dim, widths, dropout)
        self.head = nn.Linear(self.out_dim, 1)

    def hidden(self, E):
        return self.body(E.flatten(1))


class AFN(Backbone):
    """Logarithmic transformation layer followed by an MLP.

    Each log-neuron computes ``exp(sum_i c_i * ln|e_i|)``, i.e. a learned
    element-wise product of powers of the field embeddings.
    """

    def __init__(self, num_fields, dim, log_neurons: int = 64, widths=(400, 400, 400),
                 dropout: float = 0.5, **_):
        super().__init__()
        self.coefficients = nn.Linear(num_fields, log_neurons, bias=False)
        self.body = mlp(dim * log_neurons, list(widths), dropout)
        self.out_dim = widths[-1] if widths else dim * log_neurons
        self.head = nn.Linear(self.out_dim, 1)

    def log_neurons(self, E):
        """``(B, F, D)`` -> ``(B, D, L)`` log-neuron outputs."""
        logs = torch.log(torch.clamp(E.abs(), min=EPS)).transpose(1, 2)
        return torch.exp(self.coefficients(logs))

    def hidden(self, E):
        return self.body(self.log_neurons(E).flatten(1))


BACKBONES = {"FM": FM, "CN": CrossNet, "CN2": CrossNetV2, "DNN": DNN, "AFN": AFN}

#: parallel base models (two sub-networks)
PARALLEL_ALIASES = {"DeepFM": ("FM", "DNN"), "DCN": ("CN", "DNN"), "DCNV2": ("CN2", "DNN"),
                    "AFN+": ("AFN", "DNN")}


def build_backbone(name: str, num_fields: int, dim: int, cfg: dict | None = None) -> Backbone:
    try:
        cls = BACKBONES[name]
    except KeyError:
        raise KeyError(f"unknown backbone {name!r}; known: {sorted(BACKBONES)}") from None
    return cls(num_fields, dim, **(cfg or {}))


# -- functional forms ---------------------------------------------------------

def fm_forward(E: torch.Tensor, first_order_sum=0.0, bias=0.0) -> torch.Tensor:
    """FM logit for ``(F, D)`` or ``(B, F, D)`` input via the square-of-sum identity."""
    batched = E.dim() == 3
    E = E if batched else E.unsqueeze(0)
    out = bias + first_order_sum + bi_interaction(E).sum(-1)
    return out if batched else out[0]


def crossnet_forward(x0: torch.Tensor, weights, biases) -> torch.Tensor:
    x = x0
    for w, b in zip(weights, biases):
        x = x0 * (x @ w).unsqueeze(-1) + b + x
    return x


def crossnetv2_forward(x0: torch.Tensor, weights, biases) -> torch.Tensor:
    x = x0
    for W, b in zip(weights, biases):
        x = x0 * (x @ W.T + b) + x
    return x


def predict(h, head: nn.Module | None = None) -> torch.Tensor:
    """``sigmoid(f(h))``; ``f`` is ``head`` for vectors and the identity for logits."""
    h = torch.as_tensor(h, dtype=torch.get_default_dtype()) if not torch.is_tensor(h) else h
    return torch.sigmoid(head(h).squeeze(-1) if head is not None else h)


def logloss(labels, probs, eps: float = EPS) -> float:
    y = np.asarray(labels, dtype=np.float64).ravel()
    p = np.clip(np.asarray(probs, dtype=np.float64).ravel(), eps, 1 - eps)
    if y.size == 0:
        raise ValueError("logloss of an empty set")
    if y.shape != p.shape:
        raise ValueError("labels and probabilities differ in length")
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def auc(labels, scores) -> float:
    """Rank-based ROC AUC with ties counted as one half.

    Returns ``nan`` when only one class is present (AUC is undefined there).
    """
    y = np.asarray(labels).ravel().astype(bool)
    s = np.asarray(scores, dtype=np.float64).ravel()
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
