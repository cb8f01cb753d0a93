"""Feature embedding store plus FM first-order weights and bias."""
from __future__ import annotations

import io
import json

import torch
from torch import nn

from .data import FieldSchema


class EmbeddingTable(nn.Module):
    """``M x D`` embeddings; optional ``M`` first-order weights and a global bias."""

    def __init__(self, schema: FieldSchema, dim: int = 16, first_order: bool = True,
                 init_std: float = 0.01):
        super().__init__()
        self.schema = schema
        self.dim = dim
        self.num_features = schema.num_features
        self.weight = nn.Parameter(torch.empty(self.num_features, dim))
        nn.init.normal_(self.weight, mean=0.0, std=init_std)
        if first_order:
            self.first_order = nn.Parameter(torch.zeros(self.num_features))
            self.bias = nn.Parameter(torch.zeros(()))
        else:
            self.register_parameter("first_order", None)
            self.register_parameter("bias", None)

    def _check(self, ids: torch.Tensor):
        if ids.numel() and (int(ids.max()) >= self.num_features or int(ids.min()) < 0):
            raise IndexError(f"feature id outside [0, {self.num_features})")

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        """``(B, F)`` ids -> ``(B, F, D)`` embedding matrices."""
        self._check(ids)
        return self.weight[ids]

    def linear(self, ids: torch.Tensor) -> torch.Tensor:
        """Bias plus the sum of first-order weights, shape ``(B,)``."""
        if self.first_order is None:
            raise RuntimeError("table was built without first-order weights")
        self._check(ids)
        return self.bias + self.first_order[ids].sum(dim=1)


def embed(ids, table: EmbeddingTable) -> torch.Tensor:
    """Single-instance convenience: ``F`` ids -> ``F x D``."""
    ids = torch.as_tensor(ids, dtype=torch.long)
    return table(ids.view(1, -1))[0]


def count_embedding_params(schema: FieldSchema, dim: int, include_first_order: bool) -> int:
    m = schema.num_features
    return m * dim + ((m + 1) if include_first_order else 0)


def save_checkpoint(path, model: nn.Module, schema: FieldSchema, dim: int, extra: dict | None = None):
    """Write schema manifest, ``D`` and every parameter/buffer to one file."""
    blob = {
        "manifest": json.dumps({"schema": schema.to_manifest(), "dim": dim, **(extra or {})}),
        "state": {k: v.detach().clone() for k, v in model.state_dict().items()},
    }
    torch.save(blob, path)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(manifest, state_dict)``; the manifest's schema is rebuilt as a FieldSchema."""
    with open(path, "rb") as fh:
        blob = torch.load(io.BytesIO(fh.read()), weights_only=True)
    manifest = json.loads(blob["manifest"])
    manifest["schema"] = FieldSchema.from_manifest(manifest["schema"])
    return manifest, blob["state"]
