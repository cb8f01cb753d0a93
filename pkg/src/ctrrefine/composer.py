"""Wire embedding, FR modules and backbones into stacked / parallel models."""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .backbones import PARALLEL_ALIASES, build_backbone
from .data import FieldSchema
from .embedding import EmbeddingTable
from .refine import build_module, canonical_name
from .refine.base import count_params

PATTERNS = ("stacked", "parallel_shared", "parallel_separate")


class CompositionError(ValueError):
    pass


def parse_backbones(value) -> tuple[str, ...]:
    """``"DeepFM"`` / ``"FM,DNN"`` / ``["FM", "DNN"]`` -> ``("FM", "DNN")``."""
    if isinstance(value, str):
        if value in PARALLEL_ALIASES:
            return PARALLEL_ALIASES[value]
        value = [v.strip() for v in value.split(",") if v.strip()]
    return tuple(value)


@dataclass
class ModelSpec:
    pattern: str = "stacked"
    backbones: tuple = ("FM",)
    #: one FR id for stacked/shared, two for separate; empty means the plain base model
    fr: tuple = ("SKIP",)
    dim: int = 16
    fr_cfg: dict = field(default_factory=dict)
    backbone_cfg: dict = field(default_factory=dict)
    fusion: str = "sum"

    def __post_init__(self):
        self.backbones = parse_backbones(self.backbones)
        if isinstance(self.fr, str):
            self.fr = (self.fr,)
        self.fr = tuple(canonical_name(f) for f in self.fr)
        self.fr_cfg = {(canonical_name(k) if isinstance(v, dict) else k): v
                       for k, v in self.fr_cfg.items()}
        if self.pattern not in PATTERNS:
            raise CompositionError(f"pattern must be one of {PATTERNS}")
        if self.pattern == "stacked" and len(self.backbones) != 1:
            raise CompositionError("stacked models take exactly one backbone")
        if self.pattern != "stacked" and len(self.backbones) != 2:
            raise CompositionError("parallel models take exactly two backbones")
        want = 2 if self.pattern == "parallel_separate" else 1
        if len(self.fr) not in (0, want) or (self.pattern == "parallel_separate" and not self.fr):
            raise CompositionError(f"pattern {self.pattern} takes {want} FR id(s), got {self.fr}")
        if self.fusion not in ("sum", "concat"):
            raise CompositionError("fusion must be 'sum' or 'concat'")

    def fr_config_for(self, name: str) -> dict:
        """Per-module section if present (``fr_cfg[name]``), else the shared top-level keys."""
        shared = {k: v for k, v in self.fr_cfg.items() if not isinstance(v, dict)}
        return {**shared, **self.fr_cfg.get(name, {})}


def base_name(backbones) -> str:
    backbones = tuple(backbones)
    if len(backbones) == 1:
        return backbones[0]
    for alias, pair in PARALLEL_ALIASES.items():
        if pair == backbones:
            return alias
    return "+".join(backbones)


def model_name(spec: ModelSpec) -> str:
    base = base_name(spec.backbones)
    if not spec.fr:
        return base
    if spec.pattern == "parallel_separate":
        a, b = spec.fr
        return f"{base}(2)_{a}" if a == b else f"{base}(2)_{a}+{b}"
    return f"{base}_{spec.fr[0]}"


class CTRModel(nn.Module):
    """Embedding -> FR module(s) -> backbone(s) -> logit."""

    def __init__(self, spec: ModelSpec, schema: FieldSchema):
        super().__init__()
        self.spec = spec
        self.schema = schema
        F, D = schema.num_fields, spec.dim
        self.uses_linear = "FM" in spec.backbones
        self.embedding = EmbeddingTable(schema, D, first_order=self.uses_linear)
        self.fr = nn.ModuleList(build_module(n, F, D, spec.fr_config_for(n)) for n in spec.fr)
        self.backbones = nn.ModuleList(
            build_backbone(b, F, D, spec.backbone_cfg.get(b)) for b in spec.backbones)
        if spec.fusion == "concat" and len(self.backbones) > 1:
            self.fusion_head = nn.Linear(sum(b.out_dim for b in self.backbones), 1)
        else:
            self.fusion_head = None

    @property
    def name(self) -> str:
        return model_name(self.spec)

    def refine(self, E: torch.Tensor) -> list[torch.Tensor]:
        """Refined matrix fed to each backbone, in backbone order."""
        n = len(self.backbones)
        if not self.fr:
            return [E] * n
        if len(self.fr) == 1:
            return [self.fr[0](E)] * n
        return [fr(E) for fr in self.fr]

    def forward_embedded(self, E: torch.Tensor, ids: torch.Tensor | None = None) -> torch.Tensor:
        refined = self.refine(E)
        if self.fusion_head is not None:
            h = torch.cat([b.hidden(r) for b, r in zip(self.backbones, refined)], dim=-1)
            logit = self.fusion_head(h).squeeze(-1)
        else:
            logit = sum(b(r) for b, r in zip(self.backbones, refined))
        if self.uses_linear and ids is not None:
            logit = logit + self.embedding.linear(ids)
        return logit

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.forward_embedded(self.embedding(ids), ids)

    @torch.no_grad()
    def predict_proba(self, ids: torch.Tensor, batch_size: int = 10000) -> torch.Tensor:
        was_training = self.training
        self.eval()
        out = torch.cat([torch.sigmoid(self(ids[i:i + batch_size]))
                         for i in range(0, len(ids), batch_size)]) if len(ids) else torch.empty(0)
        self.train(was_training)
        return out


def compose(spec: ModelSpec, schema: FieldSchema, seed: int | None = None) -> CTRModel:
    if seed is not None:
        torch.manual_seed(seed)
    return CTRModel(spec, schema)


def total_param_count(model: CTRModel) -> int:
    return count_params(model)


def param_breakdown(model: CTRModel) -> dict:
    return {
        "embedding": count_params(model.embedding),
        "fr": [count_params(m) for m in model.fr],
        "backbones": [count_params(b) for b in model.backbones],
        "fusion": count_params(model.fusion_head) if model.fusion_head is not None else 0,
        "total": count_params(model),
    }
