from .base import (NONNEG, REAL, REGISTRY, UNIT, ContextVector, ContractError, FRConfig,
                   FRDescriptor, FRModule, MultiHeadSelfAttention, added_param_count,
                   build_module, canonical_name, get_module_class, normalize_name, select,
                   soft_gate_combine)
from .selection import BGate, DFEN, FEN, FWN, SENET, SKIP, TCE, VGate
from .transformation import DRM, PFFN, SelfAtt
from .composite import FRNetB, FRNetV, GFRL

#: the thirteen evaluated modules, in complexity-table order
EVALUATED = ["FEN", "SENET", "FWN", "DFEN", "DRM", "VGate", "BGate", "SelfAtt", "TCE", "PFFN",
             "GFRL", "FRNetV", "FRNetB"]
ALL_MODULES = ["SKIP"] + EVALUATED


def display_name(name: str) -> str:
    return get_module_class(name).descriptor.display_name


__all__ = [
    "ALL_MODULES", "EVALUATED", "REGISTRY", "NONNEG", "REAL", "UNIT",
    "ContextVector", "ContractError", "FRConfig", "FRDescriptor", "FRModule",
    "MultiHeadSelfAttention", "added_param_count", "build_module", "canonical_name",
    "display_name", "get_module_class", "normalize_name", "select", "soft_gate_combine",
    "SKIP", "FEN", "SENET", "FWN", "DFEN", "DRM", "VGate", "BGate", "SelfAtt", "TCE", "PFFN",
    "GFRL", "FRNetV", "FRNetB",
]
