"""Tunables shared across the pipeline, with the reference defaults pinned."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

DEFAULT_FALLBACKS: dict[str, tuple[str, ...]] = {
    "photo": ("background",),
    "icon": ("shape",),
    "shape": ("icon",),
    "background": ("photo",),
    "video": ("photo",),
    "audio": ("video",),
    "template": ("background",),
    "logo": ("icon",),
}


@dataclass(frozen=True)
class PipelineConfig:
    tau_intent: float = 0.7
    recall_floor: float = 0.15
    alpha_fusion: float = 0.5
    rerank_weights: tuple[float, float, float] = (0.7, 0.15, 0.15)
    k_recall: int = 20
    fallback_depth: int = 2
    fallbacks: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_FALLBACKS)
    )


def validate_fallbacks(fallbacks: Mapping[str, tuple[str, ...]]) -> None:
    for src, targets in fallbacks.items():
        if src in targets:
            raise ValueError(f"fallback map routes {src!r} to itself")
