"""Modality-homogeneous batch planning.

Each modality's ids are shuffled and cut into batches; batch order then
interleaves modalities by seeded draws weighted by how many batches each
modality still has left.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from vinstruct.data.schema import Conversation, Modality

logger = logging.getLogger(__name__)

MODALITY_ORDER: Tuple[Modality, ...] = ("visual", "text")


@dataclass(frozen=True)
class Batch:
    index: int
    modality: Modality
    ids: Tuple[str, ...]

    def to_record(self) -> Dict[str, Any]:
        return {"batch_index": self.index, "modality": self.modality, "ids": list(self.ids)}


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    seed: int
    batches: Tuple[Batch, ...]

    def __len__(self) -> int:
        return len(self.batches)

    def ids(self) -> List[str]:
        return [i for b in self.batches for i in b.ids]


def plan_batches(mixture: Sequence[Conversation], batch_size: int, seed: int) -> BatchPlan:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not mixture:
        raise ValueError("Cannot plan batches over an empty mixture")

    rng = np.random.default_rng(seed)

    queues: Dict[Modality, List[Tuple[str, ...]]] = {}
    for modality in MODALITY_ORDER:
        ids = [c.id for c in mixture if c.modality == modality]
        order = rng.permutation(len(ids))
        shuffled = [ids[int(i)] for i in order]
        queues[modality] = [
            tuple(shuffled[s : s + batch_size]) for s in range(0, len(shuffled), batch_size)
        ]

    remaining = {m: len(queues[m]) for m in MODALITY_ORDER}
    cursor = {m: 0 for m in MODALITY_ORDER}
    batches: List[Batch] = []
    while sum(remaining.values()):
        weights = np.array([remaining[m] for m in MODALITY_ORDER], dtype=np.float64)
        pick = MODALITY_ORDER[int(rng.choice(len(MODALITY_ORDER), p=weights / weights.sum()))]
        batches.append(Batch(index=len(batches), modality=pick, ids=queues[pick][cursor[pick]]))
        cursor[pick] += 1
        remaining[pick] -= 1

    logger.info(
        "Planned %d batches (visual=%d, text=%d, batch_size=%d)",
        len(batches), len(queues["visual"]), len(queues["text"]), batch_size,
    )
    return BatchPlan(batch_size=batch_size, seed=seed, batches=tuple(batches))
