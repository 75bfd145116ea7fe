"""Compile raw datasets into one shuffled instruction-tuning mixture.

Each dataset runs its kind's rule chain with its own generator, derived from
(manifest seed, dataset name), so chains can run in any order or in parallel.
The chains' outputs are concatenated in manifest order and shuffled once.
"""

from __future__ import annotations

import logging
import math
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from vinstruct.data import ingest
from vinstruct.data.rules import (
    CAPTION_PROMPT,
    REGION_DIRECTIONS,
    augment_mc,
    cap_sample,
    chunk_rounds,
    drop_dangling_turn,
    filter_text_chat,
    inject_format_prompt,
    merge_qa_per_image,
    pairs_to_turns,
    region_pair,
    truncate,
)
from vinstruct.data.schema import Conversation, DatasetEntry, MixtureManifest
from vinstruct.data.tokens import TokenCounter, WhitespaceTokenCounter, conversation_tokens
from vinstruct.errors import ManifestError

logger = logging.getLogger(__name__)

HISTOGRAM_BUCKET = 128


@dataclass
class DatasetReport:
    name: str
    kind: str
    raw_records: int = 0
    emitted: int = 0
    filtered: int = 0
    truncated: int = 0
    dropped_by_truncation: int = 0
    capped_away: int = 0


@dataclass
class CompileResult:
    conversations: List[Conversation]
    datasets: List[DatasetReport] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.conversations)

    def report(self) -> Dict[str, Any]:
        return {"total": self.total, "datasets": [asdict(d) for d in self.datasets]}


class _Seeds:
    """Stream of integer seeds for one dataset's random steps."""

    def __init__(self, seed: int, name: str) -> None:
        self._rng = np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])

    def next(self) -> int:
        return int(self._rng.integers(0, 2**63 - 1))

    def coin(self) -> int:
        return int(self._rng.integers(2))


def _apply_prompt(convs: List[Conversation], prompt: Optional[str]) -> List[Conversation]:
    if prompt is None:
        return convs
    return [inject_format_prompt(c, prompt) for c in convs]


def _chunk(convs: List[Conversation], max_rounds: Optional[int]) -> List[Conversation]:
    if max_rounds is None:
        return convs
    return [piece for c in convs for piece in chunk_rounds(c, max_rounds)]


def _vqa_short(
    entry: DatasetEntry, seeds: _Seeds, rep: DatasetReport, **_: Any
) -> List[Conversation]:
    records = ingest.load_qa_records(entry.path, dataset=entry.name)
    rep.raw_records = len(records)
    convs = merge_qa_per_image(records, source=entry.name)
    convs = _chunk(convs, entry.chunk_max_rounds)
    return _apply_prompt(convs, entry.format_prompt)


def _mc(
    entry: DatasetEntry, seeds: _Seeds, rep: DatasetReport, **_: Any
) -> List[Conversation]:
    rows = ingest.load_mc_questions(entry.path, dataset=entry.name)
    rep.raw_records = len(rows)
    out: List[Conversation] = []
    for conv_id, image, q in rows:
        kwargs: Dict[str, Any] = {"conv_id": conv_id, "source": entry.name, "image": image,
                                  "augment": entry.augment}
        if entry.format_prompt is not None:
            out.extend(augment_mc(q, entry.format_prompt, **kwargs))
        else:
            out.extend(augment_mc(q, **kwargs))
    return out


def _caption(
    entry: DatasetEntry, seeds: _Seeds, rep: DatasetReport, **_: Any
) -> List[Conversation]:
    rows = ingest.load_captions(entry.path, dataset=entry.name)
    rep.raw_records = len(rows)
    prompt = entry.format_prompt or CAPTION_PROMPT
    return [
        Conversation(
            id=f"{entry.name}_{i:07d}",
            source=entry.name,
            modality="visual",
            image=image,
            turns=pairs_to_turns([(prompt, caption)]),
        )
        for i, (image, caption) in enumerate(rows)
    ]


def _region(
    entry: DatasetEntry, seeds: _Seeds, rep: DatasetReport, **_: Any
) -> List[Conversation]:
    anns = ingest.load_regions(entry.path, dataset=entry.name)
    rep.raw_records = len(anns)
    convs: List[Conversation] = []
    for i, (image, group) in enumerate(ingest.group_by_image(anns)):
        if entry.per_image_cap is not None:
            group = cap_sample(group, entry.per_image_cap, seeds.next())
        pairs = [region_pair(a, REGION_DIRECTIONS[seeds.coin()]) for a in group]
        convs.append(
            Conversation(
                id=f"{entry.name}_{i:07d}",
                source=entry.name,
                modality="visual",
                image=image,
                turns=pairs_to_turns(pairs),
            )
        )
    convs = _chunk(convs, entry.chunk_max_rounds)
    return _apply_prompt(convs, entry.format_prompt)


def _visual_chat(
    entry: DatasetEntry, seeds: _Seeds, rep: DatasetReport, **_: Any
) -> List[Conversation]:
    convs = ingest.load_visual_chats(entry.path, dataset=entry.name)
    rep.raw_records = len(convs)
    convs = _chunk(convs, entry.chunk_max_rounds)
    return _apply_prompt(convs, entry.format_prompt)


def _text_chat(
    entry: DatasetEntry,
    seeds: _Seeds,
    rep: DatasetReport,
    *,
    counter: TokenCounter,
    token_limit: int,
) -> List[Conversation]:
    convs, unusable = ingest.load_text_chats(entry.path, dataset=entry.name)
    rep.raw_records = len(convs) + unusable
    rep.filtered = unusable

    out: List[Conversation] = []
    for conv in convs:
        if not filter_text_chat(conv):
            rep.filtered += 1
            continue
        conv = drop_dangling_turn(conv)
        # the prompt counts against the token limit
        if entry.format_prompt is not None:
            conv = inject_format_prompt(conv, entry.format_prompt)
        kept = truncate(conv, counter, token_limit)
        if kept is None:
            rep.dropped_by_truncation += 1
            continue
        if kept is not conv:
            rep.truncated += 1
        out.append(kept)
    return out


_KIND_RULES = {
    "vqa_short": _vqa_short,
    "mc": _mc,
    "caption": _caption,
    "region": _region,
    "visual_chat": _visual_chat,
    "text_chat": _text_chat,
}


def build_dataset(
    entry: DatasetEntry,
    *,
    seed: int,
    counter: TokenCounter,
    token_limit: int,
) -> tuple[List[Conversation], DatasetReport]:
    """Run one dataset's rule chain; `cap` is applied last."""
    rule = _KIND_RULES.get(entry.kind)
    if rule is None:
        raise ManifestError(f"unknown dataset kind {entry.kind!r}", location=f"{entry.name}.kind")

    seeds = _Seeds(seed, entry.name)
    rep = DatasetReport(name=entry.name, kind=entry.kind)
    convs = rule(entry, seeds, rep, counter=counter, token_limit=token_limit)

    if entry.cap is not None:
        before = len(convs)
        convs = cap_sample(convs, entry.cap, seeds.next())
        rep.capped_away = before - len(convs)

    rep.emitted = len(convs)
    logger.info(
        "Dataset %s (%s): %d raw -> %d conversations (filtered=%d, truncated=%d, capped=%d)",
        entry.name, entry.kind, rep.raw_records, rep.emitted, rep.filtered, rep.truncated,
        rep.capped_away,
    )
    return convs, rep


def compile_mixture(
    manifest: MixtureManifest,
    *,
    counter: Optional[TokenCounter] = None,
    n_jobs: int = 1,
) -> CompileResult:
    counter = counter or WhitespaceTokenCounter()
    # results come back in manifest order regardless of completion order
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(build_dataset)(
            entry, seed=manifest.seed, counter=counter, token_limit=manifest.token_limit
        )
        for entry in manifest.datasets
    )

    combined: List[Conversation] = []
    reports: List[DatasetReport] = []
    for convs, rep in results:
        combined.extend(convs)
        reports.append(rep)

    order = np.random.default_rng(manifest.seed).permutation(len(combined))
    shuffled = [combined[int(i)] for i in order]
    logger.info("Compiled mixture: %d conversations from %d datasets", len(shuffled), len(reports))
    return CompileResult(conversations=shuffled, datasets=reports)


def compile(manifest: MixtureManifest, **kwargs: Any) -> List[Conversation]:  # noqa: A001
    return compile_mixture(manifest, **kwargs).conversations


def subsample_size(n: int, ratio: float) -> int:
    # round half up
    return int(math.floor(ratio * n + 0.5))


def subsample(mixture: Sequence[Conversation], ratio: float, seed: int) -> List[Conversation]:
    """Uniform subset of round(ratio * N) conversations, original relative order kept."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    k = subsample_size(len(mixture), ratio)
    if k == 0:
        return []
    return cap_sample(mixture, k, seed)


# ---- stats ------------------------------------------------------------------


@dataclass
class MixtureStats:
    total: int
    per_source: Dict[str, int]
    per_modality: Dict[str, int]
    histogram: Dict[int, int]
    max_tokens: int
    length: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["histogram"] = {str(k): v for k, v in self.histogram.items()}
        return out


def _basic_length_stats(lengths: np.ndarray) -> Dict[str, Any]:
    """count/mean/p50/p90/p99; None values when there is nothing to summarise."""
    n = int(len(lengths))
    if n == 0:
        return {"count": 0, "mean": None, "p50": None, "p90": None, "p99": None}

    return {
        "count": n,
        "mean": round(float(np.mean(lengths)), 3),
        "p50": float(np.percentile(lengths, 50)),
        "p90": float(np.percentile(lengths, 90)),
        "p99": float(np.percentile(lengths, 99)),
    }


def stats(mixture: Sequence[Conversation], counter: Optional[TokenCounter] = None) -> MixtureStats:
    counter = counter or WhitespaceTokenCounter()
    df = pd.DataFrame(
        {
            "source": [c.source for c in mixture],
            "modality": [c.modality for c in mixture],
            "tokens": [conversation_tokens(c, counter) for c in mixture],
        },
        columns=["source", "modality", "tokens"],
    )
    lengths = df["tokens"].to_numpy(dtype=np.int64)

    per_modality = {"visual": 0, "text": 0}
    per_modality.update({str(k): int(v) for k, v in Counter(df["modality"]).items()})
    buckets = Counter(int(t) // HISTOGRAM_BUCKET * HISTOGRAM_BUCKET for t in lengths)

    return MixtureStats(
        total=len(df),
        per_source={str(k): int(v) for k, v in sorted(Counter(df["source"]).items())},
        per_modality=per_modality,
        histogram=dict(sorted(buckets.items())),
        max_tokens=int(lengths.max()) if len(lengths) else 0,
        length=_basic_length_stats(lengths),
    )
