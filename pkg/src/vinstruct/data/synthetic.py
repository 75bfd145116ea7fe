"""Synthetic raw inputs shaped like the 665K visual instruction mixture.

`write_reference_fixture` writes one raw file per dataset plus a manifest whose
compiled per-dataset counts are known exactly in advance, so the mixture
rules can be checked end to end without the real corpora.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List

import numpy as np
import pandas as pd

from vinstruct.data.datastore import canonical_line, write_manifest
from vinstruct.data.rules import (
    CAPTION_PROMPT,
    DEFAULT_CHUNK_MAX_ROUNDS,
    OPTION_LETTER_PROMPT,
    SHORT_ANSWER_PROMPT,
)
from vinstruct.data.schema import DatasetEntry, MixtureManifest

logger = logging.getLogger(__name__)

# Compiled conversation counts of the full mixture (sum 665,000).
REFERENCE_SIZES: Dict[str, int] = {
    "llava_instruct": 158_400,
    "sharegpt": 40_400,
    "vqav2": 83_200,
    "gqa": 72_000,
    "okvqa": 9_000,
    "ocrvqa": 80_000,
    "aokvqa": 66_000,
    "textcaps": 22_000,
    "refcoco": 48_000,
    "vg": 86_000,
}

VG_PER_IMAGE_CAP = 10
TOKEN_LIMIT = 2048

_WORDS = (
    "red", "blue", "green", "small", "large", "dog", "cat", "car", "tree", "sign",
    "person", "table", "window", "left", "right", "top", "bottom", "two", "three", "white",
)


@dataclass(frozen=True)
class SyntheticFixture:
    manifest_path: Path
    expected: Dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.expected.values())


def scaled_size(base: int, scale: float) -> int:
    # round half up, never below one conversation
    return max(1, int(math.floor(base * scale + 0.5)))


def _phrase(i: int, n: int) -> str:
    return " ".join(_WORDS[(i + k * 7) % len(_WORDS)] for k in range(n))


def _image_dims(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.integers(64, 2049, size=n), rng.integers(64, 2049, size=n)


def _write_table(rows: List[Dict[str, Any]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    pd.DataFrame(rows).to_json(path, orient="records", lines=True, force_ascii=False)


def _write_chat(records: Iterable[Dict[str, Any]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for rec in records:
            f.write(canonical_line(rec) + "\n")


# ---- per-kind raw writers ----------------------------------------------------


def _vqa_rows(
    name: str, n_images: int, rng: np.random.Generator, qa_per_image: int
) -> List[Dict[str, Any]]:
    widths, heights = _image_dims(rng, n_images)
    rows = []
    for i in range(n_images):
        for j in range(1 + (i % qa_per_image)):
            rows.append({
                "image": f"{name}/{i:07d}.jpg",
                "width": int(widths[i]),
                "height": int(heights[i]),
                "question": f"What is the {_phrase(i + j, 2)} in the picture?",
                "answer": _WORDS[(i * 3 + j) % len(_WORDS)],
            })
    return rows


def _mc_rows(name: str, target: int, rng: np.random.Generator) -> List[Dict[str, Any]]:
    # every question expands to one conversation per choice
    n_choices = [4] * (target // 4)
    rem = target % 4
    if rem == 1:
        if n_choices:
            n_choices[-1] = 5
        else:
            n_choices = [2]  # smallest valid question; count reported as 2
    elif rem:
        n_choices.append(rem)

    widths, heights = _image_dims(rng, len(n_choices))
    rows = []
    for i, k in enumerate(n_choices):
        rows.append({
            "id": f"q{i:07d}",
            "image": f"{name}/{i:07d}.jpg",
            "width": int(widths[i]),
            "height": int(heights[i]),
            "question": f"Which object is {_phrase(i, 2)}?",
            "choices": [f"{_WORDS[(i + c) % len(_WORDS)]} {c}" for c in range(k)],
            "answer_index": int(rng.integers(k)),
        })
    return rows


def _caption_rows(name: str, n: int, rng: np.random.Generator) -> List[Dict[str, Any]]:
    widths, heights = _image_dims(rng, n)
    return [
        {
            "image": f"{name}/{i:07d}.jpg",
            "width": int(widths[i]),
            "height": int(heights[i]),
            "caption": f"A {_phrase(i, 3)} next to a sign that reads {i}.",
        }
        for i in range(n)
    ]


def _region_row(name: str, i: int, j: int, w: int, h: int) -> Dict[str, Any]:
    x1 = (j * 37) % max(1, w // 2)
    y1 = (j * 53) % max(1, h // 2)
    return {
        "image": f"{name}/{i:07d}.jpg",
        "width": w,
        "height": h,
        "bbox": [x1, y1, x1 + max(1, w // 4), y1 + max(1, h // 4)],
        "phrase": _phrase(i + j, 3),
    }


def _refcoco_rows(
    name: str, target: int, rng: np.random.Generator, max_rounds: int
) -> List[Dict[str, Any]]:
    """Images whose annotations chunk into exactly `target` conversations."""
    rows: List[Dict[str, Any]] = []
    produced = 0
    i = 0
    while produced < target:
        w, h = (int(v) for v in rng.integers(64, 2049, size=2))
        n_ann = 1 + (i % max_rounds)
        if i % 4 == 3 and target - produced >= 2:
            # spills into a second chunk
            n_ann += max_rounds
        rows.extend(_region_row(name, i, j, w, h) for j in range(n_ann))
        produced += math.ceil(n_ann / max_rounds)
        i += 1
    return rows


def _vg_rows(name: str, n_images: int, rng: np.random.Generator) -> List[Dict[str, Any]]:
    widths, heights = _image_dims(rng, n_images)
    rows = []
    for i in range(n_images):
        for j in range(3 + (i % 12)):
            rows.append(_region_row(name, i, j, int(widths[i]), int(heights[i])))
    return rows


def _visual_chats(name: str, n: int, rng: np.random.Generator) -> Iterable[Dict[str, Any]]:
    widths, heights = _image_dims(rng, n)
    for i in range(n):
        turns = []
        for r in range(1 + (i % 3)):
            turns.append({"role": "human", "text": f"Describe the {_phrase(i + r, 2)} in detail."})
            turns.append({"role": "gpt", "text": f"The image shows {_phrase(i * 2 + r, 6)}."})
        yield {
            "id": f"{name}_{i:07d}",
            "image": {"ref": f"{name}/{i:07d}.jpg", "width": int(widths[i]),
                      "height": int(heights[i])},
            "turns": turns,
        }


def _long(words: int, seed: int) -> str:
    return " ".join(_WORDS[(seed + k) % len(_WORDS)] for k in range(words))


def _text_chats(name: str, n_valid: int) -> List[Dict[str, Any]]:
    """Valid chats (some truncated, some with a dangling turn) plus records the filters reject."""
    records: List[Dict[str, Any]] = []
    for i in range(n_valid):
        if i % 50 == 49:
            # 12 pairs of 200 tokens; truncation keeps the first 10
            turns = []
            for r in range(12):
                turns.append({"role": "human", "text": _long(100, i + r)})
                turns.append({"role": "gpt", "text": _long(100, i + r + 1)})
        else:
            turns = [
                {"role": "user" if i % 2 else "human", "text": f"Tell me about {_phrase(i, 2)}."},
                {"role": "gpt", "text": f"Here is what I know: {_phrase(i + 1, 5)}."},
            ]
            if i % 37 == 0:
                turns.append({"role": "human", "text": "And then?"})
        records.append({"id": f"{name}_{i:07d}", "turns": turns})

    n_bad = max(1, n_valid // 100)
    for b in range(n_bad):
        rid = f"{name}_bad_{b:05d}"
        if b % 3 == 0:
            turns = [{"role": "gpt", "text": "Hello."}, {"role": "human", "text": "Hi."}]
        elif b % 3 == 1:
            turns = [{"role": "system", "text": "Be nice."}, {"role": "gpt", "text": "Ok."}]
        else:
            turns = [{"role": "human", "text": "  "}, {"role": "gpt", "text": "Empty question."}]
        records.append({"id": rid, "turns": turns})

    n_oversized = max(1, n_valid // 200)
    for b in range(n_oversized):
        records.append({
            "id": f"{name}_long_{b:05d}",
            "turns": [
                {"role": "human", "text": _long(TOKEN_LIMIT + 10, b)},
                {"role": "gpt", "text": "Too long to keep."},
            ],
        })

    # interleave rejects among valid records, deterministically
    order = np.random.default_rng(len(records)).permutation(len(records))
    return [records[int(i)] for i in order]


# ---- fixture ---------------------------------------------------------------------


def write_reference_fixture(
    out_dir: str | Path, scale: float = 1.0, seed: int = 0
) -> SyntheticFixture:
    """Write raw inputs for every mixture dataset plus `manifest.yaml`.

    The returned `expected` maps dataset name to the number of conversations
    compiling the manifest must emit for it.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    out = Path(out_dir)
    raw = out / "raw"
    rng = np.random.default_rng(seed)
    target = {name: scaled_size(base, scale) for name, base in REFERENCE_SIZES.items()}
    expected = dict(target)

    _write_chat(_visual_chats("llava_instruct", target["llava_instruct"], rng),
                raw / "llava_instruct.jsonl")
    _write_chat(_text_chats("sharegpt", target["sharegpt"]), raw / "sharegpt.jsonl")

    _write_table(_vqa_rows("vqav2", target["vqav2"], rng, qa_per_image=10), raw / "vqav2.jsonl")
    _write_table(_vqa_rows("gqa", target["gqa"], rng, qa_per_image=8), raw / "gqa.jsonl")
    _write_table(_vqa_rows("okvqa", target["okvqa"], rng, qa_per_image=2), raw / "okvqa.jsonl")
    # more images than the cap keeps
    ocr_images = target["ocrvqa"] + max(1, target["ocrvqa"] // 4)
    _write_table(_vqa_rows("ocrvqa", ocr_images, rng, qa_per_image=5), raw / "ocrvqa.jsonl")

    mc = _mc_rows("aokvqa", target["aokvqa"], rng)
    expected["aokvqa"] = sum(len(r["choices"]) for r in mc)
    _write_table(mc, raw / "aokvqa.jsonl")

    _write_table(_caption_rows("textcaps", target["textcaps"], rng), raw / "textcaps.jsonl")
    _write_table(_refcoco_rows("refcoco", target["refcoco"], rng, DEFAULT_CHUNK_MAX_ROUNDS),
                 raw / "refcoco.jsonl")
    _write_table(_vg_rows("vg", target["vg"], rng), raw / "vg.jsonl")

    def entry(name: str, kind: str, **kw: Any) -> DatasetEntry:
        return DatasetEntry(name=name, kind=kind, path=Path("raw") / f"{name}.jsonl", **kw)

    manifest = MixtureManifest(
        seed=seed,
        token_limit=TOKEN_LIMIT,
        datasets=(
            entry("llava_instruct", "visual_chat"),
            entry("sharegpt", "text_chat"),
            entry("vqav2", "vqa_short", format_prompt=SHORT_ANSWER_PROMPT),
            entry("gqa", "vqa_short", format_prompt=SHORT_ANSWER_PROMPT),
            entry("okvqa", "vqa_short", format_prompt=SHORT_ANSWER_PROMPT),
            entry("ocrvqa", "vqa_short", format_prompt=SHORT_ANSWER_PROMPT,
                  cap=target["ocrvqa"]),
            entry("aokvqa", "mc", format_prompt=OPTION_LETTER_PROMPT, augment=True),
            entry("textcaps", "caption", format_prompt=CAPTION_PROMPT),
            entry("refcoco", "region", chunk_max_rounds=DEFAULT_CHUNK_MAX_ROUNDS),
            entry("vg", "region", per_image_cap=VG_PER_IMAGE_CAP),
        ),
    )
    manifest_path = out / "manifest.yaml"
    write_manifest(manifest, manifest_path)
    logger.info("Wrote synthetic fixture to %s (%d expected conversations)", out,
                sum(expected.values()))
    return SyntheticFixture(manifest_path=manifest_path, expected=expected)
