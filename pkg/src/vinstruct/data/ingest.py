"""Raw dataset loaders, one per dataset kind.

Flat kinds (vqa_short, mc, caption, region) are JSON Lines tables read with
pandas; chat kinds are record streams in the datastore format.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import pandas as pd

from vinstruct.data.datastore import iter_json_lines, parse_record
from vinstruct.data.rules import MCQuestion, QARecord, RegionAnnotation
from vinstruct.data.schema import Conversation, ImageRef
from vinstruct.errors import RecordError

logger = logging.getLogger(__name__)

IMAGE_COLUMNS = ("image", "width", "height")

REQUIRED_COLUMNS: Dict[str, Set[str]] = {
    "vqa_short": {*IMAGE_COLUMNS, "question", "answer"},
    "mc": {"question", "choices", "answer_index"},
    "caption": {*IMAGE_COLUMNS, "caption"},
    "region": {*IMAGE_COLUMNS, "bbox", "phrase"},
}


def load_table(path: str | Path, *, dataset: str, kind: str) -> pd.DataFrame:
    """Read a flat JSON Lines input and check its required columns.

    Lines are decoded one by one so a malformed line is reported with its
    0-based record index.
    """
    rows: List[Dict[str, Any]] = []
    try:
        for _, obj in iter_json_lines(path):
            if not isinstance(obj, dict):
                raise RecordError("record is not an object", source=dataset, index=len(rows))
            rows.append(obj)
    except RecordError as e:
        if e.source == dataset:
            raise
        raise RecordError(f"malformed JSON on line {e.index}", source=dataset,
                          index=len(rows)) from e

    df = pd.DataFrame.from_records(rows) if rows else pd.DataFrame(
        columns=sorted(REQUIRED_COLUMNS[kind])
    )
    missing = REQUIRED_COLUMNS[kind] - set(df.columns)
    if missing:
        raise RecordError(f"missing required columns {sorted(missing)}", source=dataset,
                          field=sorted(missing)[0])
    return df


def _is_missing(value: Any) -> bool:
    return value is None or (isinstance(value, float) and pd.isna(value))


def _text(row: Dict[str, Any], key: str, *, dataset: str, index: int) -> str:
    value = row.get(key)
    if _is_missing(value) or not isinstance(value, str) or not value.strip():
        raise RecordError("expected a non-empty string", source=dataset, index=index, field=key)
    return value.strip()


def _image(row: Dict[str, Any], *, dataset: str, index: int, optional: bool = False
           ) -> Optional[ImageRef]:
    if optional and _is_missing(row.get("image")):
        return None
    try:
        return ImageRef(ref=str(row["image"]), width=int(row["width"]), height=int(row["height"]))
    except (KeyError, TypeError, ValueError) as e:
        raise RecordError(f"bad image reference ({e})", source=dataset, index=index,
                          field="image") from e


def _rows(df: pd.DataFrame) -> List[Dict[str, Any]]:
    return df.to_dict(orient="records")


def load_qa_records(path: str | Path, *, dataset: str) -> List[QARecord]:
    df = load_table(path, dataset=dataset, kind="vqa_short")
    out = []
    for i, row in enumerate(_rows(df)):
        out.append(
            QARecord(
                image=_image(row, dataset=dataset, index=i),  # type: ignore[arg-type]
                question=_text(row, "question", dataset=dataset, index=i),
                answer=_text(row, "answer", dataset=dataset, index=i),
            )
        )
    return out


def load_mc_questions(
    path: str | Path, *, dataset: str
) -> List[Tuple[str, Optional[ImageRef], MCQuestion]]:
    """(record id, optional image, question) per row."""
    df = load_table(path, dataset=dataset, kind="mc")
    out = []
    for i, row in enumerate(_rows(df)):
        choices = row.get("choices")
        if not isinstance(choices, list) or not all(isinstance(c, str) for c in choices):
            raise RecordError("expected a list of strings", source=dataset, index=i,
                              field="choices")
        try:
            q = MCQuestion(
                question=_text(row, "question", dataset=dataset, index=i),
                choices=tuple(c.strip() for c in choices),
                answer_index=int(row["answer_index"]),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, RecordError):
                raise
            raise RecordError(str(e), source=dataset, index=i, field="choices") from e
        rec_id = row.get("id")
        conv_id = f"{dataset}_{rec_id}" if not _is_missing(rec_id) else f"{dataset}_{i:07d}"
        out.append((conv_id, _image(row, dataset=dataset, index=i, optional=True), q))
    return out


def load_captions(path: str | Path, *, dataset: str) -> List[Tuple[ImageRef, str]]:
    df = load_table(path, dataset=dataset, kind="caption")
    return [
        (_image(row, dataset=dataset, index=i), _text(row, "caption", dataset=dataset, index=i))
        for i, row in enumerate(_rows(df))
    ]  # type: ignore[misc]


def load_regions(path: str | Path, *, dataset: str) -> List[RegionAnnotation]:
    df = load_table(path, dataset=dataset, kind="region")
    out = []
    for i, row in enumerate(_rows(df)):
        image = _image(row, dataset=dataset, index=i)
        bbox = row.get("bbox")
        try:
            x1, y1, x2, y2 = (float(v) for v in bbox)  # type: ignore[union-attr]
            ann = RegionAnnotation(
                image=image,  # type: ignore[arg-type]
                bbox=(x1, y1, x2, y2),
                phrase=_text(row, "phrase", dataset=dataset, index=i),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, RecordError):
                raise
            raise RecordError(str(e), source=dataset, index=i, field="bbox") from e
        out.append(ann)
    return out


def load_visual_chats(path: str | Path, *, dataset: str) -> List[Conversation]:
    """Strict: every record must already be a valid conversation."""
    convs = []
    for i, (_, obj) in enumerate(iter_json_lines(path)):
        if isinstance(obj, dict):
            obj = {**obj, "source": dataset}
            obj.setdefault("modality", "visual" if obj.get("image") else "text")
        convs.append(parse_record(obj, source=dataset, index=i, index_kind="record"))
    return convs


def load_text_chats(path: str | Path, *, dataset: str) -> Tuple[List[Conversation], int]:
    """Lenient: returns parseable conversations and the count of unusable ones.

    Structural validity is left to the text-chat filter; records whose turns
    cannot be represented at all (unknown role, wrong types) are counted as invalid.
    """
    convs: List[Conversation] = []
    unusable = 0
    for i, (_, obj) in enumerate(iter_json_lines(path)):
        if not isinstance(obj, dict):
            raise RecordError("record is not an object", source=dataset, index=i)
        obj = {**obj, "source": dataset, "modality": "text"}
        obj.pop("image", None)
        obj.setdefault("id", f"{dataset}_{i:07d}")
        try:
            convs.append(parse_record(obj, source=dataset, index=i, index_kind="record",
                                      check=False))
        except RecordError as e:
            unusable += 1
            logger.debug("Skipping unusable text chat: %s", e)
    return convs, unusable


def group_by_image(
    anns: Sequence[RegionAnnotation],
) -> List[Tuple[ImageRef, List[RegionAnnotation]]]:
    grouped: Dict[str, Tuple[ImageRef, List[RegionAnnotation]]] = {}
    for a in anns:
        grouped.setdefault(a.image.ref, (a.image, []))[1].append(a)
    return list(grouped.values())
