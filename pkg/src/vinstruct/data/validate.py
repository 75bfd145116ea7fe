from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from vinstruct.data.schema import Conversation


@dataclass
class ValidationResult:
    passed: bool
    errors: List[str]
    stats: Dict[str, Any]
    meta: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def conversation_errors(
    conv: Conversation, *, require_even: bool = True
) -> List[Tuple[str, str]]:
    """Structural problems with a conversation as (field, message) pairs.

    Empty means the conversation satisfies every record invariant.
    """
    errors: List[Tuple[str, str]] = []
    turns = conv.turns

    # ---- Turn checks ----
    if len(turns) < 2:
        errors.append(("turns", f"needs at least 2 turns, has {len(turns)}"))
    elif require_even and len(turns) % 2:
        errors.append(("turns", f"needs an even number of turns, has {len(turns)}"))

    if turns and turns[0].role != "human":
        errors.append(("turns", "first turn must be from human"))

    for i in range(1, len(turns)):
        if turns[i].role == turns[i - 1].role:
            errors.append(("turns", f"roles do not alternate at turn {i}"))
            break

    for i, t in enumerate(turns):
        if not t.text.strip():
            errors.append(("turns", f"turn {i} has empty text"))
            break

    # ---- Modality checks ----
    if (conv.modality == "visual") != (conv.image is not None):
        errors.append(("modality", f"modality '{conv.modality}' disagrees with image presence"))

    return errors


def chat_errors(conv: Conversation) -> List[Tuple[str, str]]:
    """The text-chat cleaning subset: everything except the even-length rule."""
    return conversation_errors(conv, require_even=False)


def validate_records(
    convs: Sequence[Conversation],
    *,
    dataset_name: str = "unknown",
    report_path: Optional[str | Path] = None,
) -> ValidationResult:
    errors: List[str] = []
    stats: Dict[str, Any] = {}

    meta: Dict[str, Any] = {
        "dataset_name": dataset_name,
        "validated_at_utc": datetime.now(timezone.utc).isoformat(),
    }

    # ---- Basic counts ----
    stats["records_total"] = len(convs)
    modality = Counter(c.modality for c in convs)
    stats["records_visual"] = int(modality.get("visual", 0))
    stats["records_text"] = int(modality.get("text", 0))

    # ---- ID checks ----
    id_counts = Counter(c.id for c in convs)
    dup_ids = sorted(i for i, n in id_counts.items() if n > 1)
    stats["id_unique"] = not dup_ids
    if dup_ids:
        errors.append(f"Duplicate ids: {dup_ids[:10]}")

    # ---- Structural checks ----
    invalid = 0
    for c in convs:
        problems = conversation_errors(c)
        if problems:
            invalid += 1
            if len(errors) < 50:
                field, msg = problems[0]
                errors.append(f"{c.id}: {field}: {msg}")
    stats["invalid_records"] = invalid

    passed = len(errors) == 0
    result = ValidationResult(passed, errors, stats, meta)

    if report_path:
        write_report(result.to_dict(), report_path)

    return result


def write_report(payload: Dict[str, Any], report_path: str | Path) -> None:
    """Write a JSON report, creating parent directories as needed."""
    path = Path(report_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.Series(payload).to_json(path, indent=2)
