"""Bit-exact file formats: record streams, manifests, plans and content hashes.

A record stream is UTF-8 JSON Lines, one conversation per line, written with
sorted keys and compact separators so equal values always give equal bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Sequence, Union

import yaml
from pydantic import ValidationError

from vinstruct.data.schema import ROLE_ALIASES, Conversation, MixtureManifest
from vinstruct.data.validate import conversation_errors
from vinstruct.errors import ManifestError, RecordError
from vinstruct.sampling.batching import Batch, BatchPlan
from vinstruct.tiling.featuremap import LayoutPlan
from vinstruct.tiling.geometry import TilingPlan

logger = logging.getLogger(__name__)

Plan = Union[TilingPlan, LayoutPlan, BatchPlan]


def canonical_line(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _loc(loc: Sequence[Union[int, str]]) -> str:
    return ".".join(str(p) for p in loc)


def normalize_roles(record: Dict[str, Any]) -> Dict[str, Any]:
    """Map accepted role aliases (e.g. "gpt") onto human/assistant; unknown roles pass through."""
    turns = record.get("turns")
    if not isinstance(turns, list):
        return record
    fixed = []
    for t in turns:
        if isinstance(t, dict) and isinstance(t.get("role"), str):
            t = {**t, "role": ROLE_ALIASES.get(t["role"].lower(), t["role"])}
        fixed.append(t)
    return {**record, "turns": fixed}


def parse_record(
    record: Any, *, source: str, index: int, index_kind: str = "line", check: bool = True
) -> Conversation:
    """Build a Conversation from a decoded record; `check` also enforces the invariants."""
    if not isinstance(record, dict):
        raise RecordError("record is not an object", source=source, index=index,
                          index_kind=index_kind)
    try:
        conv = Conversation.model_validate(normalize_roles(record))
    except ValidationError as e:
        err = e.errors()[0]
        raise RecordError(err["msg"], source=source, index=index, field=_loc(err["loc"]),
                          index_kind=index_kind) from e

    if check:
        problems = conversation_errors(conv)
        if problems:
            field, msg = problems[0]
            raise RecordError(msg, source=source, index=index, field=field,
                              index_kind=index_kind)
    return conv


def iter_json_lines(path: str | Path) -> Iterator[tuple[int, Any]]:
    """(line number, decoded object) for every non-blank line."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(f"malformed JSON ({e.msg})", source=str(path), index=line_no,
                                  index_kind="line") from e


def read_records(path: str | Path, *, check: bool = True) -> List[Conversation]:
    return [
        parse_record(obj, source=str(path), index=n, check=check)
        for n, obj in iter_json_lines(path)
    ]


def _encode(convs: Iterable[Conversation]) -> Iterator[bytes]:
    for c in convs:
        yield (canonical_line(c.to_record()) + "\n").encode("utf-8")


def content_hash(convs: Iterable[Conversation]) -> str:
    """SHA-256 over the canonical serialized stream."""
    h = hashlib.sha256()
    for chunk in _encode(convs):
        h.update(chunk)
    return h.hexdigest()


def _atomic_write(path: Path, chunks: Iterable[bytes]) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    h = hashlib.sha256()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            for chunk in chunks:
                h.update(chunk)
                f.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return h.hexdigest()


def write_json_lines(records: Iterable[Dict[str, Any]], path: str | Path) -> str:
    """Write arbitrary records as canonical JSON Lines; returns the SHA-256 hex digest."""
    return _atomic_write(Path(path), ((canonical_line(r) + "\n").encode("utf-8") for r in records))


def write_records(convs: Iterable[Conversation], path: str | Path) -> str:
    """Write a canonical record stream and return its SHA-256 hex digest."""
    digest = _atomic_write(Path(path), _encode(convs))
    logger.info("Wrote records to %s (sha256=%s)", path, digest)
    return digest


# ---- manifests ----------------------------------------------------------------


def read_manifest(path: str | Path) -> MixtureManifest:
    """Parse and schema-check a YAML manifest; dataset paths resolve against its directory."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ManifestError(f"invalid YAML ({e})") from e
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a mapping")

    try:
        manifest = MixtureManifest.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        raise ManifestError(err["msg"], location=_loc(err["loc"])) from e

    base = path.parent
    datasets = tuple(
        d if d.path.is_absolute() else d.model_copy(update={"path": base / d.path})
        for d in manifest.datasets
    )
    return manifest.model_copy(update={"datasets": datasets})


def manifest_to_dict(manifest: MixtureManifest) -> Dict[str, Any]:
    out = manifest.model_dump(mode="json", exclude_none=True)
    for d in out["datasets"]:
        if not d.get("augment"):
            d.pop("augment", None)
    return out


def write_manifest(manifest: MixtureManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        yaml.safe_dump(manifest_to_dict(manifest), sort_keys=False, allow_unicode=True),
        encoding="utf-8",
    )


# ---- plans --------------------------------------------------------------------


def plan_lines(plan: Plan) -> List[str]:
    if isinstance(plan, BatchPlan):
        return [canonical_line(b.to_record()) for b in plan.batches]
    return [canonical_line(plan.to_record())]


def write_plan(plan: Plan, path: str | Path) -> str:
    """Tiling/layout plans are one JSON line; batch plans one line per batch."""
    return _atomic_write(Path(path), ((line + "\n").encode("utf-8") for line in plan_lines(plan)))


def read_batch_plan(path: str | Path, *, batch_size: int, seed: int) -> BatchPlan:
    batches = []
    for line_no, obj in iter_json_lines(path):
        try:
            batches.append(
                Batch(index=int(obj["batch_index"]), modality=obj["modality"],
                      ids=tuple(obj["ids"]))
            )
        except (KeyError, TypeError, ValueError) as e:
            raise RecordError(f"bad batch record ({e})", source=str(path), index=line_no,
                              index_kind="line") from e
    return BatchPlan(batch_size=batch_size, seed=seed, batches=tuple(batches))
