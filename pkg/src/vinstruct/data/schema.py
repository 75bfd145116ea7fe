from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator

from vinstruct.tiling.geometry import ImageDim

Role = Literal["human", "assistant"]
Modality = Literal["visual", "text"]
DatasetKind = Literal["vqa_short", "mc", "caption", "region", "visual_chat", "text_chat"]

# Aliases accepted on read, normalized to human/assistant.
ROLE_ALIASES: Dict[str, Role] = {
    "human": "human",
    "user": "human",
    "assistant": "assistant",
    "gpt": "assistant",
}

MAX_SEED = 2**64 - 1


class Turn(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    role: Role
    text: str


class ImageRef(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    ref: str = Field(..., min_length=1, description="Path or URI of the image")
    width: PositiveInt
    height: PositiveInt

    @property
    def dim(self) -> ImageDim:
        return ImageDim(width=self.width, height=self.height)


class Conversation(BaseModel):
    """One training sample.

    Structural invariants (alternation, even length, modality/image agreement)
    are checked by `vinstruct.data.validate`, so that raw inputs can be held and
    filtered before they are known to be valid.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str = Field(..., min_length=1)
    source: str
    modality: Modality
    image: Optional[ImageRef] = None
    turns: Tuple[Turn, ...]

    @property
    def pairs(self) -> List[Tuple[Turn, Turn]]:
        return [(self.turns[i], self.turns[i + 1]) for i in range(0, len(self.turns) - 1, 2)]

    def to_record(self) -> Dict[str, Any]:
        rec: Dict[str, Any] = {
            "id": self.id,
            "source": self.source,
            "modality": self.modality,
            "turns": [{"role": t.role, "text": t.text} for t in self.turns],
        }
        if self.image is not None:
            rec["image"] = {
                "ref": self.image.ref,
                "width": self.image.width,
                "height": self.image.height,
            }
        return rec


class DatasetEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(..., min_length=1)
    kind: DatasetKind
    path: Path
    format_prompt: Optional[str] = None
    cap: Optional[PositiveInt] = None
    per_image_cap: Optional[PositiveInt] = None
    chunk_max_rounds: Optional[PositiveInt] = None
    augment: bool = False

    @field_validator("format_prompt")
    @classmethod
    def _prompt_not_blank(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and not v.strip():
            raise ValueError("format_prompt must be non-empty when given")
        return v


class MixtureManifest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(..., ge=0, le=MAX_SEED)
    token_limit: PositiveInt = 2048
    datasets: Tuple[DatasetEntry, ...] = Field(..., min_length=1)

    @field_validator("datasets")
    @classmethod
    def _unique_names(cls, datasets: Tuple[DatasetEntry, ...]) -> Tuple[DatasetEntry, ...]:
        seen: set[str] = set()
        for d in datasets:
            if d.name in seen:
                raise ValueError(f"Duplicate dataset name: {d.name!r}")
            seen.add(d.name)
        return datasets
