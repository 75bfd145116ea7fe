"""Per-dataset transformation rules used when compiling the mixture.

Every function is pure; anything random takes an explicit seed.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple, TypeVar

import numpy as np

from vinstruct.data.schema import Conversation, ImageRef, Turn
from vinstruct.data.tokens import TokenCounter
from vinstruct.data.validate import chat_errors

SHORT_ANSWER_PROMPT = "Answer the question using a single word or phrase."
OPTION_LETTER_PROMPT = "Answer with the option's letter from the given choices directly."
CAPTION_PROMPT = "Provide a one-sentence caption for the provided image."
REGION_TO_TEXT_PROMPT = "Provide a short description for this region."
TEXT_TO_BBOX_PROMPT = "Provide the bounding box coordinate of the region this sentence describes."

DEFAULT_CHUNK_MAX_ROUNDS = 9

RegionDirection = Literal["region_to_text", "text_to_bbox"]
REGION_DIRECTIONS: Tuple[RegionDirection, ...] = ("region_to_text", "text_to_bbox")

T = TypeVar("T")


@dataclass(frozen=True)
class QARecord:
    image: ImageRef
    question: str
    answer: str


@dataclass(frozen=True)
class MCQuestion:
    question: str
    choices: Tuple[str, ...]
    answer_index: int

    def __post_init__(self) -> None:
        n = len(self.choices)
        if n < 2:
            raise ValueError(f"Multiple-choice question needs >= 2 choices, got {n}")
        if n > len(string.ascii_uppercase):
            raise ValueError("Multiple-choice question has more choices than option letters")
        if not 0 <= self.answer_index < len(self.choices):
            raise ValueError(
                f"answer_index {self.answer_index} out of range for {len(self.choices)} choices"
            )


@dataclass(frozen=True)
class RegionAnnotation:
    image: ImageRef
    bbox: Tuple[float, float, float, float]
    phrase: str

    def __post_init__(self) -> None:
        x1, y1, x2, y2 = self.bbox
        if not (0 <= x1 < x2 <= self.image.width and 0 <= y1 < y2 <= self.image.height):
            raise ValueError(
                f"Degenerate bbox {self.bbox} for image {self.image.width}x{self.image.height}"
            )


def pairs_to_turns(pairs: Sequence[Tuple[str, str]]) -> Tuple[Turn, ...]:
    turns: List[Turn] = []
    for q, a in pairs:
        turns.append(Turn(role="human", text=q))
        turns.append(Turn(role="assistant", text=a))
    return tuple(turns)


def inject_format_prompt(conv: Conversation, prompt: str) -> Conversation:
    """Append "\\n" + prompt to every human turn."""
    if not prompt or not prompt.strip():
        raise ValueError("Format prompt must be non-empty")
    turns = tuple(
        Turn(role=t.role, text=f"{t.text}\n{prompt}") if t.role == "human" else t
        for t in conv.turns
    )
    return conv.model_copy(update={"turns": turns})


def merge_qa_per_image(records: Sequence[QARecord], *, source: str) -> List[Conversation]:
    """One conversation per distinct image, QA order preserved, images in first-seen order."""
    grouped: Dict[str, Tuple[ImageRef, List[Tuple[str, str]]]] = {}
    for rec in records:
        if rec.image.ref not in grouped:
            grouped[rec.image.ref] = (rec.image, [])
        grouped[rec.image.ref][1].append((rec.question, rec.answer))

    return [
        Conversation(
            id=f"{source}_{i:07d}",
            source=source,
            modality="visual",
            image=image,
            turns=pairs_to_turns(pairs),
        )
        for i, (image, pairs) in enumerate(grouped.values())
    ]


def filter_text_chat(conv: Conversation) -> bool:
    """False for empty text, non-alternating roles, assistant-first or < 2 turns."""
    return not chat_errors(conv)


def drop_dangling_turn(conv: Conversation) -> Conversation:
    """Remove a trailing human turn with no reply."""
    if len(conv.turns) % 2 and conv.turns[-1].role == "human":
        return conv.model_copy(update={"turns": conv.turns[:-1]})
    return conv


def truncate(conv: Conversation, counter: TokenCounter, limit: int) -> Optional[Conversation]:
    """Drop trailing (human, assistant) pairs until the conversation fits `limit` tokens.

    A dangling final human turn is dropped first, so every returned turn is
    counted. Returns None when even the first pair does not fit.
    """
    if limit <= 0:
        raise ValueError("Token limit must be positive")

    conv = drop_dangling_turn(conv)
    pair_tokens = [counter.count(h.text) + counter.count(a.text) for h, a in conv.pairs]
    total = sum(pair_tokens)
    if total <= limit:
        return conv

    keep = len(pair_tokens)
    while keep > 0 and total > limit:
        keep -= 1
        total -= pair_tokens[keep]
    if keep == 0:
        return None
    return conv.model_copy(update={"turns": conv.turns[: 2 * keep]})


def _render_choices(question: str, choices: Sequence[str]) -> str:
    options = "\n".join(f"{string.ascii_uppercase[i]}. {c}" for i, c in enumerate(choices))
    return f"{question}\n{options}"


def augment_mc(
    q: MCQuestion,
    prompt: str = OPTION_LETTER_PROMPT,
    *,
    conv_id: str,
    source: str,
    image: Optional[ImageRef] = None,
    augment: bool = True,
) -> List[Conversation]:
    """Expand a multiple-choice question into k = |choices| rotated replicas.

    Replica i rotates the choices left by i, so the correct letter differs in
    every replica. With augment=False only the unrotated question is emitted.
    """
    k = len(q.choices) if augment else 1
    out: List[Conversation] = []
    for i in range(k):
        rotated = q.choices[i:] + q.choices[:i]
        letter = string.ascii_uppercase[(q.answer_index - i) % len(q.choices)]
        conv = Conversation(
            id=f"{conv_id}_r{i}" if augment else conv_id,
            source=source,
            modality="visual" if image is not None else "text",
            image=image,
            turns=pairs_to_turns([(_render_choices(q.question, rotated), letter)]),
        )
        out.append(inject_format_prompt(conv, prompt))
    return out


def cap_sample(items: Sequence[T], cap: int, seed: int) -> List[T]:
    """Uniform sample of at most `cap` items without replacement, original order kept."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    n = len(items)
    if n <= cap:
        return list(items)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=cap, replace=False))
    return [items[int(i)] for i in idx]


def chunk_rounds(
    conv: Conversation, max_rounds: int = DEFAULT_CHUNK_MAX_ROUNDS
) -> List[Conversation]:
    """Split into consecutive conversations of at most `max_rounds` QA pairs each."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    n_pairs = len(conv.turns) // 2
    if n_pairs <= max_rounds:
        return [conv]

    step = 2 * max_rounds
    return [
        conv.model_copy(update={"id": f"{conv.id}_{k}", "turns": conv.turns[start : start + step]})
        for k, start in enumerate(range(0, len(conv.turns), step))
    ]


def format_bbox(ann: RegionAnnotation) -> str:
    x1, y1, x2, y2 = ann.bbox
    w, h = ann.image.width, ann.image.height
    return f"[{x1 / w:.3f}, {y1 / h:.3f}, {x2 / w:.3f}, {y2 / h:.3f}]"


def region_pair(ann: RegionAnnotation, direction: RegionDirection) -> Tuple[str, str]:
    bbox = format_bbox(ann)
    if direction == "region_to_text":
        return f"{REGION_TO_TEXT_PROMPT.rstrip('.')}: {bbox}", ann.phrase
    if direction == "text_to_bbox":
        return f"{TEXT_TO_BBOX_PROMPT.rstrip('.')}: {ann.phrase}", bbox
    raise ValueError(f"Unknown region direction: {direction!r}")


def choose_direction(seed: int) -> RegionDirection:
    return REGION_DIRECTIONS[int(np.random.default_rng(seed).integers(2))]


def format_region(
    ann: RegionAnnotation,
    direction: Optional[RegionDirection] = None,
    seed: int = 0,
    *,
    conv_id: str,
    source: str,
) -> Conversation:
    """One region QA pair; the direction is a seeded coin flip when not given."""
    chosen = direction if direction is not None else choose_direction(seed)
    return Conversation(
        id=conv_id,
        source=source,
        modality="visual",
        image=ann.image,
        turns=pairs_to_turns([region_pair(ann, chosen)]),
    )
