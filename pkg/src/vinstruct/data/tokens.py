from __future__ import annotations

from functools import cached_property
from typing import Protocol, runtime_checkable

from vinstruct.data.schema import Conversation


@runtime_checkable
class TokenCounter(Protocol):
    """count("") == 0 and count(a + b) >= max(count(a), count(b))."""

    def count(self, text: str) -> int: ...


class WhitespaceTokenCounter:
    """Default counter: whitespace-split tokens."""

    def count(self, text: str) -> int:
        return len(text.split())


class HFTokenCounter:
    """Counts with a Hugging Face tokenizer (requires the `hf` extra)."""

    def __init__(self, name_or_path: str) -> None:
        self.name_or_path = name_or_path

    @cached_property
    def _tokenizer(self):  # type: ignore[no-untyped-def]
        from transformers import AutoTokenizer

        return AutoTokenizer.from_pretrained(self.name_or_path)

    def count(self, text: str) -> int:
        if not text:
            return 0
        return len(self._tokenizer(text, add_special_tokens=False)["input_ids"])


def make_counter(name: str | None) -> TokenCounter:
    if name is None or name == "whitespace":
        return WhitespaceTokenCounter()
    return HFTokenCounter(name)


def conversation_tokens(conv: Conversation, counter: TokenCounter) -> int:
    return sum(counter.count(t.text) for t in conv.turns)
