"""Response-format prompts appended to benchmark questions at evaluation time."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import yaml

from vinstruct.data.rules import OPTION_LETTER_PROMPT, SHORT_ANSWER_PROMPT
from vinstruct.errors import ManifestError, UnknownBenchmarkError

UNANSWERABLE_PROMPT = (
    "When the provided information is insufficient, respond with `Unanswerable'. "
    + SHORT_ANSWER_PROMPT
)


@dataclass(frozen=True)
class BenchmarkRule:
    benchmark: str
    prompt: Optional[str] = None


DEFAULT_RULES = (
    BenchmarkRule("LLaVA-Bench"),
    BenchmarkRule("MM-Vet"),
    BenchmarkRule("VQAv2", SHORT_ANSWER_PROMPT),
    BenchmarkRule("GQA", SHORT_ANSWER_PROMPT),
    BenchmarkRule("TextVQA", SHORT_ANSWER_PROMPT),
    BenchmarkRule("MME", SHORT_ANSWER_PROMPT),
    BenchmarkRule("POPE", SHORT_ANSWER_PROMPT),
    BenchmarkRule("ScienceQA", OPTION_LETTER_PROMPT),
    BenchmarkRule("MMBench", OPTION_LETTER_PROMPT),
    BenchmarkRule("SEED-Bench", OPTION_LETTER_PROMPT),
    BenchmarkRule("VizWiz", UNANSWERABLE_PROMPT),
)


class PromptRegistry:
    """Benchmark name -> optional prompt. Read-only once built."""

    def __init__(self, rules: Iterable[BenchmarkRule] = DEFAULT_RULES) -> None:
        self._rules: Dict[str, BenchmarkRule] = {}
        for rule in rules:
            if rule.benchmark in self._rules:
                raise ValueError(f"Duplicate benchmark in registry: {rule.benchmark!r}")
            if rule.prompt is not None and not rule.prompt.strip():
                raise ValueError(f"Empty prompt for benchmark {rule.benchmark!r}; use null")
            self._rules[rule.benchmark] = rule

    def __contains__(self, benchmark: object) -> bool:
        return benchmark in self._rules

    def __len__(self) -> int:
        return len(self._rules)

    @property
    def rules(self) -> List[BenchmarkRule]:
        return list(self._rules.values())

    def prompt(self, benchmark: str) -> Optional[str]:
        try:
            return self._rules[benchmark].prompt
        except KeyError:
            raise UnknownBenchmarkError(benchmark) from None

    def apply(self, question: str, benchmark: str) -> str:
        prompt = self.prompt(benchmark)
        if prompt is None:
            return question
        return f"{question}\n{prompt}"

    # ---- yaml ----

    def to_dict(self) -> Dict[str, Any]:
        return {"benchmarks": [{"benchmark": r.benchmark, "prompt": r.prompt} for r in self.rules]}

    def to_yaml(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True, width=1000),
            encoding="utf-8",
        )

    @classmethod
    def from_dict(cls, data: Any) -> "PromptRegistry":
        if not isinstance(data, dict) or not isinstance(data.get("benchmarks"), list):
            raise ManifestError("registry must be a mapping with a 'benchmarks' list",
                                location="benchmarks")
        rules = []
        for i, item in enumerate(data["benchmarks"]):
            if not isinstance(item, dict) or set(item) - {"benchmark", "prompt"}:
                raise ManifestError("expected {benchmark, prompt}", location=f"benchmarks.{i}")
            name, prompt = item.get("benchmark"), item.get("prompt")
            if not isinstance(name, str) or not name:
                raise ManifestError("benchmark must be a non-empty string",
                                    location=f"benchmarks.{i}.benchmark")
            if prompt is not None and not isinstance(prompt, str):
                raise ManifestError("prompt must be a string or null",
                                    location=f"benchmarks.{i}.prompt")
            rules.append(BenchmarkRule(name, prompt))
        try:
            return cls(rules)
        except ValueError as e:
            raise ManifestError(str(e), location="benchmarks") from e

    @classmethod
    def from_yaml(cls, path: str | Path) -> "PromptRegistry":
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ManifestError(f"invalid YAML ({e})") from e
        return cls.from_dict(data)


DEFAULT_REGISTRY = PromptRegistry()


def eval_prompt(benchmark: str, registry: PromptRegistry = DEFAULT_REGISTRY) -> Optional[str]:
    return registry.prompt(benchmark)


def apply_eval_prompt(
    question: str, benchmark: str, registry: PromptRegistry = DEFAULT_REGISTRY
) -> str:
    """Question unchanged when the benchmark has no prompt, else question + "\\n" + prompt."""
    return registry.apply(question, benchmark)
