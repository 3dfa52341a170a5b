"""Prompt construction for URL generation, answer reading, and URL reconstruction.

Every piece of template wording lives in PromptTemplates so that prompts are
byte-stable: recorded completions are keyed on the exact prompt text, and any
wording change must invalidate them loudly instead of silently reusing stale
outputs. Retrieval prompts always end with the URL prefix (no trailing
newline) so the model continues straight into a URL.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from urllib.parse import urlsplit

WIKIPEDIA_URL_PREFIX = "https://en.wikipedia.org/wiki"


@dataclass(frozen=True)
class PromptTemplates:
    question_label: str = "Question: "
    retrieval_instruction: str = "Which {m} Wikipedia URLs would have the answer?"
    passage_label: str = "Passage {index}: "
    answer_label: str = "Answer:"
    excerpt_label: str = "Passage: "
    reconstruction_instruction: str = "Which Wikipedia URL did this passage come from?"

    @classmethod
    def from_file(cls, path) -> "PromptTemplates":
        """Load overrides from a JSON file; unknown keys are rejected."""
        with open(path, encoding="utf-8") as fh:
            overrides = json.load(fh)
        return replace(cls(), **overrides)


DEFAULT_TEMPLATES = PromptTemplates()


def _is_absolute_url(url: str) -> bool:
    parts = urlsplit(url)
    return parts.scheme in ("http", "https") and bool(parts.netloc)


@dataclass
class Question:
    id: str
    text: str
    gold_answers: list[str]

    def __post_init__(self):
        if not self.text:
            raise ValueError("question text must be non-empty")
        if not self.gold_answers or any(not a for a in self.gold_answers):
            raise ValueError("gold_answers must be a non-empty list of non-empty strings")


@dataclass
class Demonstration:
    """A worked (question, URLs) example prepended to few-shot prompts."""

    question_text: str
    urls: list[str]

    def __post_init__(self):
        if not self.urls:
            raise ValueError("a demonstration needs at least one URL")
        for url in self.urls:
            if not _is_absolute_url(url):
                raise ValueError(f"demonstration URL is not absolute: {url!r}")


@dataclass
class RetrievalPromptSpec:
    m: int = 10
    demonstrations: list[Demonstration] = field(default_factory=list)
    url_prefix: str = WIKIPEDIA_URL_PREFIX

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")


def build_retrieval_prompt(question: Question, spec: RetrievalPromptSpec,
                           templates: PromptTemplates | None = None) -> str:
    """Render the URL-generation prompt.

    Demonstrations come first (question line, instruction line, URLs one per
    line), then the target question and instruction, and finally the URL
    prefix as the very last characters so generation continues the URL.
    """
    t = templates or DEFAULT_TEMPLATES
    instruction = t.retrieval_instruction.format(m=spec.m)
    blocks = []
    for demo in spec.demonstrations:
        lines = [f"{t.question_label}{demo.question_text}", instruction] + list(demo.urls)
        blocks.append("\n".join(lines))
    blocks.append(f"{t.question_label}{question.text}\n{instruction}\n{spec.url_prefix}")
    return "\n\n".join(blocks)


def build_reader_prompt(question: Question, passages: list[str],
                        templates: PromptTemplates | None = None) -> str:
    """Render the answering prompt: indexed passages in rank order, then the
    question and a one-line answer cue. With no passages (closed-book) the
    prompt is just the question and the cue."""
    t = templates or DEFAULT_TEMPLATES
    tail = f"{t.question_label}{question.text}\n{t.answer_label}"
    if not passages:
        return tail
    lines = [t.passage_label.format(index=i) + text for i, text in enumerate(passages, start=1)]
    return "\n".join(lines) + "\n\n" + tail


def build_reconstruction_prompt(excerpt: str, url_prefix: str = WIKIPEDIA_URL_PREFIX,
                                templates: PromptTemplates | None = None) -> str:
    """Prompt asking which article URL an excerpt came from, seeded with the
    URL prefix like the retrieval prompt."""
    t = templates or DEFAULT_TEMPLATES
    return f"{t.excerpt_label}{excerpt}\n{t.reconstruction_instruction}\n{url_prefix}"


def sample_demonstrations(records, d: int = 10, seed: int = 13) -> list[Demonstration]:
    """Pick d demonstrations uniformly without replacement from training
    records that carry gold URLs (records without them are ineligible)."""
    eligible = [r for r in records if getattr(r, "gold_urls", None)]
    if len(eligible) < d:
        raise ValueError(
            f"need {d} training questions with gold URLs, only {len(eligible)} available")
    rng = random.Random(seed)
    picked = rng.sample(eligible, d)
    return [Demonstration(r.question, list(r.gold_urls)) for r in picked]
