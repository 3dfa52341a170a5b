"""Extract candidate URLs from raw model generations and canonicalize them.

Model output is messy: numbered lists, prose around the links, trailing
punctuation, duplicates, links to the wrong domain, or strings that only
look like URLs. Everything here is pure string work; whether a URL points
at a real page is decided later by the fetcher.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from urllib.parse import unquote, urlsplit

VALID_WIKIPEDIA = "valid_wikipedia"
WRONG_DOMAIN = "wrong_domain"
INVALID_SYNTAX = "invalid_syntax"

WIKI_PATH_PREFIX = "/wiki/"

# Greedy run of plausible URL characters; trailing punctuation is trimmed
# afterwards so sentence context does not leak into the link.
_URL_RE = re.compile(r"https?://[^\s<>\"`]+", re.IGNORECASE)

_TRAILING_CHARS = ".,;:!?'\"”’…"


class InvalidSyntax(ValueError):
    """Raised when a string cannot be parsed as an absolute http(s) URL."""


@dataclass(frozen=True)
class ExtractedUrl:
    raw: str
    normalized: str
    status: str
    title: str | None = None


@dataclass
class GenerationRecord:
    """One model generation and the URLs pulled out of it, in order."""

    question_id: str
    raw_text: str
    urls: list[ExtractedUrl] = field(default_factory=list)


def _trim_trailing(text: str) -> str:
    # Keep closing parens/brackets only while they are balanced within the
    # match, so "wiki/Smack_(group)" survives but "(see ...Jellyfish)" does not.
    while text:
        last = text[-1]
        if last in _TRAILING_CHARS:
            text = text[:-1]
        elif last == ")" and text.count("(") < text.count(")"):
            text = text[:-1]
        elif last == "]" and text.count("[") < text.count("]"):
            text = text[:-1]
        else:
            break
    return text


def normalize_url(raw: str) -> str:
    """Canonicalize a URL string.

    Lowercases scheme and host, forces https for wikipedia.org hosts, drops
    query and fragment, replaces spaces in the article title with
    underscores, and strips trailing sentence punctuation. Percent-encoding
    is preserved as-is. Raises InvalidSyntax when the input is not an
    absolute http(s) URL.
    """
    try:
        parts = urlsplit(raw)
    except ValueError as exc:
        raise InvalidSyntax(f"unparseable URL: {raw!r}") from exc
    scheme = parts.scheme.lower()
    if scheme not in ("http", "https") or not parts.netloc:
        raise InvalidSyntax(f"not an absolute http(s) URL: {raw!r}")
    host = parts.netloc.lower()
    if host == "wikipedia.org" or host.endswith(".wikipedia.org"):
        scheme = "https"
    path = parts.path
    while path and path[-1] in ".,;'\"”’":
        path = path[:-1]
    if path.startswith(WIKI_PATH_PREFIX):
        title = path[len(WIKI_PATH_PREFIX):].replace(" ", "_")
        path = WIKI_PATH_PREFIX + title
    return f"{scheme}://{host}{path}"


def classify(url: str) -> str:
    """Status of a (normalized) URL: a proper English Wikipedia article link,
    some other parseable URL, or not a URL at all."""
    try:
        parts = urlsplit(url)
    except ValueError:
        return INVALID_SYNTAX
    if parts.scheme.lower() not in ("http", "https") or not parts.netloc:
        return INVALID_SYNTAX
    if parts.netloc.lower() == "en.wikipedia.org" and parts.path.startswith(WIKI_PATH_PREFIX):
        if parts.path[len(WIKI_PATH_PREFIX):]:
            return VALID_WIKIPEDIA
    return WRONG_DOMAIN


def wiki_title(normalized: str) -> str | None:
    """Percent-decoded article title, or None for non-article URLs."""
    parts = urlsplit(normalized)
    if parts.path.startswith(WIKI_PATH_PREFIX):
        title = parts.path[len(WIKI_PATH_PREFIX):]
        if title:
            return unquote(title)
    return None


def extract_urls(raw_text: str) -> list[ExtractedUrl]:
    """Pull every URL-looking substring out of free text, in first-occurrence
    order, deduplicated by normalized form (earliest occurrence wins)."""
    out: list[ExtractedUrl] = []
    seen: set[str] = set()
    for match in _URL_RE.finditer(raw_text):
        raw = _trim_trailing(match.group())
        if not raw:
            continue
        try:
            normalized = normalize_url(raw)
            status = classify(normalized)
        except InvalidSyntax:
            normalized, status = raw, INVALID_SYNTAX
        title = wiki_title(normalized) if status == VALID_WIKIPEDIA else None
        if normalized in seen:
            continue
        seen.add(normalized)
        out.append(ExtractedUrl(raw=raw, normalized=normalized, status=status, title=title))
    return out


def generation_text(url_prefix: str, completion_text: str) -> str:
    """Text to run URL extraction over, for a completion whose prompt ended
    with ``url_prefix``.

    The model normally continues the seeded prefix ("/Title\\n..."), so a
    completion starting with "/" is glued onto the prefix. Anything else is
    treated as a fresh start and the dangling prefix is dropped, keeping a
    lone ".../wiki" out of the extracted URL list.
    """
    if url_prefix and completion_text.startswith("/"):
        return url_prefix + completion_text
    return completion_text
