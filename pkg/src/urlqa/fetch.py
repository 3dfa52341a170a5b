"""Resolve URLs to documents: cached HTTP GETs plus HTML-to-text extraction.

Every fetch outcome is encoded in Document.fetch_status instead of raised,
so one dead link never aborts a batch. Responses (including 404s) land in a
content-addressed on-disk cache; with a warmed cache the whole pipeline runs
without touching the network, which the request counter makes checkable.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import urlsplit

OK = "ok"
NOT_FOUND = "not_found"
TRANSPORT_ERROR = "transport_error"
SKIPPED = "skipped"

DEFAULT_USER_AGENT = "urlqa/0.1 (research retrieval tool; polite batch fetcher)"

# Statuses worth keeping: page text, or a definitive "page does not exist".
_CACHEABLE_STATUS = (200, 404, 410)


class EmptyDocument(ValueError):
    """HTML contained no visible text."""


@dataclass
class Document:
    url: str
    fetch_status: str
    html: bytes | None = None
    text: str | None = None
    word_count: int = 0
    fetched_at: float = 0.0
    from_cache: bool = False


@dataclass
class FetchPolicy:
    parallelism: int = 4
    delay_ms: int = 200
    timeout_s: float = 30.0
    max_retries: int = 2
    max_redirects: int = 5
    offline: bool = False
    user_agent: str = DEFAULT_USER_AGENT


@dataclass
class CacheEntry:
    key: str
    url: str
    status_code: int
    body: bytes
    stored_at: float


def cache_key(url: str) -> str:
    return hashlib.sha256(url.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed response store: one body file per URL hash plus an
    append-only JSONL manifest (last entry per key wins)."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._manifest_path = self.root / "manifest.jsonl"
        self._index: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self._manifest_path.exists():
            with open(self._manifest_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._index[rec["key"]] = rec

    def _body_path(self, key: str) -> Path:
        return self.root / f"{key}.body"

    def get(self, url: str) -> CacheEntry | None:
        key = cache_key(url)
        with self._lock:
            rec = self._index.get(key)
        if rec is None:
            return None
        body_path = self._body_path(key)
        if not body_path.exists():
            return None
        return CacheEntry(key=key, url=rec["url"], status_code=rec["status_code"],
                          body=body_path.read_bytes(), stored_at=rec["stored_at"])

    def put(self, url: str, status_code: int, body: bytes,
            stored_at: float | None = None) -> CacheEntry:
        key = cache_key(url)
        rec = {
            "key": key,
            "url": url,
            "status_code": int(status_code),
            "stored_at": time.time() if stored_at is None else stored_at,
        }
        with self._lock:
            self._body_path(key).write_bytes(body)
            with open(self._manifest_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")
            self._index[key] = rec
        return CacheEntry(key=key, url=url, status_code=rec["status_code"],
                          body=body, stored_at=rec["stored_at"])

    def __len__(self) -> int:
        return len(self._index)


class _HostThrottle:
    """Reserve-then-sleep spacing of requests to the same host."""

    def __init__(self, delay_s: float, clock=time.monotonic, sleep=time.sleep):
        self.delay_s = delay_s
        self._clock = clock
        self._sleep = sleep
        self._next_free: dict[str, float] = {}
        self._lock = threading.Lock()

    def wait(self, host: str) -> None:
        if self.delay_s <= 0:
            return
        with self._lock:
            now = self._clock()
            slot = max(now, self._next_free.get(host, now))
            self._next_free[host] = slot + self.delay_s
        if slot > now:
            self._sleep(slot - now)


def _requests_transport(policy: FetchPolicy):
    # Imported lazily so offline/test runs never build a live session.
    import requests

    session = requests.Session()
    session.max_redirects = policy.max_redirects
    headers = {"User-Agent": policy.user_agent}

    def transport(url: str):
        resp = session.get(url, headers=headers, timeout=policy.timeout_s,
                           allow_redirects=True)
        return resp.status_code, resp.content

    return transport


class Fetcher:
    """Batch URL fetcher with caching, per-host politeness delays, bounded
    parallelism, and a network-request counter for offline verification."""

    def __init__(self, cache: ResponseCache, policy: FetchPolicy | None = None,
                 transport=None, sleep=time.sleep):
        self.cache = cache
        self.policy = policy or FetchPolicy()
        self._transport = transport
        self._sleep = sleep
        self._throttle = _HostThrottle(self.policy.delay_ms / 1000.0, sleep=sleep)
        self._lock = threading.Lock()
        self.network_requests = 0
        self.cache_hits = 0
        self.cache_misses = 0
        self.skipped = 0

    def stats(self) -> dict:
        with self._lock:
            return {
                "network_requests": self.network_requests,
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "skipped": self.skipped,
            }

    def _count(self, name: str) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + 1)

    def _document_from(self, url: str, status_code: int, body: bytes,
                       fetched_at: float, from_cache: bool) -> Document:
        if status_code == 200:
            try:
                text = extract_text(body)
            except EmptyDocument:
                text = ""
            return Document(url=url, fetch_status=OK, html=body, text=text,
                            word_count=len(text.split()), fetched_at=fetched_at,
                            from_cache=from_cache)
        if status_code in (404, 410):
            return Document(url=url, fetch_status=NOT_FOUND, html=body,
                            fetched_at=fetched_at, from_cache=from_cache)
        return Document(url=url, fetch_status=TRANSPORT_ERROR,
                        fetched_at=fetched_at, from_cache=from_cache)

    def fetch(self, url: str) -> Document:
        entry = self.cache.get(url)
        if entry is not None:
            self._count("cache_hits")
            return self._document_from(url, entry.status_code, entry.body,
                                       fetched_at=entry.stored_at, from_cache=True)
        self._count("cache_misses")
        if self.policy.offline:
            self._count("skipped")
            return Document(url=url, fetch_status=SKIPPED, fetched_at=time.time())

        if self._transport is None:
            self._transport = _requests_transport(self.policy)
        host = urlsplit(url).netloc
        attempts = 1 + max(0, self.policy.max_retries)
        status_code = None
        body = b""
        for attempt in range(attempts):
            if attempt:
                self._sleep(0.5 * (2 ** (attempt - 1)))
            self._throttle.wait(host)
            self._count("network_requests")
            try:
                status_code, body = self._transport(url)
            except Exception:
                status_code = None
                continue
            if status_code == 429 or status_code >= 500:
                continue
            break
        fetched_at = time.time()
        if status_code is None or status_code == 429 or status_code >= 500:
            return Document(url=url, fetch_status=TRANSPORT_ERROR, fetched_at=fetched_at)
        if status_code in _CACHEABLE_STATUS:
            entry = self.cache.put(url, status_code, body, stored_at=fetched_at)
            fetched_at = entry.stored_at
        return self._document_from(url, status_code, body, fetched_at=fetched_at,
                                   from_cache=False)

    def fetch_all(self, urls: list[str]) -> list[Document]:
        """Fetch a batch; output order always matches input order."""
        if not urls:
            return []
        workers = max(1, self.policy.parallelism)
        if workers == 1 or len(urls) == 1:
            return [self.fetch(u) for u in urls]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.fetch, urls))


# HTML tags whose entire content is dropped.
_SKIP_TAGS = frozenset({
    "script", "style", "noscript", "template", "nav", "header", "footer",
    "aside", "form", "iframe", "svg", "math", "head", "button", "select",
})

# class/id fragments marking Wikipedia boilerplate: infoboxes, navboxes,
# edit links, citation brackets, tables of contents, hatnotes.
_SKIP_MARKERS = (
    "infobox", "navbox", "vertical-navbox", "sidebar", "toc", "mw-editsection",
    "mw-jump-link", "reference", "reflist", "hatnote", "catlinks", "printfooter",
    "mw-indicator", "sistersitebox", "metadata",
)

_BLOCK_TAGS = frozenset({
    "p", "div", "li", "ul", "ol", "dl", "dd", "dt", "table", "tr", "td", "th",
    "h1", "h2", "h3", "h4", "h5", "h6", "section", "article", "blockquote",
    "pre", "figure", "figcaption", "main", "body", "caption", "center",
})

_VOID_TAGS = frozenset({
    "br", "hr", "img", "meta", "link", "input", "area", "base", "col",
    "embed", "source", "track", "wbr",
})

_HEADING_TAGS = frozenset({"h1", "h2", "h3", "h4", "h5", "h6"})

_CUTOFF_HEADING = "references"


class _WikiTextExtractor(HTMLParser):
    """Streaming extractor: skips boilerplate subtrees, emits newline
    boundaries around block elements, and stops at the References heading."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self._parts: list[str] = []
        self._stack: list[bool] = []      # per open tag: is it (or an ancestor) skipped
        self._tags: list[str] = []
        self._skip_depth = 0
        self._stopped = False
        self._heading_buf: list[str] | None = None

    @staticmethod
    def _is_skipped(tag: str, attrs) -> bool:
        if tag in _SKIP_TAGS:
            return True
        for name, value in attrs:
            if name in ("class", "id", "role") and value:
                lowered = value.lower()
                if any(marker in lowered for marker in _SKIP_MARKERS):
                    return True
        return False

    def handle_starttag(self, tag, attrs):
        if self._stopped:
            return
        if tag in _VOID_TAGS:
            if tag in ("br", "hr") and not self._skip_depth:
                self._emit("\n")
            return
        skipped = self._skip_depth > 0 or self._is_skipped(tag, attrs)
        self._tags.append(tag)
        self._stack.append(skipped)
        if skipped:
            self._skip_depth += 1
        elif tag in _HEADING_TAGS and self._heading_buf is None:
            self._heading_buf = []
        elif tag in _BLOCK_TAGS:
            self._emit("\n")

    def handle_startendtag(self, tag, attrs):
        if tag in ("br", "hr") and not self._skip_depth and not self._stopped:
            self._emit("\n")

    def handle_endtag(self, tag):
        if self._stopped or tag in _VOID_TAGS:
            return
        # Tolerate malformed nesting: close the nearest matching open tag.
        for i in range(len(self._tags) - 1, -1, -1):
            if self._tags[i] == tag:
                for _ in range(len(self._tags) - i):
                    if self._stack.pop():
                        self._skip_depth -= 1
                    self._tags.pop()
                break
        else:
            return
        if tag in _HEADING_TAGS and self._heading_buf is not None:
            heading = "".join(self._heading_buf).strip()
            self._heading_buf = None
            if heading.lower() == _CUTOFF_HEADING:
                self._stopped = True
            else:
                self._parts.append(heading)
                self._parts.append("\n")
        elif tag in _BLOCK_TAGS and not self._skip_depth:
            self._emit("\n")

    def handle_data(self, data):
        if self._stopped or self._skip_depth:
            return
        self._emit(data)

    def _emit(self, text: str) -> None:
        if self._heading_buf is not None:
            self._heading_buf.append(text)
        else:
            self._parts.append(text)

    def text(self) -> str:
        lines = []
        for raw_line in "".join(self._parts).splitlines():
            line = " ".join(raw_line.split())
            if line:
                lines.append(line)
        return "\n".join(lines)


def extract_text(html: bytes | str) -> str:
    """Visible body text of an HTML document.

    Scripts, styles, navigation chrome, infoboxes, edit links, citation
    brackets and everything from the References heading onward are removed;
    block elements become line breaks and whitespace is collapsed within
    lines. Raises EmptyDocument when nothing visible remains.
    """
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    parser = _WikiTextExtractor()
    parser.feed(html)
    parser.close()
    text = parser.text()
    if not text:
        raise EmptyDocument("no visible text in document")
    return text
