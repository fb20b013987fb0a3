"""arXiv search over the public Atom API, plus abstract extraction.

Endpoint: ``GET http://export.arxiv.org/api/query`` with query parameters
``search_query`` (``all:<query>``), ``start`` and ``max_results``.
"""

from __future__ import annotations

import re
import urllib.parse
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass
from typing import Any

from .base import ExecutorError, StepOutcome
from .fixtures import FixtureStore
from .http import Transport, send, urllib_transport

ARXIV_API = "http://export.arxiv.org/api/query"
ATOM_NS = "http://www.w3.org/2005/Atom"
_A = f"{{{ATOM_NS}}}"
_VERSION_SUFFIX = re.compile(r"v\d+$")
_TOKEN = re.compile(r"[a-z0-9]+")

SEARCH_ID = "arxiv-search"
EXTRACT_ID = "extract"
EXTRACT_KEY = "search_and_extract"


class ArxivParseError(ExecutorError):
    pass


@dataclass(frozen=True)
class PaperRecord:
    arxiv_id: str
    title: str
    abstract: str
    authors: tuple[str, ...]
    published: str
    url: str

    def to_json(self) -> dict[str, Any]:
        data = asdict(self)
        data["authors"] = list(self.authors)
        return data


def _text(entry: ET.Element, tag: str) -> str | None:
    node = entry.find(_A + tag)
    if node is None or node.text is None:
        return None
    return " ".join(node.text.split())


def parse_atom_feed(xml_text: str | bytes) -> list[PaperRecord]:
    """Parse an arXiv Atom feed into records, keeping feed order."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise ArxivParseError(f"malformed feed: {exc}") from exc
    if root.tag != _A + "feed":
        raise ArxivParseError(f"expected Atom <feed>, got <{root.tag}>")

    records = []
    for index, entry in enumerate(root.findall(_A + "entry")):
        raw_id = _text(entry, "id")
        title = _text(entry, "title")
        summary = _text(entry, "summary")
        if not raw_id:
            raise ArxivParseError(f"entry {index}: missing <id>")
        if title is None:
            raise ArxivParseError(f"entry {index} ({raw_id}): missing <title>")
        if not summary:
            raise ArxivParseError(f"entry {index} ({raw_id}): missing <summary>")
        arxiv_id = _VERSION_SUFFIX.sub("", raw_id.rsplit("/abs/", 1)[-1])
        authors = tuple(
            " ".join(name.text.split())
            for name in entry.findall(f"{_A}author/{_A}name")
            if name.text
        )
        records.append(
            PaperRecord(
                arxiv_id=arxiv_id,
                title=title,
                abstract=summary,
                authors=authors,
                published=_text(entry, "published") or "",
                url=raw_id,
            )
        )
    return records


def query_url(query: str, max_results: int) -> str:
    params = {"search_query": f"all:{query}", "start": 0, "max_results": max_results}
    return f"{ARXIV_API}?{urllib.parse.urlencode(params)}"


def arxiv_search(
    query: str,
    max_results: int = 10,
    fixtures: FixtureStore | None = None,
    transport: Transport | None = None,
) -> list[PaperRecord]:
    if not 1 <= max_results <= 100:
        raise ValueError(f"max_results must be in 1..100, got {max_results}")
    request = {"url": query_url(query, max_results)}
    if fixtures is not None:
        hit = fixtures.load(SEARCH_ID, request)
        if hit is not None:
            return parse_atom_feed(hit["response"]["body"])
    body = send(transport or urllib_transport, "GET", request["url"]).decode("utf-8")
    records = parse_atom_feed(body)
    if fixtures is not None:
        fixtures.save(SEARCH_ID, request, {"body": body})
    return records


def topic_tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def extract_abstracts(records: list[PaperRecord], topic: str) -> dict[str, Any]:
    """Keep unique, on-topic records; returns a state delta."""
    wanted = topic_tokens(topic)
    seen: set[str] = set()
    kept = []
    for rec in records:
        if rec.arxiv_id in seen:
            continue
        seen.add(rec.arxiv_id)
        if wanted & topic_tokens(f"{rec.title} {rec.abstract}"):
            kept.append(rec.to_json())
    return {"artifacts": {EXTRACT_KEY: kept}}


class ArxivSearchExecutor:
    """Raw retrieval; writes the record list under ``artifacts.<step>``."""

    def __init__(self, fixtures: FixtureStore | None = None, transport: Transport | None = None):
        self.fixtures = fixtures
        self.transport = transport

    @property
    def deterministic(self) -> bool:
        return self.fixtures is not None and self.fixtures.mode == "replay"

    def _search(self, state: dict[str, Any], params: dict[str, Any]) -> tuple[str, list[PaperRecord]]:
        query = params.get("query") or state.get("env", {}).get("task", "")
        if not query:
            raise ExecutorError("no search query: set params.query or env.task")
        records = arxiv_search(query, int(params.get("max_results", 10)), self.fixtures, self.transport)
        return query, records

    def __call__(self, state: dict[str, Any], params: dict[str, Any], *, step: str) -> StepOutcome:
        _, records = self._search(state, params)
        return StepOutcome(delta={"artifacts": {step: [r.to_json() for r in records]}})


class ExtractExecutor(ArxivSearchExecutor):
    """Search, then keep unique on-topic abstracts under ``artifacts.search_and_extract``."""

    def __call__(self, state: dict[str, Any], params: dict[str, Any], *, step: str) -> StepOutcome:
        query, records = self._search(state, params)
        return StepOutcome(delta=extract_abstracts(records, params.get("topic") or query))
