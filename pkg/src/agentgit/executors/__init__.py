"""Step executors and the registry that resolves executor ids."""

from __future__ import annotations

from .arxiv import (
    ArxivParseError,
    ArxivSearchExecutor,
    ExtractExecutor,
    PaperRecord,
    arxiv_search,
    extract_abstracts,
    parse_atom_feed,
)
from .base import (
    RESERVED_IDS,
    Executor,
    ExecutorError,
    Registry,
    StepOutcome,
    UnknownExecutorError,
)
from .fixtures import FixtureMiss, FixtureStore, request_digest
from .http import HttpError, Transport, TransportError
from .llm import ChatCompletion, LlmChatExecutor, LlmEndpointConfig, llm_chat
from .mock import MockExecutor, mock_output
from .prompts import TEMPLATES, PromptError, PromptTemplate, render_prompt


def default_registry(
    fixtures: FixtureStore | None = None,
    llm_config: LlmEndpointConfig | None = None,
    transport: Transport | None = None,
) -> Registry:
    """Registry with all four built-in executors."""
    return Registry(
        {
            "mock": MockExecutor(),
            "llm-chat": LlmChatExecutor(llm_config, fixtures, transport),
            "arxiv-search": ArxivSearchExecutor(fixtures, transport),
            "extract": ExtractExecutor(fixtures, transport),
        }
    )


__all__ = [
    "ArxivParseError",
    "ArxivSearchExecutor",
    "ChatCompletion",
    "Executor",
    "ExecutorError",
    "ExtractExecutor",
    "FixtureMiss",
    "FixtureStore",
    "HttpError",
    "LlmChatExecutor",
    "LlmEndpointConfig",
    "MockExecutor",
    "PaperRecord",
    "PromptError",
    "PromptTemplate",
    "RESERVED_IDS",
    "Registry",
    "StepOutcome",
    "TEMPLATES",
    "Transport",
    "TransportError",
    "UnknownExecutorError",
    "arxiv_search",
    "default_registry",
    "extract_abstracts",
    "llm_chat",
    "mock_output",
    "parse_atom_feed",
    "render_prompt",
    "request_digest",
]
