"""Chat-completion client and the ``llm-chat`` step executor.

Wire format (OpenAI-compatible)::

    POST {base_url}/chat/completions
    {"model": ..., "messages": [{"role", "content"}, ...], "temperature": ...}

    200 {"choices": [{"message": {"content": ...}}],
         "usage": {"prompt_tokens": int, "completion_tokens": int}}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any

from ..canonical import canonical_serialize
from .base import ExecutorError, StepOutcome
from .fixtures import FixtureStore
from .http import Transport, send, urllib_transport
from .prompts import TEMPLATES, PromptTemplate, render_prompt

EXECUTOR_ID = "llm-chat"


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    api_key_env: str = "OPENAI_API_KEY"
    timeout_ms: int = 60_000
    max_retries: int = 3


@dataclass(frozen=True)
class ChatCompletion:
    text: str
    tokens_in: int
    tokens_out: int


def _parse_completion(body: Any) -> ChatCompletion:
    try:
        text = body["choices"][0]["message"]["content"]
        usage = body.get("usage") or {}
        return ChatCompletion(
            text=text,
            tokens_in=int(usage.get("prompt_tokens", 0)),
            tokens_out=int(usage.get("completion_tokens", 0)),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ExecutorError(f"malformed chat completion response: {exc!r}") from exc


def llm_chat(
    config: LlmEndpointConfig,
    messages: list[dict[str, str]],
    fixtures: FixtureStore | None = None,
    transport: Transport | None = None,
) -> ChatCompletion:
    request = {"model": config.model, "messages": messages, "temperature": config.temperature}
    if fixtures is not None:
        hit = fixtures.load(EXECUTOR_ID, request)
        if hit is not None:
            completion = _parse_completion(hit["response"])
            usage = hit.get("usage") or {}
            return ChatCompletion(
                completion.text,
                int(usage.get("tokens_in", completion.tokens_in)),
                int(usage.get("tokens_out", completion.tokens_out)),
            )

    key = os.environ.get(config.api_key_env)
    headers = {"Content-Type": "application/json"}
    if key:
        headers["Authorization"] = f"Bearer {key}"
    raw = send(
        transport or urllib_transport,
        "POST",
        config.base_url.rstrip("/") + "/chat/completions",
        headers=headers,
        body=canonical_serialize(request),
        timeout_s=config.timeout_ms / 1000,
        max_retries=config.max_retries,
    )
    try:
        body = json.loads(raw)
    except ValueError as exc:
        raise ExecutorError(f"chat completion is not JSON: {exc}") from exc
    completion = _parse_completion(body)
    if fixtures is not None:
        fixtures.save(
            EXECUTOR_ID,
            request,
            body,
            {"tokens_in": completion.tokens_in, "tokens_out": completion.tokens_out},
        )
    return completion


def _format_abstracts(records: list[dict[str, Any]]) -> str:
    if not records:
        return "(no abstracts)"
    return "\n".join(f"[{i}] {r['title']}: {r['abstract']}" for i, r in enumerate(records, 1))


class LlmChatExecutor:
    """Renders a prompt template from the state and asks the model.

    Params: ``template`` (id in the template table), optional ``topic``,
    optional ``sections`` (artifact names fed back as ``previous``).
    """

    def __init__(
        self,
        config: LlmEndpointConfig | None = None,
        fixtures: FixtureStore | None = None,
        transport: Transport | None = None,
        templates: dict[str, PromptTemplate] | None = None,
    ):
        self.config = config or LlmEndpointConfig()
        self.fixtures = fixtures
        self.transport = transport
        self.templates = templates if templates is not None else TEMPLATES

    @property
    def deterministic(self) -> bool:
        return self.fixtures is not None and self.fixtures.mode == "replay"

    def __call__(self, state: dict[str, Any], params: dict[str, Any], *, step: str) -> StepOutcome:
        template_id = params["template"]
        try:
            template = self.templates[template_id]
        except KeyError:
            raise ExecutorError(f"unknown prompt template {template_id!r}") from None
        artifacts = state.get("artifacts", {})
        previous = [
            f"## {name}\n{artifacts[name]}"
            for name in params.get("sections", ())
            if isinstance(artifacts.get(name), str)
        ]
        variables = {
            "topic": params.get("topic") or state.get("env", {}).get("task", ""),
            "abstracts": _format_abstracts(artifacts.get("search_and_extract", [])),
            "previous": "\n\n".join(previous) or "(empty)",
        }
        messages = render_prompt(template, variables)
        completion = llm_chat(self.config, messages, self.fixtures, self.transport)
        return StepOutcome(
            delta={
                "artifacts": {step: completion.text},
                "messages": [
                    messages[-1],
                    {"role": "assistant", "name": step, "content": completion.text},
                ],
            },
            tokens_in=completion.tokens_in,
            tokens_out=completion.tokens_out,
        )
