"""Prompting, transport, and verdict parsing for the model panel.

Every agent in a panel receives the byte-identical prompt for a given
impression. Endpoints speak a chat-completion shape: POST
<base_url>/api/chat with {model, messages, temperature, format:"json"},
answering {"message": {"content": ...}}. Responses are parsed into
structured verdicts; anything that does not carry a boolean
"hemorrhage" claim is recorded as malformed, never discarded.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

import requests

from .domain import (
    AgentVerdict,
    DomainError,
    Impression,
    ImpressionStatus,
    UnrecognizedSubtype,
    VerdictStatus,
    normalize_subtype,
)

_THINK_OPEN = "<think>"
_THINK_CLOSE = "</think>"


class TransportFailed(RuntimeError):
    """Endpoint unreachable or broken after all retries."""


@dataclass(frozen=True)
class AgentEndpointConfig:
    agent_id: str
    base_url: str
    model_name: str
    temperature: float = 0.0
    timeout: float = 120.0
    max_retries: int = 2
    strip_reasoning_blocks: bool = False
    backoff_s: float = 0.25

    def __post_init__(self):
        if not self.agent_id:
            raise DomainError("agent_id must be non-empty")
        if not self.base_url:
            raise DomainError("base_url must be non-empty")
        if self.max_retries < 0:
            raise DomainError("max_retries must be >= 0")


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction text plus worked examples.

    ``instruction_text`` must contain "{impression}" exactly once and,
    when examples are present, "{examples}" exactly once; rendering is a
    plain string substitution so identical inputs give identical bytes.
    Example answers must themselves parse as valid ok verdicts.
    """

    template_id: str
    instruction_text: str
    few_shot_examples: tuple[tuple[str, dict], ...] = ()

    def __post_init__(self):
        if self.instruction_text.count("{impression}") != 1:
            raise DomainError("instruction_text needs exactly one {impression} slot")
        n_slots = self.instruction_text.count("{examples}")
        if self.few_shot_examples and n_slots != 1:
            raise DomainError("templates with examples need exactly one {examples} slot")
        if n_slots > 1:
            raise DomainError("at most one {examples} slot")
        for text, answer in self.few_shot_examples:
            if "{impression}" in text or "{examples}" in text:
                raise DomainError("example text must not contain template slots")
            probe = parse_verdict("template", "template", json.dumps(answer))
            if probe.status is not VerdictStatus.OK or probe.subtype_flagged:
                raise DomainError(f"example answer does not validate: {answer!r}")


def render_example(text: str, answer: dict) -> str:
    body = json.dumps(answer, sort_keys=True, separators=(", ", ": "))
    return f"Report impression: {text}\nAnswer: {body}"


def build_prompt(template: PromptTemplate, impression: Impression) -> str:
    """Deterministic prompt rendering; the impression appears verbatim,
    after the instruction and examples."""
    if impression.status is not ImpressionStatus.OK:
        raise DomainError("only impressions with status=ok are sent to agents")
    out = template.instruction_text
    if "{examples}" in out:
        block = "\n\n".join(render_example(t, a) for t, a in template.few_shot_examples)
        out = out.replace("{examples}", block)
    return out.replace("{impression}", impression.text)


def load_default_template() -> PromptTemplate:
    with resources.files("triagemon.data").joinpath("prompt_template.json").open(
        "r", encoding="utf-8"
    ) as fh:
        raw = json.load(fh)
    return template_from_dict(raw)


def template_from_dict(raw: dict) -> PromptTemplate:
    return PromptTemplate(
        template_id=raw["template_id"],
        instruction_text=raw["instruction_text"],
        few_shot_examples=tuple(
            (ex["impression"], ex["answer"]) for ex in raw.get("few_shot_examples", ())
        ),
    )


# --- transport -------------------------------------------------------------

_local = threading.local()


def _session() -> requests.Session:
    s = getattr(_local, "session", None)
    if s is None:
        s = _local.session = requests.Session()
    return s


def query_agent(cfg: AgentEndpointConfig, prompt: str) -> str:
    """One chat call; returns the assistant message content.

    Retries with exponential backoff on transport or envelope errors;
    after max_retries + 1 attempts raises :class:`TransportFailed`.
    """
    body = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
        "format": "json",
    }
    url = cfg.base_url.rstrip("/") + "/api/chat"
    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt:
            time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
        try:
            resp = _session().post(url, json=body, timeout=cfg.timeout)
            resp.raise_for_status()
            content = resp.json().get("message", {}).get("content")
            if not isinstance(content, str):
                raise ValueError("response lacks message.content")
            return content
        except (requests.RequestException, ValueError) as exc:
            last = exc
    raise TransportFailed(f"{cfg.agent_id} at {url}: {last}")


# --- parsing ---------------------------------------------------------------


def _strip_reasoning(text: str) -> str:
    # remove <think>...</think> spans; an unclosed block eats to the end
    out = []
    i = 0
    lower = text.lower()
    while True:
        start = lower.find(_THINK_OPEN, i)
        if start < 0:
            out.append(text[i:])
            return "".join(out)
        out.append(text[i:start])
        end = lower.find(_THINK_CLOSE, start)
        if end < 0:
            return "".join(out)
        i = end + len(_THINK_CLOSE)


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = decoder.raw_decode(text, i)
        except ValueError:
            i = text.find("{", i + 1)
            continue
        return obj if isinstance(obj, dict) else None
    return None


def parse_verdict(
    agent_id: str,
    accession: str,
    raw: str,
    strip_reasoning: bool = False,
    latency_ms: float = 0.0,
) -> AgentVerdict:
    """Convert raw model output into a structured verdict.

    The first balanced JSON object in the (optionally reasoning-
    stripped) text must carry a boolean "hemorrhage"; on a positive
    call an optional "subtype" is normalized against the synonym
    table, and one we cannot map is dropped but flagged. Everything
    else becomes status=malformed with the raw text preserved.
    """
    text = _strip_reasoning(raw) if strip_reasoning else raw
    obj = _first_json_object(text)
    hemorrhage = obj.get("hemorrhage") if obj else None
    if not isinstance(hemorrhage, bool):
        return AgentVerdict(
            agent_id=agent_id,
            accession=accession,
            hemorrhage=None,
            subtype=None,
            raw_response=raw,
            status=VerdictStatus.MALFORMED,
            latency_ms=latency_ms,
        )
    subtype = None
    flagged = False
    if hemorrhage:
        claimed = obj.get("subtype")
        if isinstance(claimed, str) and claimed.strip():
            try:
                subtype = normalize_subtype(claimed)
            except UnrecognizedSubtype:
                flagged = True
        elif claimed is not None:
            flagged = True
    return AgentVerdict(
        agent_id=agent_id,
        accession=accession,
        hemorrhage=hemorrhage,
        subtype=subtype,
        raw_response=raw,
        status=VerdictStatus.OK,
        latency_ms=latency_ms,
        subtype_flagged=flagged,
    )


# --- panel fan-out ---------------------------------------------------------


def _one_verdict(
    cfg: AgentEndpointConfig, accession: str, prompt: str
) -> AgentVerdict:
    t0 = time.monotonic()
    try:
        raw = query_agent(cfg, prompt)
    except TransportFailed as exc:
        return AgentVerdict(
            agent_id=cfg.agent_id,
            accession=accession,
            hemorrhage=None,
            subtype=None,
            raw_response=str(exc),
            status=VerdictStatus.TRANSPORT_FAILED,
            latency_ms=(time.monotonic() - t0) * 1000.0,
        )
    return parse_verdict(
        cfg.agent_id,
        accession,
        raw,
        strip_reasoning=cfg.strip_reasoning_blocks,
        latency_ms=(time.monotonic() - t0) * 1000.0,
    )


def run_panel(
    impression: Impression,
    agents: list[AgentEndpointConfig],
    template: PromptTemplate,
    max_parallel: int = 1,
) -> list[AgentVerdict]:
    """One verdict per agent for one impression.

    The prompt is rendered once and shared; agent failures stay
    per-agent and never remove the exam for the rest of the panel.
    Order of the returned list follows the agent list.
    """
    if not agents:
        raise DomainError("run_panel needs at least one agent")
    seen = set()
    for cfg in agents:
        if cfg.agent_id in seen:
            raise DomainError(f"duplicate agent_id {cfg.agent_id!r}")
        seen.add(cfg.agent_id)
    prompt = build_prompt(template, impression)
    if max_parallel > 1:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            return list(
                pool.map(lambda cfg: _one_verdict(cfg, impression.accession, prompt), agents)
            )
    return [_one_verdict(cfg, impression.accession, prompt) for cfg in agents]
