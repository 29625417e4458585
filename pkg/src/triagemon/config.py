"""Application configuration.

One YAML file describes the whole deployment: store path, wire
listener, HTTP API, report source, agent endpoints, ensembles, review
policy, and evaluation seeds. Secrets never live in the file; fields
ending in ``token_env`` name the environment variable that holds the
actual value, so rotating a credential never touches the config.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .adjudication import ReviewPolicy
from .agents import AgentEndpointConfig, PromptTemplate, load_default_template, template_from_dict
from .consensus import TiePolicy, standard_configs
from .domain import DomainError, EnsembleConfig
from .reports import ReportSourceConfig


class ConfigError(DomainError):
    pass


def _address(raw, default_port: int) -> tuple[str, int]:
    """Accept "host:port", "host", or [host, port]."""
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        return str(raw[0]), int(raw[1])
    if isinstance(raw, str):
        host, _, port = raw.rpartition(":")
        if not host:
            return raw, default_port
        try:
            return host, int(port)
        except ValueError:
            raise ConfigError(f"bad address {raw!r}") from None
    raise ConfigError(f"bad address {raw!r}")


@dataclass(frozen=True)
class ListenerConfig:
    listen_address: tuple[str, int] = ("0.0.0.0", 2575)
    concept_code: str = "ICH"
    ack_mode: str = "accept_all"

    def __post_init__(self):
        if self.ack_mode not in ("accept_all", "report_errors", "none"):
            raise ConfigError(f"unknown ack_mode {self.ack_mode!r}")


@dataclass(frozen=True)
class ApiConfig:
    listen_address: tuple[str, int] = ("127.0.0.1", 8416)
    token_env: str | None = None


@dataclass(frozen=True)
class EvaluationConfig:
    base_seed: int = 0
    n_boot: int = 1000
    panel_consensus_config: str = "full9"
    intersection: bool = False


@dataclass(frozen=True)
class BatchConfig:
    max_parallel: int = 4
    tie_policy: TiePolicy = TiePolicy.POSITIVE_WINS


@dataclass(frozen=True)
class AppConfig:
    store_path: str = ":memory:"
    listener: ListenerConfig = field(default_factory=ListenerConfig)
    api: ApiConfig = field(default_factory=ApiConfig)
    reports: ReportSourceConfig | None = None
    agents: tuple = ()
    template_path: str | None = None
    ensembles: tuple = ()
    review: ReviewPolicy | None = None
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    batch: BatchConfig = field(default_factory=BatchConfig)

    def load_template(self) -> PromptTemplate:
        if self.template_path is None:
            return load_default_template()
        import json

        raw = json.loads(Path(self.template_path).read_text(encoding="utf-8"))
        return template_from_dict(raw)


def _agents_from(raw_list) -> tuple:
    agents = []
    for raw in raw_list or ():
        try:
            agents.append(AgentEndpointConfig(
                agent_id=raw["agent_id"],
                base_url=raw["base_url"],
                model_name=raw.get("model_name", raw["agent_id"]),
                temperature=float(raw.get("temperature", 0.0)),
                timeout=float(raw.get("timeout", 120.0)),
                max_retries=int(raw.get("max_retries", 2)),
                strip_reasoning_blocks=bool(raw.get("strip_reasoning_blocks", False)),
                backoff_s=float(raw.get("backoff_s", 0.25)),
            ))
        except KeyError as exc:
            raise ConfigError(f"agent entry missing {exc}") from None
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate agent_id in agents list")
    return tuple(agents)


def _ensembles_from(raw, agent_ids: list[str]) -> tuple:
    """The standard four configs from a top3 declaration, plus any
    fully explicit extras."""
    out: list[EnsembleConfig] = []
    raw = raw or {}
    std = raw.get("standard")
    if std:
        out.extend(standard_configs(
            agent_ids,
            top3=list(std["top3"]),
            standalone=std.get("standalone"),
        ))
    for extra in raw.get("custom", ()):
        out.append(EnsembleConfig(
            name=extra["name"],
            members=tuple(extra["members"]),
            threshold_k=int(extra["threshold_k"]),
            quorum_q=int(extra.get("quorum_q", extra["threshold_k"])),
        ))
    names = [e.name for e in out]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate ensemble name")
    unknown = {m for e in out for m in e.members} - set(agent_ids)
    if unknown:
        raise ConfigError(f"ensemble members not in agents list: {sorted(unknown)}")
    return tuple(out)


def _reports_from(raw) -> ReportSourceConfig | None:
    if not raw:
        return None
    kind = raw.get("kind")
    if kind == "directory":
        return ReportSourceConfig(kind="directory", path=raw["path"])
    if kind == "http":
        return ReportSourceConfig(
            kind="http",
            base_url=raw["base_url"],
            token_env=raw.get("token_env"),
            timeout=float(raw.get("timeout", 30.0)),
            max_retries=int(raw.get("max_retries", 2)),
            backoff_s=float(raw.get("backoff_s", 0.5)),
        )
    raise ConfigError(f"unknown report source kind {kind!r}")


def config_from_dict(raw: dict) -> AppConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    agents = _agents_from(raw.get("agents"))
    agent_ids = [a.agent_id for a in agents]

    listener_raw = raw.get("listener") or {}
    listener = ListenerConfig(
        listen_address=_address(listener_raw.get("address", "0.0.0.0:2575"), 2575),
        concept_code=listener_raw.get("concept_code", "ICH"),
        ack_mode=listener_raw.get("ack_mode", "accept_all"),
    )
    api_raw = raw.get("api") or {}
    api = ApiConfig(
        listen_address=_address(api_raw.get("address", "127.0.0.1:8416"), 8416),
        token_env=api_raw.get("token_env"),
    )
    review_raw = raw.get("review")
    review = None
    if review_raw:
        review = ReviewPolicy(
            config_name=review_raw["config_name"],
            all_discordant=bool(review_raw.get("all_discordant", True)),
            concordant_sample_n=int(review_raw.get("concordant_sample_n", 0)),
            seed=int(review_raw.get("seed", 0)),
            include_undecided=bool(review_raw.get("include_undecided", False)),
            include_labeled=bool(review_raw.get("include_labeled", False)),
        )
    eval_raw = raw.get("evaluation") or {}
    evaluation = EvaluationConfig(
        base_seed=int(eval_raw.get("base_seed", 0)),
        n_boot=int(eval_raw.get("n_boot", 1000)),
        panel_consensus_config=eval_raw.get("panel_consensus_config", "full9"),
        intersection=bool(eval_raw.get("intersection", False)),
    )
    batch_raw = raw.get("batch") or {}
    try:
        tie_policy = TiePolicy(batch_raw.get("tie_policy", "positive_wins"))
    except ValueError:
        raise ConfigError(
            f"unknown tie_policy {batch_raw.get('tie_policy')!r}"
        ) from None
    batch = BatchConfig(
        max_parallel=int(batch_raw.get("max_parallel", 4)),
        tie_policy=tie_policy,
    )
    return AppConfig(
        store_path=raw.get("store", ":memory:"),
        listener=listener,
        api=api,
        reports=_reports_from(raw.get("reports")),
        agents=agents,
        template_path=raw.get("template"),
        ensembles=_ensembles_from(raw.get("ensembles"), agent_ids),
        review=review,
        evaluation=evaluation,
        batch=batch,
    )


def load_config(path: str | Path) -> AppConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return config_from_dict(raw or {})


__all__ = [
    "ApiConfig",
    "AppConfig",
    "BatchConfig",
    "ConfigError",
    "EvaluationConfig",
    "ListenerConfig",
    "config_from_dict",
    "load_config",
]
