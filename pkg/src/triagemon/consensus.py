"""k-of-n consensus voting over agent verdicts.

Verdicts that are not ok (malformed output, transport failure) count as
abstentions: they reduce the number of valid votes and never count
toward the positive threshold. An exam with fewer valid votes than the
quorum is undecided and stays out of downstream metric denominators.

Two tie policies exist for the threshold rule. The default reads
"k or more in agreement" as: positive iff at least k positive votes,
otherwise negative — under which a 4-of-8 split with k=4 is positive.
The symmetric alternative requires k votes on one side only; a split
reaching k on both sides (possible when 2k <= valid votes) or on
neither side is undecided.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .domain import AgentVerdict, DomainError, EnsembleConfig, VerdictStatus


class TiePolicy(str, Enum):
    POSITIVE_WINS = "positive_wins"
    SYMMETRIC = "symmetric"


class Decision(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNDECIDED = "undecided"


class UnknownAgentInConfig(DomainError):
    pass


@dataclass(frozen=True)
class ConsensusDecision:
    accession: str
    config_name: str
    positive_votes: int
    valid_votes: int
    decision: Decision
    contributing: dict  # agent_id -> "positive" | "negative" | "abstain"

    def __post_init__(self):
        if not 0 <= self.positive_votes <= self.valid_votes:
            raise DomainError("positive_votes must be within [0, valid_votes]")


def vote(
    verdicts: list[AgentVerdict],
    config: EnsembleConfig,
    policy: TiePolicy = TiePolicy.POSITIVE_WINS,
) -> ConsensusDecision:
    """Combine one exam's verdicts under a k-of-n ensemble config.

    Verdicts from agents outside the config are ignored; every config
    member must appear exactly once or abstention accounting cannot be
    formed (UnknownAgentInConfig).
    """
    members = set(config.members)
    by_agent: dict[str, AgentVerdict] = {}
    accession = None
    for v in verdicts:
        if v.agent_id not in members:
            continue
        if v.agent_id in by_agent:
            raise UnknownAgentInConfig(
                f"duplicate verdict for agent {v.agent_id!r} in config {config.name!r}"
            )
        by_agent[v.agent_id] = v
        if accession is None:
            accession = v.accession
        elif v.accession != accession:
            raise DomainError("vote() requires verdicts for a single exam")
    missing = members - by_agent.keys()
    if missing:
        raise UnknownAgentInConfig(
            f"config {config.name!r} missing verdicts for {sorted(missing)}"
        )

    contributing = {}
    positive = 0
    valid = 0
    for agent_id in config.members:
        v = by_agent[agent_id]
        if v.status is VerdictStatus.OK:
            valid += 1
            if v.hemorrhage:
                positive += 1
                contributing[agent_id] = "positive"
            else:
                contributing[agent_id] = "negative"
        else:
            contributing[agent_id] = "abstain"

    negative = valid - positive
    if valid < config.quorum_q:
        decision = Decision.UNDECIDED
    elif policy is TiePolicy.POSITIVE_WINS:
        decision = Decision.POSITIVE if positive >= config.threshold_k else Decision.NEGATIVE
    else:
        pos_hit = positive >= config.threshold_k
        neg_hit = negative >= config.threshold_k
        if pos_hit and not neg_hit:
            decision = Decision.POSITIVE
        elif neg_hit and not pos_hit:
            decision = Decision.NEGATIVE
        else:
            decision = Decision.UNDECIDED

    return ConsensusDecision(
        accession=accession or "",
        config_name=config.name,
        positive_votes=positive,
        valid_votes=valid,
        decision=decision,
        contributing=contributing,
    )


def standard_configs(
    all_agents: list[str],
    top3: list[str],
    standalone: str | None = None,
) -> list[EnsembleConfig]:
    """The four reference ensemble configurations.

    top3 must be three of all_agents; ``standalone`` is the agent
    evaluated alone (default: the last of all_agents) and is also the
    one excluded from the n-1 ensemble. Every threshold is a majority,
    k = ceil(n/2), and the quorum equals k.
    """
    if len(top3) != 3:
        raise DomainError(f"top3 must contain exactly 3 agents, got {len(top3)}")
    if not set(top3) <= set(all_agents):
        raise DomainError("top3 must be a subset of all_agents")
    if standalone is None:
        standalone = all_agents[-1]
    if standalone not in all_agents:
        raise DomainError(f"standalone agent {standalone!r} not in all_agents")
    rest = tuple(a for a in all_agents if a != standalone)

    def cfg(name: str, members: tuple[str, ...]) -> EnsembleConfig:
        k = (len(members) + 1) // 2
        return EnsembleConfig(name=name, members=members, threshold_k=k, quorum_q=k)

    return [
        cfg("top3", tuple(top3)),
        cfg("full9", tuple(all_agents)),
        cfg("eight_llm", rest),
        cfg("single", (standalone,)),
    ]
