"""Agent and interest registries kept by every coordinator node.

Registries are values: each operation returns a new registry and leaves the
argument untouched, so a node's state can be snapshotted or replayed freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .model import AgentDescriptor, EventRecord, Interest, eval_predicate


class RegistryError(ValueError):
    pass


# -- node references -------------------------------------------------------
# A NodeRef names a neighbour relative to the node holding it.


@dataclass(frozen=True, order=True)
class LocalAgent:
    agent: str

    def __str__(self) -> str:
        return f"agent:{self.agent}"


@dataclass(frozen=True, order=True)
class PeerWca:
    host: str

    def __str__(self) -> str:
        return f"wca:{self.host}"


@dataclass(frozen=True, order=True)
class OwnDca:
    def __str__(self) -> str:
        return "dca"


@dataclass(frozen=True, order=True)
class PeerDca:
    domain: str

    def __str__(self) -> str:
        return f"dca:{self.domain}"


@dataclass(frozen=True, order=True)
class Eca:
    def __str__(self) -> str:
        return "eca"


NodeRef = Union[LocalAgent, PeerWca, OwnDca, PeerDca, Eca]


# -- agent registry --------------------------------------------------------


@dataclass(frozen=True)
class AgentRegistry:
    host: str
    domain: str
    agents: tuple[AgentDescriptor, ...] = ()

    def ids(self) -> list[str]:
        return [a.address.agent for a in self.agents]


def register_agent(r: AgentRegistry, d: AgentDescriptor) -> AgentRegistry:
    if (d.address.domain, d.address.host) != (r.domain, r.host):
        raise RegistryError(f"agent {d.address} does not live on host {r.domain}/{r.host}")
    if d.address.agent in r.ids():
        raise RegistryError(f"agent {d.address.agent!r} already registered on {r.domain}/{r.host}")
    return AgentRegistry(r.host, r.domain, r.agents + (d,))


def find_servicers(r: AgentRegistry, category: str) -> list[str]:
    return [a.address.agent for a in r.agents if category in a.produces]


# -- interest registry -----------------------------------------------------


@dataclass(frozen=True)
class InterestRegistration:
    interest: Interest
    upstream: NodeRef
    registered_at: float


@dataclass(frozen=True)
class InterestRegistry:
    owner: str
    neighbors: frozenset
    entries: tuple[InterestRegistration, ...] = ()
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self._index is None:
            object.__setattr__(self, "_index",
                               {e.interest.interest_id: e for e in self.entries})

    def __contains__(self, interest_id: str) -> bool:
        return interest_id in self._index

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, interest_id: str):
        return self._index.get(interest_id)


def register_interest(r: InterestRegistry, i: Interest, upstream: NodeRef,
                      now: float) -> tuple[InterestRegistry, bool]:
    if upstream not in r.neighbors:
        raise RegistryError(f"{r.owner}: upstream {upstream} is not adjacent")
    if i.interest_id in r:
        return r, False
    entries = r.entries + (InterestRegistration(i, upstream, now),)
    return InterestRegistry(r.owner, r.neighbors, entries), True


def matching_registrations(r: InterestRegistry, e: EventRecord,
                           now: float) -> list[InterestRegistration]:
    return [reg for reg in r.entries
            if reg.interest.live(now)
            and reg.interest.category == e.category
            and eval_predicate(reg.interest.predicate, e)]


def match_subscribers(r: InterestRegistry, e: EventRecord, now: float) -> list[NodeRef]:
    out: list[NodeRef] = []
    for reg in matching_registrations(r, e, now):
        if reg.upstream not in out:
            out.append(reg.upstream)
    return out


def purge_expired(r: InterestRegistry, now: float) -> tuple[InterestRegistry, list[str]]:
    keep, removed = [], []
    for reg in r.entries:
        i = reg.interest
        if i.ttl is not None and i.issued_at + i.ttl < now:
            removed.append(i.interest_id)
        else:
            keep.append(reg)
    if not removed:
        return r, []
    return InterestRegistry(r.owner, r.neighbors, tuple(keep)), removed
