"""Core domain types shared by every tier of the agent hierarchy.

Addresses, events, predicates, interests and the enterprise topology all
live here.  Everything is an immutable value; the functions in this module
are pure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

Scalar = Union[int, float, str]

_IDENT = re.compile(r"^[A-Za-z0-9_.\-]+$")


class TopologyError(ValueError):
    """Raised when a topology description violates the hierarchy rules."""


def check_ident(value: str, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise TopologyError(f"empty {what} identifier")
    if not _IDENT.match(value):
        raise TopologyError(f"invalid {what} identifier {value!r}")
    return value


@dataclass(frozen=True, order=True)
class AgentAddress:
    domain: str
    host: str
    agent: str

    def __str__(self) -> str:
        return f"{self.domain}/{self.host}/{self.agent}"

    @classmethod
    def parse(cls, text: str) -> "AgentAddress":
        parts = text.split("/")
        if len(parts) != 3 or not all(parts):
            raise ValueError(f"malformed agent address {text!r}")
        return cls(*parts)


# -- node names ------------------------------------------------------------
# Every node in the hierarchy has a stable textual name; the simulator keys
# its actors by these and message trace paths are lists of them.

ECA_NAME = "eca"


def ba_name(addr: AgentAddress) -> str:
    return f"ba:{addr}"


def wca_name(domain: str, host: str) -> str:
    return f"wca:{domain}/{host}"


def dca_name(domain: str) -> str:
    return f"dca:{domain}"


# -- events ----------------------------------------------------------------


@dataclass(frozen=True)
class EventRecord:
    seq: int
    time: float
    source: AgentAddress
    category: str
    attributes: tuple[tuple[str, Scalar], ...] = ()

    def get(self, name: str, default=None):
        for key, value in self.attributes:
            if key == name:
                return value
        return default

    def attrs(self) -> dict[str, Scalar]:
        return dict(self.attributes)


def make_event(seq: int, time: float, source: AgentAddress, category: str,
               attributes: Optional[dict] = None) -> EventRecord:
    if time < 0:
        raise ValueError("event time must be non-negative")
    if not category:
        raise ValueError("event category must be non-empty")
    attrs = tuple((attributes or {}).items())
    return EventRecord(seq, float(time), source, category, attrs)


# -- predicates ------------------------------------------------------------


class Op(str, Enum):
    EQ = "=="
    NE = "!="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    TEXT_EQ = "eq"
    PREFIX = "prefix"


def _numeric(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class Constraint:
    attribute: str
    op: Op
    literal: Scalar

    def holds(self, value) -> bool:
        """Evaluate against an attribute value; mismatched types never hold."""
        lit = self.literal
        if self.op in (Op.TEXT_EQ, Op.PREFIX):
            if not (isinstance(value, str) and isinstance(lit, str)):
                return False
            return value == lit if self.op is Op.TEXT_EQ else value.startswith(lit)
        if _numeric(value) and _numeric(lit):
            pass
        elif isinstance(value, str) and isinstance(lit, str):
            pass
        else:
            return False
        if self.op is Op.EQ:
            return value == lit
        if self.op is Op.NE:
            return value != lit
        if self.op is Op.LT:
            return value < lit
        if self.op is Op.LE:
            return value <= lit
        if self.op is Op.GT:
            return value > lit
        return value >= lit

    def __str__(self) -> str:
        lit = self.literal
        if isinstance(lit, str):
            lit_text = '"' + lit.replace("\\", "\\\\").replace('"', '\\"') + '"'
        else:
            lit_text = repr(lit)
        return f"{self.attribute} {self.op.value} {lit_text}"


@dataclass(frozen=True)
class Predicate:
    constraints: tuple[Constraint, ...] = ()

    def __str__(self) -> str:
        return " && ".join(str(c) for c in self.constraints)


TRUE = Predicate()


def eval_predicate(p: Predicate, e: EventRecord) -> bool:
    attrs = e.attrs()
    for c in p.constraints:
        if c.attribute not in attrs or not c.holds(attrs[c.attribute]):
            return False
    return True


_CONSTRAINT = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*(==|!=|<=|>=|=|<|>|\beq\b|\bprefix\b)\s*(.+?)\s*$"
)


def _split_outside_quotes(text: str, sep: str) -> list[str]:
    parts, buf, i, quoted = [], [], 0, False
    while i < len(text):
        ch = text[i]
        if ch == "\\" and quoted and i + 1 < len(text):
            buf.append(text[i:i + 2])
            i += 2
            continue
        if ch == '"':
            quoted = not quoted
        if not quoted and text.startswith(sep, i):
            parts.append("".join(buf))
            buf = []
            i += len(sep)
            continue
        buf.append(ch)
        i += 1
    if quoted:
        raise ValueError(f"unterminated string literal in {text!r}")
    parts.append("".join(buf))
    return parts


def parse_literal(text: str) -> Scalar:
    text = text.strip()
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"bad literal {text!r}; quote text values") from None


def parse_predicate(text: str) -> Predicate:
    """Parse ``attr OP literal && ...``; an empty string or ``true`` is TRUE."""
    text = text.strip()
    if not text or text.lower() == "true":
        return TRUE
    out = []
    for part in _split_outside_quotes(text, "&&"):
        m = _CONSTRAINT.match(part)
        if not m:
            raise ValueError(f"bad constraint {part.strip()!r}")
        name, op, lit = m.groups()
        if op == "=":
            op = "=="
        out.append(Constraint(name, Op(op), parse_literal(lit)))
    return Predicate(tuple(out))


# -- interests -------------------------------------------------------------


@dataclass(frozen=True)
class HostDirected:
    domain: str
    host: str

    def __str__(self) -> str:
        return f"host:{self.domain}/{self.host}"


@dataclass(frozen=True)
class DomainDirected:
    domain: str

    def __str__(self) -> str:
        return f"domain:{self.domain}"


class Level(str, Enum):
    LOCAL = "local"
    DOMAIN = "domain"
    ENTERPRISE = "enterprise"
    PROPAGATED = "propagated"

    def __str__(self) -> str:
        return self.value


InterestScope = Union[HostDirected, DomainDirected, Level]


def parse_scope(text: str) -> InterestScope:
    text = text.strip()
    if text.startswith("host:"):
        domain, sep, host = text[5:].partition("/")
        if not sep or not domain or not host:
            raise ValueError(f"host scope needs domain/host: {text!r}")
        return HostDirected(domain, host)
    if text.startswith("domain:"):
        if not text[7:]:
            raise ValueError(f"domain scope needs a domain: {text!r}")
        return DomainDirected(text[7:])
    try:
        return Level(text.lower())
    except ValueError:
        raise ValueError(f"unknown scope {text!r}") from None


def in_scope(scope: InterestScope, origin: AgentAddress, producer: AgentAddress) -> bool:
    """True if data produced at ``producer`` falls inside ``scope`` for ``origin``."""
    if isinstance(scope, HostDirected):
        return producer.domain == scope.domain and producer.host == scope.host
    if isinstance(scope, DomainDirected):
        return producer.domain == scope.domain
    if scope is Level.LOCAL:
        return producer.domain == origin.domain and producer.host == origin.host
    if scope is Level.DOMAIN:
        return producer.domain == origin.domain
    return True


@dataclass(frozen=True)
class Interest:
    interest_id: str
    origin: AgentAddress
    scope: InterestScope
    category: str
    predicate: Predicate = TRUE
    issued_at: float = 0.0
    ttl: Optional[float] = None

    def live(self, now: float) -> bool:
        return self.ttl is None or now <= self.issued_at + self.ttl


def make_interest(origin: AgentAddress, counter: int, scope: InterestScope,
                  category: str, predicate: Predicate = TRUE,
                  issued_at: float = 0.0, ttl: Optional[float] = None) -> Interest:
    # origin address plus a per-origin counter is unique without coordination
    return Interest(f"{origin}#{counter}", origin, scope, category, predicate, issued_at, ttl)


class RoutingClass(str, Enum):
    LOCAL_HOST = "LocalHost"
    SAME_DOMAIN_OTHER_HOST = "SameDomainOtherHost"
    OTHER_DOMAIN_HOST = "OtherDomainHost"
    OWN_DOMAIN_WIDE = "OwnDomainWide"
    OTHER_DOMAIN_WIDE = "OtherDomainWide"
    ENTERPRISE_WIDE = "EnterpriseWide"


def classify_scope(i: Interest, observer_host: Optional[str],
                   observer_domain: Optional[str]) -> RoutingClass:
    """Routing class of ``i`` as seen from an observer.

    Coordinators that sit above hosts pass ``observer_host=None``; the ECA
    passes ``None`` for both.
    """
    s = i.scope
    if isinstance(s, HostDirected):
        if s.domain != observer_domain:
            return RoutingClass.OTHER_DOMAIN_HOST
        if s.host == observer_host:
            return RoutingClass.LOCAL_HOST
        return RoutingClass.SAME_DOMAIN_OTHER_HOST
    if isinstance(s, DomainDirected):
        if s.domain == observer_domain:
            return RoutingClass.OWN_DOMAIN_WIDE
        return RoutingClass.OTHER_DOMAIN_WIDE
    if s is Level.LOCAL:
        return RoutingClass.LOCAL_HOST
    if s is Level.DOMAIN:
        return RoutingClass.OWN_DOMAIN_WIDE
    return RoutingClass.ENTERPRISE_WIDE


# -- topology --------------------------------------------------------------


@dataclass(frozen=True)
class AgentDescriptor:
    address: AgentAddress
    produces: frozenset = frozenset()
    detects: tuple[str, ...] = ()


@dataclass(frozen=True)
class DomainDecl:
    domain: str
    line: int = 0


@dataclass(frozen=True)
class HostDecl:
    host: str
    domain: Optional[str]
    line: int = 0


@dataclass(frozen=True)
class AgentDecl:
    agent: str
    host: Optional[str]
    produces: tuple[str, ...] = ()
    rules: tuple[str, ...] = ()
    line: int = 0


@dataclass
class TopologyDescription:
    """Unvalidated declarations as read from a topology file."""

    domains: list[DomainDecl] = field(default_factory=list)
    hosts: list[HostDecl] = field(default_factory=list)
    agents: list[AgentDecl] = field(default_factory=list)


@dataclass(frozen=True)
class Topology:
    domains: tuple[str, ...]
    hosts: tuple[tuple[str, str], ...]          # (domain, host) in declaration order
    agents: tuple[AgentDescriptor, ...]
    links: frozenset                            # frozenset of 2-element frozensets of node names

    def hosts_in(self, domain: str) -> list[str]:
        return [h for d, h in self.hosts if d == domain]

    def agents_on(self, domain: str, host: str) -> list[AgentDescriptor]:
        return [a for a in self.agents
                if a.address.domain == domain and a.address.host == host]

    def agent(self, addr: AgentAddress) -> AgentDescriptor:
        for a in self.agents:
            if a.address == addr:
                return a
        raise KeyError(str(addr))

    def has_host(self, domain: str, host: str) -> bool:
        return (domain, host) in self.hosts

    def node_names(self) -> list[str]:
        names = [ECA_NAME]
        names += [dca_name(d) for d in self.domains]
        names += [wca_name(d, h) for d, h in self.hosts]
        names += [ba_name(a.address) for a in self.agents]
        return names

    def resolve_host(self, text: str) -> tuple[str, str]:
        """Resolve ``domain/host`` or a host id that is unique enterprise-wide."""
        if "/" in text:
            d, _, h = text.partition("/")
            if (d, h) not in self.hosts:
                raise TopologyError(f"unknown host {text!r}")
            return d, h
        found = [(d, h) for d, h in self.hosts if h == text]
        if not found:
            raise TopologyError(f"unknown host {text!r}")
        if len(found) > 1:
            raise TopologyError(f"ambiguous host {text!r}; qualify it as domain/host")
        return found[0]


def _link(a: str, b: str) -> frozenset:
    return frozenset((a, b))


def link_set(domains: Iterable[str], hosts: Iterable[tuple[str, str]],
             agents: Iterable[AgentAddress]) -> frozenset:
    domains = list(domains)
    hosts = list(hosts)
    links = set()
    for a in agents:
        links.add(_link(ba_name(a), wca_name(a.domain, a.host)))
    for i, (d1, h1) in enumerate(hosts):
        links.add(_link(wca_name(d1, h1), dca_name(d1)))
        for d2, h2 in hosts[i + 1:]:
            if d1 == d2:
                links.add(_link(wca_name(d1, h1), wca_name(d2, h2)))
    for i, d1 in enumerate(domains):
        links.add(_link(dca_name(d1), ECA_NAME))
        for d2 in domains[i + 1:]:
            links.add(_link(dca_name(d1), dca_name(d2)))
    return frozenset(links)


def validate_topology(raw: TopologyDescription) -> Topology:
    domains: list[str] = []
    for d in raw.domains:
        check_ident(d.domain, "domain")
        if d.domain in domains:
            raise TopologyError(f"duplicate domain {d.domain!r} (line {d.line})")
        domains.append(d.domain)

    hosts: list[tuple[str, str]] = []
    for h in raw.hosts:
        check_ident(h.host, "host")
        if not h.domain:
            raise TopologyError(f"host {h.host!r} has no domain (line {h.line})")
        if h.domain not in domains:
            raise TopologyError(f"host {h.host!r} references unknown domain {h.domain!r} (line {h.line})")
        if (h.domain, h.host) in hosts:
            raise TopologyError(f"duplicate host {h.host!r} in domain {h.domain!r} (line {h.line})")
        hosts.append((h.domain, h.host))
    if not hosts:
        raise TopologyError("topology has zero hosts")

    partial = Topology(tuple(domains), tuple(hosts), (), frozenset())
    agents: list[AgentDescriptor] = []
    seen: set[AgentAddress] = set()
    for a in raw.agents:
        check_ident(a.agent, "agent")
        if not a.host:
            raise TopologyError(f"agent {a.agent!r} has no host (line {a.line})")
        try:
            d, h = partial.resolve_host(a.host)
        except TopologyError as exc:
            raise TopologyError(f"agent {a.agent!r}: {exc} (line {a.line})") from None
        addr = AgentAddress(d, h, a.agent)
        if addr in seen:
            raise TopologyError(f"duplicate agent {a.agent!r} on host {d}/{h} (line {a.line})")
        seen.add(addr)
        for cat in a.produces:
            if not cat:
                raise TopologyError(f"agent {a.agent!r} lists an empty category (line {a.line})")
        agents.append(AgentDescriptor(addr, frozenset(a.produces), tuple(a.rules)))

    links = link_set(domains, hosts, (a.address for a in agents))
    return Topology(tuple(domains), tuple(hosts), tuple(agents), links)


def describe(t: Topology) -> TopologyDescription:
    """Inverse of :func:`validate_topology` (used for serialization)."""
    raw = TopologyDescription()
    raw.domains = [DomainDecl(d) for d in t.domains]
    raw.hosts = [HostDecl(h, d) for d, h in t.hosts]
    raw.agents = [AgentDecl(a.address.agent, f"{a.address.domain}/{a.address.host}",
                            tuple(sorted(a.produces)), a.detects) for a in t.agents]
    return raw
