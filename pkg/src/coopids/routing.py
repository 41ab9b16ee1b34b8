"""Routing state machines for the three coordinator tiers.

Each handler is a pure function ``(state, message, sender, now) ->
(state', actions)``.  Handlers never touch the network; the simulator in
:mod:`coopids.harness` carries the returned actions across links, bumping
``hop_count`` and extending ``trace_path`` once per traversal.

Data messages always carry the interest they answer (``for_interest``) past
the first hop.  At the WCA that owns the subscriber the tag selects exactly
one registration, which keeps delivery exactly-once per interest even when
two interests of one agent share part of their reverse path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from .model import (
    AgentDescriptor,
    EventRecord,
    Interest,
    Level,
    RoutingClass,
    Topology,
    ECA_NAME,
    classify_scope,
    dca_name,
    eval_predicate,
    in_scope,
    wca_name,
)
from .registry import (
    AgentRegistry,
    Eca,
    InterestRegistry,
    LocalAgent,
    NodeRef,
    OwnDca,
    PeerDca,
    PeerWca,
    find_servicers,
    matching_registrations,
    register_agent,
    register_interest,
)

MAX_HOPS = 8


class RoutingError(ValueError):
    """A message arrived over a link that does not exist."""


# -- messages --------------------------------------------------------------


@dataclass(frozen=True)
class InterestMsg:
    interest: Interest

    kind = "interest"


@dataclass(frozen=True)
class DataMsg:
    event: EventRecord
    for_interest: Optional[str] = None

    kind = "data"


@dataclass(frozen=True)
class InabilityNotice:
    interest_id: str

    kind = "inability"


@dataclass(frozen=True)
class CollectRequest:
    interest_id: str
    agent: str
    category: str

    kind = "collect"


Payload = Union[InterestMsg, DataMsg, InabilityNotice, CollectRequest]


@dataclass(frozen=True)
class Message:
    payload: Payload
    hop_count: int = 0
    trace_path: tuple[str, ...] = ()

    @property
    def kind(self) -> str:
        return self.payload.kind


def originate(payload: Payload, sender: str) -> Message:
    return Message(payload, 0, (sender,))


@dataclass(frozen=True)
class OutboundAction:
    dest: NodeRef
    message: Message


# -- node state ------------------------------------------------------------


@dataclass(frozen=True)
class NodeState:
    name: str
    role: str                                   # "wca" | "dca" | "eca"
    interest_registry: InterestRegistry
    domain: Optional[str] = None
    host: Optional[str] = None
    agent_registry: Optional[AgentRegistry] = None
    hosts: tuple[str, ...] = ()                 # DCA: hosts of its domain
    domains: tuple[str, ...] = ()               # DCA: peer domains; ECA: all domains
    dropped_data: int = 0

    def neighbors(self) -> frozenset:
        return self.interest_registry.neighbors


def wca_state(topology: Topology, domain: str, host: str) -> NodeState:
    agents: list[AgentDescriptor] = topology.agents_on(domain, host)
    areg = AgentRegistry(host, domain)
    for a in agents:
        areg = register_agent(areg, a)
    neighbors = {LocalAgent(a.address.agent) for a in agents}
    neighbors |= {PeerWca(h) for h in topology.hosts_in(domain) if h != host}
    neighbors.add(OwnDca())
    name = wca_name(domain, host)
    return NodeState(name, "wca", InterestRegistry(name, frozenset(neighbors)),
                     domain=domain, host=host, agent_registry=areg)


def dca_state(topology: Topology, domain: str) -> NodeState:
    hosts = tuple(topology.hosts_in(domain))
    peers = tuple(d for d in topology.domains if d != domain)
    neighbors = {PeerWca(h) for h in hosts} | {PeerDca(d) for d in peers} | {Eca()}
    name = dca_name(domain)
    return NodeState(name, "dca", InterestRegistry(name, frozenset(neighbors)),
                     domain=domain, hosts=hosts, domains=peers)


def eca_state(topology: Topology) -> NodeState:
    neighbors = frozenset(PeerDca(d) for d in topology.domains)
    return NodeState(ECA_NAME, "eca", InterestRegistry(ECA_NAME, neighbors),
                     domains=tuple(topology.domains))


def initial_states(topology: Topology) -> dict[str, NodeState]:
    states = {ECA_NAME: eca_state(topology)}
    for d in topology.domains:
        states[dca_name(d)] = dca_state(topology, d)
    for d, h in topology.hosts:
        states[wca_name(d, h)] = wca_state(topology, d, h)
    return states


def _check_sender(s: NodeState, sender: NodeRef, allowed: tuple) -> None:
    if not isinstance(sender, allowed) or sender not in s.neighbors():
        raise RoutingError(f"{s.name}: no link from {sender}")


def _register(s: NodeState, i: Interest, sender: NodeRef, now: float) -> NodeState:
    reg, _ = register_interest(s.interest_registry, i, sender, now)
    return replace(s, interest_registry=reg)


def _drop(s: NodeState) -> NodeState:
    return replace(s, dropped_data=s.dropped_data + 1)


# -- WCA -------------------------------------------------------------------


def wca_handle_interest(s: NodeState, msg: Message, sender: NodeRef,
                        now: float) -> tuple[NodeState, list[OutboundAction]]:
    _check_sender(s, sender, (LocalAgent, PeerWca, OwnDca))
    i = msg.payload.interest
    if i.interest_id in s.interest_registry:
        return s, []
    cls = classify_scope(i, s.host, s.domain)

    def collect() -> list[OutboundAction]:
        return [OutboundAction(LocalAgent(a), originate(
                    CollectRequest(i.interest_id, a, i.category), s.name))
                for a in find_servicers(s.agent_registry, i.category)]

    if not isinstance(sender, LocalAgent):
        actions = collect()
        if not actions:
            return s, []            # nobody here can service it: discard
        return _register(s, i, sender, now), actions

    if cls in (RoutingClass.OTHER_DOMAIN_HOST, RoutingClass.OTHER_DOMAIN_WIDE):
        return _register(s, i, sender, now), [OutboundAction(OwnDca(), msg)]

    if cls is RoutingClass.SAME_DOMAIN_OTHER_HOST:
        target = PeerWca(i.scope.host)
        if target not in s.neighbors():
            notice = originate(InabilityNotice(i.interest_id), s.name)
            return s, [OutboundAction(sender, notice)]
        return _register(s, i, sender, now), [OutboundAction(target, msg)]

    if cls is RoutingClass.LOCAL_HOST:
        actions = collect()
        if actions:
            return _register(s, i, sender, now), actions
        if i.scope is Level.LOCAL:
            notice = originate(InabilityNotice(i.interest_id), s.name)
            return s, [OutboundAction(sender, notice)]
        return s, []

    # domain- or enterprise-wide: serve locally and pass the interest upward
    actions = collect() + [OutboundAction(OwnDca(), msg)]
    return _register(s, i, sender, now), actions


def _wants(reg, e: EventRecord, now: float) -> bool:
    i = reg.interest
    return (i.live(now) and i.category == e.category
            and eval_predicate(i.predicate, e)
            and in_scope(i.scope, i.origin, e.source))


def wca_handle_data(s: NodeState, msg: Message, sender: NodeRef,
                    now: float) -> tuple[NodeState, list[OutboundAction]]:
    _check_sender(s, sender, (LocalAgent, PeerWca, OwnDca))
    e = msg.payload.event
    regs = [r for r in matching_registrations(s.interest_registry, e, now)
            if in_scope(r.interest.scope, r.interest.origin, e.source)]

    if isinstance(sender, LocalAgent):
        actions: list[OutboundAction] = []
        served: set[str] = set()
        for r in regs:
            up = r.upstream
            data = replace(msg, payload=DataMsg(e, r.interest.interest_id))
            if isinstance(up, LocalAgent):
                if up.agent == sender.agent or up.agent in served:
                    continue
                served.add(up.agent)
                actions.append(OutboundAction(up, data))
            else:
                actions.append(OutboundAction(up, data))
        return s, actions

    # remote data is only ever handed to local agents, never re-forwarded
    tag = msg.payload.for_interest
    if tag is not None:
        r = s.interest_registry.get(tag)
        if r is None or not isinstance(r.upstream, LocalAgent) or not _wants(r, e, now):
            return _drop(s), []
        return s, [OutboundAction(r.upstream, msg)]
    actions, served = [], set()
    for r in regs:
        if isinstance(r.upstream, LocalAgent) and r.upstream.agent not in served:
            served.add(r.upstream.agent)
            actions.append(OutboundAction(r.upstream, replace(
                msg, payload=DataMsg(e, r.interest.interest_id))))
    return s, actions


# -- DCA -------------------------------------------------------------------


def dca_handle_interest(s: NodeState, msg: Message, sender: NodeRef,
                        now: float) -> tuple[NodeState, list[OutboundAction]]:
    _check_sender(s, sender, (PeerWca, PeerDca, Eca))
    i = msg.payload.interest
    if i.interest_id in s.interest_registry:
        return s, []
    cls = classify_scope(i, None, s.domain)
    own = [PeerWca(h) for h in s.hosts]
    targets: list[NodeRef] = []

    if isinstance(sender, Eca):
        targets = own
    elif isinstance(sender, PeerDca):
        if cls is RoutingClass.SAME_DOMAIN_OTHER_HOST:
            targets = [w for w in own if w.host == i.scope.host]
        elif cls is RoutingClass.OWN_DOMAIN_WIDE:
            targets = own
    else:
        others = [w for w in own if w != sender]
        if cls in (RoutingClass.OTHER_DOMAIN_HOST, RoutingClass.OTHER_DOMAIN_WIDE):
            peer = PeerDca(i.scope.domain)
            targets = [peer] if peer in s.neighbors() else []
        elif cls is RoutingClass.SAME_DOMAIN_OTHER_HOST:
            targets = [w for w in others if w.host == i.scope.host]
        elif cls is RoutingClass.OWN_DOMAIN_WIDE:
            targets = others
        elif cls is RoutingClass.ENTERPRISE_WIDE:
            targets = others + [Eca()]

    if not targets:
        return s, []
    return _register(s, i, sender, now), [OutboundAction(t, msg) for t in targets]


def _reverse(s: NodeState, msg: Message, sender: NodeRef) -> tuple[NodeState, list[OutboundAction]]:
    tag = msg.payload.for_interest
    r = s.interest_registry.get(tag) if tag is not None else None
    if r is None or r.upstream == sender:
        return _drop(s), []
    return s, [OutboundAction(r.upstream, msg)]


def dca_handle_data(s: NodeState, msg: Message, sender: NodeRef,
                    now: float = 0.0) -> tuple[NodeState, list[OutboundAction]]:
    _check_sender(s, sender, (PeerWca, PeerDca, Eca))
    return _reverse(s, msg, sender)


# -- ECA -------------------------------------------------------------------


def eca_handle(s: NodeState, msg: Message, sender: NodeRef,
               now: float = 0.0) -> tuple[NodeState, list[OutboundAction]]:
    _check_sender(s, sender, (PeerDca,))
    if isinstance(msg.payload, DataMsg):
        return _reverse(s, msg, sender)
    if not isinstance(msg.payload, InterestMsg):
        return s, []
    i = msg.payload.interest
    if i.interest_id in s.interest_registry:
        return s, []
    cls = classify_scope(i, None, None)
    if cls is RoutingClass.ENTERPRISE_WIDE:
        targets = [PeerDca(d) for d in s.domains if PeerDca(d) != sender]
    elif cls in (RoutingClass.OTHER_DOMAIN_HOST, RoutingClass.OTHER_DOMAIN_WIDE):
        peer = PeerDca(i.scope.domain)
        targets = [peer] if peer in s.neighbors() and peer != sender else []
    else:
        targets = []
    if not targets:
        return s, []
    return _register(s, i, sender, now), [OutboundAction(t, msg) for t in targets]


def handle(s: NodeState, msg: Message, sender: NodeRef,
           now: float) -> tuple[NodeState, list[OutboundAction]]:
    """Dispatch a message to the handler for the node's role."""
    if s.role == "eca":
        return eca_handle(s, msg, sender, now)
    is_interest = isinstance(msg.payload, InterestMsg)
    is_data = isinstance(msg.payload, DataMsg)
    if s.role == "wca":
        if is_interest:
            return wca_handle_interest(s, msg, sender, now)
        if is_data:
            return wca_handle_data(s, msg, sender, now)
    elif s.role == "dca":
        if is_interest:
            return dca_handle_interest(s, msg, sender, now)
        if is_data:
            return dca_handle_data(s, msg, sender, now)
    return s, []
