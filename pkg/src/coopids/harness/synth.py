"""Trace and scenario generators."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from ..detection import ALERT_CLASSES, DetectionRule
from ..model import (
    AgentAddress,
    AgentDecl,
    Constraint,
    DomainDecl,
    DomainDirected,
    EventRecord,
    HostDecl,
    HostDirected,
    Level,
    Op,
    Predicate,
    Topology,
    TopologyDescription,
    make_event,
    validate_topology,
)
from .formats import RuleSet

FLOOD_CATEGORY = "icmp.request"
BACKGROUND_CATEGORIES = ("tcp.syn", "udp.packet")


def synth_flood_trace(topology: Topology, target: AgentAddress, rate: float,
                      duration: float, background_rate: float = 0.0,
                      seed: int = 0) -> list[EventRecord]:
    """ICMP echo requests aimed at ``target``'s host plus unrelated background.

    Flood events arrive evenly spaced at ``rate`` per second and are
    attributed to a seeded random choice among the agents that collect
    ICMP requests; background events land at seeded random times.
    """
    if rate < 0 or background_rate < 0 or duration < 0:
        raise ValueError("rates and duration must be non-negative")
    rng = random.Random(seed)
    sources = [a.address for a in topology.agents if FLOOD_CATEGORY in a.produces] or [target]
    everyone = [a.address for a in topology.agents] or [target]
    raw: list[tuple[float, int, AgentAddress, str, dict]] = []
    n_flood = int(round(rate * duration))
    for k in range(n_flood):
        attrs = {"proto": "icmp", "type": 8, "dst": target.host}
        raw.append((k / rate, len(raw), rng.choice(sources), FLOOD_CATEGORY, attrs))
    for _ in range(int(round(background_rate * duration))):
        cat = rng.choice(BACKGROUND_CATEGORIES)
        attrs = {"proto": "tcp" if cat == "tcp.syn" else "udp", "dst": target.host}
        raw.append((rng.uniform(0, duration), len(raw), rng.choice(everyone), cat, attrs))
    raw.sort(key=lambda x: (x[0], x[1]))
    return [make_event(seq, t, src, cat, attrs) for seq, (t, _, src, cat, attrs) in enumerate(raw)]


# -- random scenarios ------------------------------------------------------


@dataclass
class Scenario:
    topology: Topology
    rules: RuleSet
    trace: list[EventRecord]
    seed: int


CATEGORIES = ("c0", "c1", "c2")


def _random_predicate(rng: random.Random) -> Predicate:
    pool = [
        Constraint("v", Op.GE, rng.randint(0, 6)),
        Constraint("v", Op.LT, rng.randint(3, 10)),
        Constraint("tag", Op.TEXT_EQ, rng.choice(["a", "b"])),
        Constraint("tag", Op.PREFIX, "a"),
        Constraint("w", Op.NE, rng.randint(0, 2)),
    ]
    k = rng.choice([0, 0, 1, 1, 2])
    return Predicate(tuple(rng.sample(pool, k)))


def random_scenario(seed: int, max_domains: int = 3, max_hosts: int = 4, max_agents: int = 3,
                    max_events: int = 200, fixed_domains: Optional[int] = None) -> Scenario:
    rng = random.Random(seed)
    raw = TopologyDescription()
    n_domains = fixed_domains or rng.randint(1, max_domains)
    hosts: list[tuple[str, str]] = []
    for d in range(n_domains):
        dom = f"d{d}"
        raw.domains.append(DomainDecl(dom))
        for h in range(rng.randint(1, max_hosts)):
            raw.hosts.append(HostDecl(f"h{h}", dom))
            hosts.append((dom, f"h{h}"))

    rules = RuleSet()
    agents: list[AgentAddress] = []
    for dom, host in hosts:
        for a in range(rng.randint(0, max_agents)):
            produces = tuple(sorted(rng.sample(CATEGORIES, rng.randint(1, 2))))
            addr = AgentAddress(dom, host, f"a{a}")
            rule_ids = []
            for _ in range(rng.randint(0, 2)):
                rid = f"r{len(rules.detection)}"
                d2, h2 = rng.choice(hosts)
                scope = rng.choice([
                    Level.LOCAL, Level.DOMAIN, Level.ENTERPRISE, Level.PROPAGATED,
                    HostDirected(d2, h2), DomainDirected(d2),
                ])
                rules.detection[rid] = DetectionRule(
                    rid, rng.choice(CATEGORIES), _random_predicate(rng),
                    window=float(rng.randint(1, 10)), threshold=rng.randint(1, 5),
                    scope=scope, alert_class=rng.choice(ALERT_CLASSES))
                rule_ids.append(rid)
            raw.agents.append(AgentDecl(f"a{a}", f"{dom}/{host}", produces, tuple(rule_ids)))
            agents.append(addr)
    topology = validate_topology(raw)

    trace: list[EventRecord] = []
    if agents:
        times = sorted(round(rng.uniform(0, 50), 3) for _ in range(rng.randint(1, max_events)))
        for seq, t in enumerate(times):
            attrs = {"v": rng.randint(0, 9), "tag": rng.choice(["a", "ab", "b"])}
            if rng.random() < 0.7:
                attrs["w"] = rng.randint(0, 2)
            trace.append(make_event(seq, t, rng.choice(agents), rng.choice(CATEGORIES), attrs))
    return Scenario(topology, rules, trace, seed)
