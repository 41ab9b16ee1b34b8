"""Scenario builders and log checks shared by the unit and acceptance tests."""

from coopids.data import path as data_path_of
from coopids.harness import (
    SimConfig,
    data_path,
    load_rules,
    load_topology,
    run,
    run_oracle,
    synth_flood_trace,
    topology_from_text,
)
from coopids.harness.formats import parse_rules
from coopids.model import (
    AgentAddress,
    DomainDirected,
    HostDirected,
    Level,
    ba_name,
    eval_predicate,
    in_scope,
    make_event,
    wca_name,
)

WEBSRV = AgentAddress("lan1", "websrv", "ba1")


def demo():
    return load_topology(data_path_of("icmp_demo.topo")), load_rules(data_path_of("icmp_demo.rules"))


def demo_flood(rate, duration=10.0, seed=1):
    topo, rules = demo()
    return topo, synth_flood_trace(topo, WEBSRV, rate, duration, seed=seed), rules


def ten_hosts(n_events=20):
    """Two domains of five hosts; one enterprise subscriber on d0/h0, events in d1."""
    lines = ["domain d0", "domain d1"]
    lines += [f"host h{h} domain={d}" for d in ("d0", "d1") for h in range(5)]
    for d in ("d0", "d1"):
        for h in range(5):
            extra = " rules=watch" if (d, h) == ("d0", 0) else ""
            lines.append(f"agent a host={d}/h{h} produces=x{extra}")
    topo = topology_from_text("\n".join(lines))
    rules = parse_rules("rule_id=watch; category=x; predicate=; window=5; threshold=1000;"
                        " scope=enterprise; class=DoS")
    trace = [make_event(k, float(k), AgentAddress("d1", f"h{k % 5}", "a"), "x")
             for k in range(n_events)]
    return topo, trace, rules


def pair_sets(report):
    return report.delivery_set(), report.alert_set()


# -- message-log checks ------------------------------------------------------


def hop_violations(report, limit=6):
    bad = []
    for d in report.deliveries:
        if d.hop_count > limit or len(set(d.trace_path)) != len(d.trace_path):
            bad.append(d)
    for m in report.messages:
        if len(set(m.trace_path)) != len(m.trace_path):
            bad.append(m)
    return bad


def scope_kind(scope) -> str:
    return type(scope).__name__ if isinstance(scope, (HostDirected, DomainDirected)) else scope.value


def scope_violations(report, seen=None):
    """Messages that leave the region their interest is confined to.

    ``seen`` (a dict) collects how many messages of each scope kind were checked.
    """
    bad = []
    receivers: dict[str, set[str]] = {}
    for m in report.messages:
        i = report.interests.get(m.interest_id) if m.interest_id else None
        if i is None:
            continue
        s, origin = i.scope, i.origin
        if seen is not None:
            seen[scope_kind(s)] = seen.get(scope_kind(s), 0) + 1
        if s is Level.LOCAL and m.tier != "ba-wca":
            bad.append(m)
        own_domain = s is Level.DOMAIN or (isinstance(s, DomainDirected) and s.domain == origin.domain)
        if own_domain and m.tier in ("dca-dca", "dca-eca"):
            bad.append(m)
        if isinstance(s, HostDirected) and s.domain == origin.domain and m.tier in ("dca-dca", "dca-eca"):
            bad.append(m)
        if isinstance(s, HostDirected) and m.kind == "interest" and m.dst.startswith("wca:"):
            receivers.setdefault(i.interest_id, set()).add(m.dst)
    for iid, wcas in receivers.items():
        i = report.interests[iid]
        others = wcas - {wca_name(i.origin.domain, i.origin.host)}
        target = wca_name(i.scope.domain, i.scope.host)
        if target != wca_name(i.origin.domain, i.origin.host) and others != {target}:
            bad.append((iid, sorted(wcas)))
    return bad


def restricted_oracle_deliveries(topology, trace, rules, interests, removed):
    """Fault-free flat deliveries, kept only where some reverse path avoids ``removed``."""
    per_agent: dict = {}
    for i in interests.values():
        per_agent.setdefault(i.origin, []).append(i)
    produces = {a.address: a.produces for a in topology.agents}
    out = set()
    for e in trace:
        if e.category not in produces[e.source]:
            continue
        for a in topology.agents:
            c = a.address
            if c == e.source:
                continue
            for i in per_agent.get(c, []):
                if (i.category == e.category and eval_predicate(i.predicate, e)
                        and in_scope(i.scope, c, e.source)
                        and removed not in data_path(i, e.source, c)):
                    out.add((e.seq, ba_name(c)))
                    break
    return out


def run_pair(topology, trace, rules, seed=0, faults=()):
    cfg = SimConfig(seed=seed, faults=tuple(faults))
    return run(topology, trace, rules, cfg), run_oracle(topology, trace, rules, cfg)
