import json
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from coopids.detection import DetectionError
from coopids.harness import (
    FormatError,
    SimConfig,
    SimulationError,
    compare_reports,
    load_topology,
    load_trace,
    measure_overhead,
    parse_rules,
    random_scenario,
    run,
    run_oracle,
    serialize_rules,
    stratified_sample,
    synth_flood_trace,
    synth_kdd,
    topology_from_text,
)
from coopids.harness.formats import (
    format_event_trace,
    format_kdd_trace,
    parse_event_trace,
    parse_kdd_trace,
)
from coopids.harness.kdd import KDD_FEATURES, largest_remainder, record_class
from coopids.model import AgentAddress, TopologyError, dca_name, make_event

from helpers import (
    WEBSRV,
    demo,
    demo_flood,
    hop_violations,
    pair_sets,
    restricted_oracle_deliveries,
    run_pair,
    ten_hosts,
)

# -- ingestion -------------------------------------------------------------------


def test_demo_topology_has_three_dcas():
    topo, rules = demo()
    assert len(topo.domains) == 3
    assert sum(1 for n in topo.node_names() if n.startswith("dca:")) == 3
    assert "icmp_flood" in rules.detection


def test_empty_topology_file(tmp_path):
    p = tmp_path / "empty.topo"
    p.write_text("")
    with pytest.raises((FormatError, TopologyError)):
        load_topology(p)


def test_agent_without_host_names_agent():
    with pytest.raises((FormatError, TopologyError), match="ba7"):
        topology_from_text("domain d\nhost h domain=d\nagent ba7 produces=x\n")


def test_parse_error_carries_line_number():
    with pytest.raises(FormatError) as err:
        topology_from_text("domain d\nhost h domain=d\nfrobnicate x\n")
    assert err.value.line == 3


def _kdd_line(rng, label="normal."):
    rec = synth_kdd(1, rng.randint(0, 999))[0]
    return format_kdd_trace([rec]).strip().rsplit(",", 1)[0] + "," + label


def test_ten_line_kdd_file(tmp_path):
    rng = random.Random(0)
    p = tmp_path / "ten.kdd"
    p.write_text("\n".join(_kdd_line(rng, lab) for lab in ["normal.", "smurf."] * 5) + "\n")
    recs = load_trace(p, "kdd")
    assert [r.seq for r in recs] == list(range(10))
    for r in recs:
        names = [k for k, _ in r.attributes]
        assert len([k for k in names if k != "label"]) == len(KDD_FEATURES) == 41
        assert r.get("label") in ("normal", "smurf")
    assert [record_class(r) for r in recs[:2]] == ["Normal", "DoS"]


def test_kdd_wrong_column_count():
    rng = random.Random(1)
    good = _kdd_line(rng)
    with pytest.raises(FormatError) as err:
        parse_kdd_trace(good + "\n" + good.split(",", 1)[1] + "\n")
    assert err.value.line == 2


def test_kdd_round_trip():
    recs = synth_kdd(50, 3)
    assert parse_kdd_trace(format_kdd_trace(recs)) == recs


def test_event_trace_out_of_order():
    text = "time,host,agent,category\n1.0,d/h,a,x\n0.5,d/h,a,x\n"
    with pytest.raises(FormatError, match="backwards") as err:
        parse_event_trace(text)
    assert err.value.line == 3


def test_empty_event_trace():
    assert parse_event_trace("time,host,agent,category,v\n") == []


def test_event_trace_round_trip():
    topo, trace, _ = demo_flood(3, duration=2, seed=4)
    assert parse_event_trace(format_event_trace(trace), topo) == trace


def test_event_trace_bare_host_resolves():
    topo, _ = demo()
    recs = parse_event_trace("time,host,agent,category,dst\n0,websrv,ba1,icmp.request,websrv\n", topo)
    assert recs[0].source == WEBSRV and recs[0].get("dst") == "websrv"


def test_rules_round_trip():
    text = ('rule_id=r; category=c; predicate=v >= 2 && tag eq "a;b"; window=3; threshold=2;'
            ' scope=domain; class=Probe  # trailing note\n'
            'kind=signature; rule_id=s; predicate=service eq "ecr_i"; class=r2l\n')
    rs = parse_rules(text)
    assert rs.detection["r"].predicate.constraints[1].literal == "a;b"
    assert rs.signatures["s"].predicted == "R2U"
    assert parse_rules(serialize_rules(rs)) == rs


def test_rules_missing_field_line():
    with pytest.raises(FormatError) as err:
        parse_rules("\nrule_id=r; category=c; window=3; threshold=2; scope=domain\n")
    assert err.value.line == 2


# -- stratified sampling ---------------------------------------------------------


def _labelled(counts):
    recs, seq = [], 0
    for label, n in counts.items():
        for _ in range(n):
            recs.append(make_event(seq, float(seq), WEBSRV, "kdd.connection", {"label": label}))
            seq += 1
    random.Random(0).shuffle(recs)
    return recs


def test_sample_eighty_twenty():
    recs = _labelled({"normal": 80, "smurf": 20})
    out = stratified_sample(recs, 10, seed=5)
    assert Counter(record_class(r) for r in out) == {"Normal": 8, "DoS": 2}
    assert [r.seq for r in out] == sorted(r.seq for r in out)


def test_sample_identity():
    recs = _labelled({"normal": 7, "smurf": 3})
    assert stratified_sample(recs, 10, seed=1) == recs


def test_sample_errors():
    recs = _labelled({"normal": 3})
    with pytest.raises(ValueError):
        stratified_sample(recs, 4, seed=0)
    unlabeled = [make_event(0, 0.0, WEBSRV, "kdd.connection", {})]
    with pytest.raises(DetectionError):
        stratified_sample(unlabeled, 1, seed=0)


def test_sample_depends_on_seed_only():
    recs = synth_kdd(500, 2)
    assert stratified_sample(recs, 50, 1) == stratified_sample(recs, 50, 1)
    assert stratified_sample(recs, 50, 1) != stratified_sample(recs, 50, 2)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from(["normal", "smurf", "satan", "imap", "rootkit"]),
                       st.integers(1, 40), min_size=1), st.data())
def test_sample_within_one_of_proportion(counts, data):
    recs = _labelled(counts)
    n = data.draw(st.integers(0, len(recs)))
    out = stratified_sample(recs, n, seed=data.draw(st.integers(0, 9)))
    assert len(out) == n
    got = Counter(record_class(r) for r in out)
    pop = Counter(record_class(r) for r in recs)
    for c, size in pop.items():
        assert abs(got[c] - Fraction(n * size, len(recs))) < 1


def test_largest_remainder_ties_and_sum():
    assert largest_remainder(3, {"a": 1, "b": 1}) == {"a": 2, "b": 1}
    assert sum(largest_remainder(7, {"a": 3, "b": 5, "c": 11}).values()) == 7


def test_synth_kdd_mix_and_determinism():
    recs = synth_kdd(200, 9, mix={"Normal": 1, "DoS": 1})
    assert Counter(record_class(r) for r in recs) == {"Normal": 100, "DoS": 100}
    assert synth_kdd(200, 9, mix={"Normal": 1, "DoS": 1}) == recs


# -- flood synthesis -------------------------------------------------------------


def test_flood_counts():
    topo, trace, _ = demo_flood(12)
    assert len(trace) == 120
    assert all(e.category == "icmp.request" for e in trace)
    assert len({e.source for e in trace}) >= 2


def test_flood_zero_rate_background_only():
    topo, rules = demo()
    trace = synth_flood_trace(topo, WEBSRV, 0, 10, background_rate=5, seed=1)
    assert len(trace) == 50 and all(e.category != "icmp.request" for e in trace)
    assert run(topo, trace, rules).alerts == []


def test_flood_seeds_change_order_not_counts():
    topo, rules = demo()
    a = synth_flood_trace(topo, WEBSRV, 5, 10, background_rate=2, seed=1)
    b = synth_flood_trace(topo, WEBSRV, 5, 10, background_rate=2, seed=2)
    assert Counter(e.category for e in a) == Counter(e.category for e in b)
    assert [(e.source, e.category) for e in a] != [(e.source, e.category) for e in b]


# -- run vs oracle ----------------------------------------------------------------


def test_single_host_local_rule():
    topo = topology_from_text("domain d\nhost h domain=d\nagent a host=h produces=x rules=r\n")
    rules = parse_rules("rule_id=r; category=x; predicate=; window=5; threshold=2; scope=local; class=DoS")
    trace = [make_event(k, t, AgentAddress("d", "h", "a"), "x")
             for k, t in enumerate([0.0, 1.0, 6.0, 7.0])]
    r, o = run_pair(topo, trace, rules)
    assert pair_sets(r) == pair_sets(o)
    assert [a.time for a in r.alerts] == [1.0, 7.0]
    assert r.deliveries == []


def test_local_interest_ignores_other_hosts():
    topo = topology_from_text(
        "domain d\nhost h1 domain=d\nhost h2 domain=d\n"
        "agent a host=h1 produces=x rules=r\nagent b host=h2 produces=x\n")
    rules = parse_rules("rule_id=r; category=x; predicate=; window=5; threshold=1; scope=local; class=DoS")
    trace = [make_event(0, 0.0, AgentAddress("d", "h2", "b"), "x")]
    for rep in run_pair(topo, trace, rules):
        assert rep.deliveries == [] and rep.alerts == []


def test_demo_alert_matches_oracle():
    topo, trace, rules = demo_flood(12)
    r, o = run_pair(topo, trace, rules)
    assert pair_sets(r) == pair_sets(o)
    assert len(r.alerts) == 1
    a = r.alerts[0]
    assert a.raiser == WEBSRV and a.alert_class == "DoS"
    assert {src.agent for src, _ in a.evidence} >= {"ba1", "ba2"}


@pytest.mark.parametrize("seed", range(25))
def test_random_scenarios_match_oracle(seed):
    sc = random_scenario(seed)
    r, o = run_pair(sc.topology, sc.trace, sc.rules, seed=seed)
    assert compare_reports(r, o) == {"deliveries": (set(), set()), "alerts": (set(), set())}
    assert not hop_violations(r)


def test_deterministic_report():
    sc = random_scenario(77)
    a = run(sc.topology, sc.trace, sc.rules, SimConfig(seed=3)).to_json()
    b = run(sc.topology, sc.trace, sc.rules, SimConfig(seed=3)).to_json()
    assert a == b
    assert set(json.loads(a)) == {"alerts", "deliveries", "counters", "metrics", "seed",
                                  "config_digest"}


def test_counters_match_message_log():
    sc = random_scenario(12)
    r = run(sc.topology, sc.trace, sc.rules)
    tally = Counter(f"{m.kind}:{m.tier}" for m in r.messages)
    assert {k: v for k, v in r.counters.items() if not k.startswith("dropped")} == dict(tally)


def test_unknown_agent_rejected():
    topo, rules = demo()
    trace = [make_event(0, 0.0, AgentAddress("lan1", "websrv", "ghost"), "icmp.request")]
    with pytest.raises(SimulationError, match="ghost"):
        run(topo, trace, rules)


def test_negative_fault_time():
    with pytest.raises(SimulationError):
        SimConfig(faults=((-1.0, "eca"),))


def test_dca_fault_restricts_to_surviving_paths():
    sc = random_scenario(1003, fixed_domains=3)
    removed = dca_name("d1")
    base, base_o = run_pair(sc.topology, sc.trace, sc.rules)
    hit, hit_o = run_pair(sc.topology, sc.trace, sc.rules, faults=[(0.0, removed)])
    expected = restricted_oracle_deliveries(sc.topology, sc.trace, sc.rules, base_o.interests, removed)
    assert hit.delivery_set() == expected == hit_o.delivery_set()
    assert hit.delivery_set() < base.delivery_set()
    for d in hit.deliveries:
        assert removed not in d.trace_path


def test_removed_agent_drops_its_events():
    topo, trace, rules = demo_flood(12)
    r, o = run_pair(topo, trace, rules, faults=[(0.0, "ba:lan1/ws2/ba2")])
    assert pair_sets(r) == pair_sets(o)
    assert all(d.agent != "ba:lan1/ws2/ba2" for d in r.deliveries)


# -- overhead ----------------------------------------------------------------------


def test_overhead_single_subscriber():
    topo, trace, rules = ten_hosts()
    r, o = run_pair(topo, trace, rules)
    m = measure_overhead(r, o)
    # producer ba->wca->dca->eca->dca->wca->subscriber: six links
    assert m["data_messages_per_event"] == 6.0
    assert m["flat_messages_per_event"] == 10.0
    assert m["data_ratio"] == pytest.approx(0.6)


def test_overhead_without_interests():
    topo = topology_from_text("domain d\nhost h1 domain=d\nhost h2 domain=d\n"
                              "agent a host=h1 produces=x\nagent b host=h2 produces=x\n")
    trace = [make_event(0, 0.0, AgentAddress("d", "h1", "a"), "x")]
    r, o = run_pair(topo, trace, parse_rules(""))
    m = measure_overhead(r, o)
    assert m["data_messages"] == 0 and m["ratio"] == 0


def test_overhead_digest_mismatch():
    topo, trace, rules = ten_hosts()
    r = run(topo, trace, rules)
    o = run_oracle(topo, trace[:5], rules)
    with pytest.raises(SimulationError):
        measure_overhead(r, o)
