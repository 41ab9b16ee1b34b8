"""Basic-agent detection: windowed threshold rules, interest issuance,
signature classification of connection records and per-class scoring."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .model import (
    AgentAddress,
    EventRecord,
    Interest,
    InterestScope,
    Level,
    Predicate,
    TRUE,
    eval_predicate,
    in_scope,
    make_interest,
)

ALERT_CLASSES = ("DoS", "R2U", "U2R", "Probe")
CLASSES = ALERT_CLASSES + ("Normal",)

CLASS_TITLES = {
    "DoS": "Denial of Service (DoS)",
    "R2U": "Remote to User (R2U)",
    "U2R": "User to Root (U2R)",
    "Probe": "Probe",
    "Normal": "Normal",
}


class DetectionError(ValueError):
    pass


def normalize_class(name: str) -> str:
    key = name.strip().lower()
    for c in CLASSES:
        if c.lower() == key:
            return c
    if key in ("r2l", "r2c"):
        return "R2U"
    raise DetectionError(f"unknown class {name!r}")


@dataclass(frozen=True)
class DetectionRule:
    rule_id: str
    category: str
    predicate: Predicate = TRUE
    window: float = 10.0
    threshold: int = 100
    scope: InterestScope = Level.LOCAL
    alert_class: str = "DoS"

    def __post_init__(self):
        if self.window <= 0:
            raise DetectionError(f"rule {self.rule_id}: window must be positive")
        if self.threshold < 1:
            raise DetectionError(f"rule {self.rule_id}: threshold must be >= 1")
        if self.alert_class not in ALERT_CLASSES:
            raise DetectionError(f"rule {self.rule_id}: unknown alert class {self.alert_class!r}")


@dataclass(frozen=True)
class SignatureRule:
    rule_id: str
    predicate: Predicate
    predicted: str
    category: str = "kdd.connection"


@dataclass(frozen=True)
class Alert:
    alert_id: str
    raiser: AgentAddress
    rule_id: str
    alert_class: str
    time: float
    evidence: tuple[tuple[AgentAddress, int], ...]
    note: str = "block-recommended"

    def total(self) -> int:
        return sum(n for _, n in self.evidence)


@dataclass(frozen=True)
class WindowState:
    """Matching-event timestamps per (rule, source), plus per-rule bookkeeping."""

    times: dict = field(default_factory=dict)        # (rule_id, source) -> tuple[float, ...]
    spans: dict = field(default_factory=dict)        # rule_id -> window length
    last_alert: dict = field(default_factory=dict)   # rule_id -> time of last alert

    def add(self, rule: DetectionRule, source: AgentAddress, t: float) -> "WindowState":
        key = (rule.rule_id, source)
        lo = t - rule.window
        kept = tuple(x for x in self.times.get(key, ()) if x > lo) + (t,)
        times = {k: v for k, v in self.times.items()}
        times[key] = kept
        # trim the other sources of this rule too so memory stays bounded
        for k, v in times.items():
            if k[0] == rule.rule_id and k != key:
                times[k] = tuple(x for x in v if x > lo)
        spans = dict(self.spans)
        spans[rule.rule_id] = rule.window
        return replace(self, times=times, spans=spans)


def window_count(w: WindowState, rule_id: str, now: float) -> int:
    span = w.spans.get(rule_id)
    if span is None:
        return 0
    lo = now - span
    return sum(1 for (rid, _), ts in w.times.items() if rid == rule_id
               for x in ts if lo < x <= now)


def evidence_at(w: WindowState, rule_id: str, now: float) -> tuple[tuple[AgentAddress, int], ...]:
    span = w.spans.get(rule_id)
    if span is None:
        return ()
    lo = now - span
    out = []
    for (rid, src), ts in w.times.items():
        if rid != rule_id:
            continue
        n = sum(1 for x in ts if lo < x <= now)
        if n:
            out.append((src, n))
    return tuple(sorted(out))


def check_rule(rule: DetectionRule, w: WindowState, now: float,
               raiser: Optional[AgentAddress] = None) -> Optional[Alert]:
    if window_count(w, rule.rule_id, now) < rule.threshold:
        return None
    last = w.last_alert.get(rule.rule_id)
    if last is not None and now - last < rule.window:
        return None
    raiser = raiser or AgentAddress("-", "-", "-")
    return Alert(f"{raiser}|{rule.rule_id}|{now!r}", raiser, rule.rule_id,
                 rule.alert_class, now, evidence_at(w, rule.rule_id, now))


def derive_interest(rule: DetectionRule, agent: AgentAddress, counter: int,
                    now: float = 0.0) -> Interest:
    if rule.scope is Level.LOCAL:
        raise DetectionError(f"rule {rule.rule_id} only needs local data; no interest to derive")
    return make_interest(agent, counter, rule.scope, rule.category, rule.predicate, issued_at=now)


@dataclass(frozen=True)
class AgentState:
    address: AgentAddress
    windows: WindowState = field(default_factory=WindowState)
    issued: frozenset = frozenset()
    counter: int = 0

    def mark_issued(self, rule_ids: Iterable[str], n: int) -> "AgentState":
        return replace(self, issued=self.issued | frozenset(rule_ids), counter=self.counter + n)


def rule_applies(rule: DetectionRule, observer: AgentAddress, e: EventRecord) -> bool:
    return (e.category == rule.category
            and eval_predicate(rule.predicate, e)
            and in_scope(rule.scope, observer, e.source))


def observe_event(state: AgentState, rules: Sequence[DetectionRule], e: EventRecord,
                  now: float) -> tuple[AgentState, list[Alert], list[Interest]]:
    alerts: list[Alert] = []
    interests: list[Interest] = []
    for rule in rules:
        if not rule_applies(rule, state.address, e):
            continue
        w = state.windows.add(rule, e.source, e.time)
        alert = check_rule(rule, w, now, state.address)
        if alert is not None:
            w = replace(w, last_alert={**w.last_alert, rule.rule_id: now})
            alerts.append(alert)
        state = replace(state, windows=w)
        if rule.scope is not Level.LOCAL and rule.rule_id not in state.issued:
            interests.append(derive_interest(rule, state.address, state.counter, now))
            state = state.mark_issued([rule.rule_id], 1)
    return state, alerts, interests


# -- signature classification ---------------------------------------------


def classify_record(rb: Sequence[SignatureRule], r: EventRecord) -> str:
    for sig in rb:
        if eval_predicate(sig.predicate, r):
            return sig.predicted
    return "Normal"


def confusion(pairs: Iterable[tuple[str, str]]) -> dict[tuple[str, str], int]:
    counts: dict[tuple[str, str], int] = {}
    for actual, predicted in pairs:
        counts[(actual, predicted)] = counts.get((actual, predicted), 0) + 1
    return counts


def score(pairs: Iterable[tuple[str, str]]) -> dict[str, dict]:
    """Per-class detection rate (recall) and false positive rate (fall-out)."""
    pairs = list(pairs)
    for a, p in pairs:
        if a not in CLASSES or p not in CLASSES:
            raise DetectionError(f"unknown class in pair {(a, p)!r}")
    total = len(pairs)
    out = {}
    for c in CLASSES:
        actual = sum(1 for a, _ in pairs if a == c)
        hits = sum(1 for a, p in pairs if a == c and p == c)
        false_pos = sum(1 for a, p in pairs if a != c and p == c)
        negatives = total - actual
        out[c] = {
            "actual": actual,
            "true_positives": hits,
            "false_positives": false_pos,
            "detection_rate": hits / actual if actual else None,
            "false_positive_rate": false_pos / negatives if negatives else None,
        }
    return out


def _pct(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}%"


def format_table(metrics: dict[str, dict]) -> str:
    lines = [f"{'Activity Type':<26}{'Detection Rate':>16}{'False Positive Rate':>22}"]
    for c in CLASSES:
        m = metrics.get(c, {})
        lines.append(f"{CLASS_TITLES[c]:<26}{_pct(m.get('detection_rate')):>16}"
                     f"{_pct(m.get('false_positive_rate')):>22}")
    return "\n".join(lines)
