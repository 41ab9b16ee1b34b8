"""Readers and writers for topology, rules and trace files."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..detection import DetectionRule, SignatureRule, normalize_class
from ..model import (
    AgentAddress,
    AgentDecl,
    DomainDecl,
    EventRecord,
    HostDecl,
    Level,
    Topology,
    TopologyDescription,
    TopologyError,
    describe,
    make_event,
    parse_predicate,
    parse_scope,
    validate_topology,
)
from .kdd import KDD_FEATURES, KDD_TEXT_FEATURES

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _lines(text: str):
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield n, line


# -- topology --------------------------------------------------------------


def _kv(tokens: list[str], n: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise FormatError(f"expected key=value, got {tok!r}", n)
        if key in out:
            raise FormatError(f"repeated key {key!r}", n)
        out[key] = value
    return out


def _csv_list(value: Optional[str]) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_topology(text: str) -> TopologyDescription:
    raw = TopologyDescription()
    for n, line in _lines(text):
        head, *rest = line.split()
        if head not in ("domain", "host", "agent"):
            raise FormatError(f"unknown declaration {head!r}", n)
        if not rest:
            raise FormatError(f"{head} declaration needs an identifier", n)
        ident, opts = rest[0], _kv(rest[1:], n)
        if head == "domain":
            if opts:
                raise FormatError("domain takes no options", n)
            raw.domains.append(DomainDecl(ident, n))
        elif head == "host":
            unknown = set(opts) - {"domain"}
            if unknown:
                raise FormatError(f"unknown host option {sorted(unknown)[0]!r}", n)
            raw.hosts.append(HostDecl(ident, opts.get("domain") or None, n))
        else:
            unknown = set(opts) - {"host", "produces", "rules"}
            if unknown:
                raise FormatError(f"unknown agent option {sorted(unknown)[0]!r}", n)
            raw.agents.append(AgentDecl(ident, opts.get("host") or None,
                                        _csv_list(opts.get("produces")),
                                        _csv_list(opts.get("rules")), n))
    return raw


def topology_from_text(text: str) -> Topology:
    return validate_topology(parse_topology(text))


def load_topology(path: PathLike) -> Topology:
    text = Path(path).read_text()
    if not any(True for _ in _lines(text)):
        raise FormatError(f"{path}: empty topology file")
    return topology_from_text(text)


def serialize_topology(t: Topology) -> str:
    raw = describe(t)
    out = [f"domain {d.domain}" for d in raw.domains]
    out += [f"host {h.host} domain={h.domain}" for h in raw.hosts]
    for a in raw.agents:
        line = f"agent {a.agent} host={a.host}"
        if a.produces:
            line += " produces=" + ",".join(a.produces)
        if a.rules:
            line += " rules=" + ",".join(a.rules)
        out.append(line)
    return "\n".join(out) + "\n"


# -- rules -----------------------------------------------------------------


@dataclass
class RuleSet:
    detection: dict[str, DetectionRule] = field(default_factory=dict)
    signatures: dict[str, SignatureRule] = field(default_factory=dict)

    def __contains__(self, rule_id: str) -> bool:
        return rule_id in self.detection or rule_id in self.signatures

    def signature_base(self) -> list[SignatureRule]:
        return list(self.signatures.values())


def _split_fields(line: str, n: int) -> dict[str, str]:
    fields, buf, quoted = [], [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        if ch == ";" and not quoted:
            fields.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    fields.append("".join(buf))
    out = {}
    for f in fields:
        f = f.strip()
        if not f:
            continue
        key, sep, value = f.partition("=")
        if not sep:
            raise FormatError(f"expected key=value, got {f!r}", n)
        key = key.strip()
        if key in out:
            raise FormatError(f"repeated field {key!r}", n)
        out[key] = value.strip()
    return out


def parse_rules(text: str) -> RuleSet:
    rs = RuleSet()
    for n, line in _lines_keep_hash_in_quotes(text):
        f = _split_fields(line, n)
        try:
            kind = f.pop("kind", "threshold")
            rule_id = f.pop("rule_id")
            if rule_id in rs:
                raise FormatError(f"duplicate rule id {rule_id!r}", n)
            if kind == "signature":
                sig = SignatureRule(rule_id, parse_predicate(f.pop("predicate", "")),
                                    normalize_class(f.pop("class")),
                                    f.pop("category", "kdd.connection"))
                rs.signatures[rule_id] = sig
            elif kind == "threshold":
                rule = DetectionRule(
                    rule_id=rule_id,
                    category=f.pop("category"),
                    predicate=parse_predicate(f.pop("predicate", "")),
                    window=float(f.pop("window")),
                    threshold=int(f.pop("threshold")),
                    scope=parse_scope(f.pop("scope", "local")),
                    alert_class=normalize_class(f.pop("class")),
                )
                rs.detection[rule_id] = rule
            else:
                raise FormatError(f"unknown rule kind {kind!r}", n)
        except KeyError as exc:
            raise FormatError(f"missing field {exc.args[0]!r}", n) from None
        except FormatError:
            raise
        except ValueError as exc:
            raise FormatError(str(exc), n) from None
        if f:
            raise FormatError(f"unknown field {sorted(f)[0]!r}", n)
    return rs


def _lines_keep_hash_in_quotes(text: str):
    # rules may carry '#' inside quoted literals, so strip comments quote-aware
    for n, raw in enumerate(text.splitlines(), start=1):
        buf, quoted = [], False
        for ch in raw:
            if ch == '"':
                quoted = not quoted
            if ch == "#" and not quoted:
                break
            buf.append(ch)
        line = "".join(buf).strip()
        if line:
            yield n, line


def load_rules(path: PathLike) -> RuleSet:
    return parse_rules(Path(path).read_text())


def serialize_rules(rs: RuleSet) -> str:
    out = []
    for r in rs.detection.values():
        out.append(f"rule_id={r.rule_id}; category={r.category}; predicate={r.predicate}; "
                   f"window={r.window!r}; threshold={r.threshold}; scope={r.scope}; "
                   f"class={r.alert_class}")
    for s in rs.signatures.values():
        out.append(f"kind=signature; rule_id={s.rule_id}; category={s.category}; "
                   f"predicate={s.predicate}; class={s.predicted}")
    return "\n".join(out) + "\n"


# -- traces ----------------------------------------------------------------

EVENT_HEADER = ("time", "host", "agent", "category")


def _scalar(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _resolve_source(host: str, agent: str, topology: Optional[Topology], n: int) -> AgentAddress:
    if "/" in host:
        d, _, h = host.partition("/")
        return AgentAddress(d, h, agent)
    if topology is None:
        raise FormatError(f"host {host!r} must be written as domain/host", n)
    try:
        d, h = topology.resolve_host(host)
    except TopologyError as exc:
        raise FormatError(str(exc), n) from None
    return AgentAddress(d, h, agent)


def parse_event_trace(text: str, topology: Optional[Topology] = None) -> list[EventRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("event trace needs a header line", 1)
    header = [c.strip() for c in rows[0]]
    if tuple(header[:4]) != EVENT_HEADER:
        raise FormatError(f"event trace header must start with {','.join(EVENT_HEADER)}", 1)
    extra = header[4:]
    records: list[EventRecord] = []
    last_time = 0.0
    for n, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(row)}", n)
        try:
            t = float(row[0])
        except ValueError:
            raise FormatError(f"bad time {row[0]!r}", n) from None
        if t < 0:
            raise FormatError("negative time", n)
        if t < last_time:
            raise FormatError(f"time {t} goes backwards", n)
        last_time = t
        source = _resolve_source(row[1].strip(), row[2].strip(), topology, n)
        category = row[3].strip()
        if not category:
            raise FormatError("empty category", n)
        attrs = {k: _scalar(v.strip()) for k, v in zip(extra, row[4:]) if v.strip() != ""}
        records.append(make_event(len(records), t, source, category, attrs))
    return records


def parse_kdd_trace(text: str, source: Optional[AgentAddress] = None) -> list[EventRecord]:
    source = source or AgentAddress("kdd", "sensor", "ba")
    records = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.strip().split(",")
        if len(fields) != len(KDD_FEATURES) + 1:
            raise FormatError(f"expected {len(KDD_FEATURES) + 1} fields, got {len(fields)}", n)
        attrs = {}
        for name, value in zip(KDD_FEATURES, fields):
            attrs[name] = value if name in KDD_TEXT_FEATURES else _scalar(value)
        attrs["label"] = fields[-1].rstrip(".")
        seq = len(records)
        records.append(make_event(seq, float(seq), source, "kdd.connection", attrs))
    return records


def detect_format(path: PathLike) -> str:
    with open(path) as fh:
        first = fh.readline()
    return "event" if first.startswith("time,") else "kdd"


def load_trace(path: PathLike, format: Optional[str] = None,
               topology: Optional[Topology] = None) -> list[EventRecord]:
    format = format or detect_format(path)
    text = Path(path).read_text()
    if format == "kdd":
        return parse_kdd_trace(text)
    if format == "event":
        return parse_event_trace(text, topology)
    raise ValueError(f"unknown trace format {format!r}")


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def format_event_trace(records: list[EventRecord]) -> str:
    names: list[str] = []
    for r in records:
        for k, _ in r.attributes:
            if k not in names:
                names.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(EVENT_HEADER) + names)
    for r in records:
        a = r.attrs()
        w.writerow([repr(r.time), f"{r.source.domain}/{r.source.host}", r.source.agent,
                    r.category] + [_fmt(a[k]) if k in a else "" for k in names])
    return buf.getvalue()


def format_kdd_trace(records: list[EventRecord]) -> str:
    lines = []
    for r in records:
        a = r.attrs()
        lines.append(",".join([_fmt(a[k]) for k in KDD_FEATURES] + [str(a["label"]) + "."]))
    return "\n".join(lines) + "\n"
