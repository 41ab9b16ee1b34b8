"""KDD Cup 1999 schema, attack catalog, a schema-faithful synthetic
generator and proportional (stratified) sampling."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from ..detection import CLASSES, DetectionError, normalize_class
from ..model import AgentAddress, EventRecord, make_event

KDD_FEATURES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
    "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files", "num_outbound_cmds",
    "is_host_login", "is_guest_login", "count", "srv_count", "serror_rate",
    "srv_serror_rate", "rerror_rate", "srv_rerror_rate", "same_srv_rate",
    "diff_srv_rate", "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
    "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate", "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)
assert len(KDD_FEATURES) == 41

KDD_TEXT_FEATURES = frozenset({"protocol_type", "service", "flag"})
RATE_FEATURES = frozenset(f for f in KDD_FEATURES if f.endswith("_rate"))

ATTACK_CLASS = {
    "normal": "Normal",
    "back": "DoS", "land": "DoS", "neptune": "DoS", "pod": "DoS", "smurf": "DoS",
    "teardrop": "DoS",
    "ipsweep": "Probe", "nmap": "Probe", "portsweep": "Probe", "satan": "Probe",
    "ftp_write": "R2U", "guess_passwd": "R2U", "imap": "R2U", "multihop": "R2U",
    "phf": "R2U", "spy": "R2U", "warezclient": "R2U", "warezmaster": "R2U",
    "buffer_overflow": "U2R", "loadmodule": "U2R", "perl": "U2R", "rootkit": "U2R",
}

# class sizes in the 10% training file
KDD10_COUNTS = {"Normal": 97278, "DoS": 391458, "Probe": 4107, "R2U": 1126, "U2R": 52}


def label_class(label: str) -> str:
    key = str(label).strip().rstrip(".").lower()
    if key in ATTACK_CLASS:
        return ATTACK_CLASS[key]
    try:
        return normalize_class(key)
    except DetectionError:
        raise DetectionError(f"label {label!r} is not in the attack catalog") from None


def record_class(r: EventRecord) -> str:
    label = r.get("label")
    if label is None:
        raise DetectionError(f"record {r.seq} is unlabeled")
    return label_class(label)


def largest_remainder(n: int, weights: Mapping[str, int | float | Fraction]) -> dict[str, int]:
    """Integer quotas summing to ``n`` and proportional to ``weights``.

    Each quota differs from its exact share by less than one.  Ties on the
    fractional remainder go to the key that sorts first.
    """
    total = sum(Fraction(w) for w in weights.values())
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    exact = {k: Fraction(n) * Fraction(w) / total for k, w in weights.items()}
    quota = {k: int(v) for k, v in exact.items()}
    short = n - sum(quota.values())
    for k in sorted(exact, key=lambda k: (-(exact[k] - quota[k]), k))[:short]:
        quota[k] += 1
    return quota


def stratified_sample(records: Sequence[EventRecord], n: int, seed: int) -> list[EventRecord]:
    if n > len(records):
        raise ValueError(f"cannot sample {n} from {len(records)} records")
    strata: dict[str, list[EventRecord]] = {}
    for r in records:
        strata.setdefault(record_class(r), []).append(r)
    if n == len(records):
        return list(records)
    quota = largest_remainder(n, {c: len(v) for c, v in strata.items()})
    rng = random.Random(seed)
    picked: list[EventRecord] = []
    for c in sorted(strata):
        picked.extend(rng.sample(strata[c], quota[c]))
    picked.sort(key=lambda r: r.seq)
    return picked


# -- synthetic generator ---------------------------------------------------
# Each attack type has a recognisable template; a share of each class is
# deliberately blurred so an exact-match signature base makes mistakes.


def _base(rng: random.Random) -> dict:
    rec = {f: 0 for f in KDD_FEATURES}
    for f in RATE_FEATURES:
        rec[f] = 0.0
    rec.update(protocol_type="tcp", service="http", flag="SF",
               src_bytes=rng.randint(150, 400), dst_bytes=rng.randint(200, 9000),
               logged_in=1, count=rng.randint(1, 15), srv_count=rng.randint(1, 15),
               same_srv_rate=1.0, dst_host_count=rng.randint(1, 255),
               dst_host_srv_count=rng.randint(1, 255), dst_host_same_srv_rate=1.0)
    return rec


def _normal(rng, rec):
    rec["service"] = rng.choice(["http", "smtp", "ftp_data", "domain_u", "private", "eco_i"])
    if rec["service"] == "domain_u":
        rec["protocol_type"] = "udp"
    if rec["service"] == "eco_i":            # ordinary pings look like a sweep
        rec["protocol_type"] = "icmp"
        rec["logged_in"] = 0
    return "normal"


def _dos(rng, rec):
    kind = rng.choices(["smurf", "neptune", "back"], weights=[56, 22, 2])[0]
    if kind == "smurf":
        rec.update(protocol_type="icmp", service="ecr_i", src_bytes=1032, dst_bytes=0,
                   logged_in=0, count=rng.randint(180, 511))
        rec["srv_count"] = rec["count"]
    elif kind == "neptune":
        rec.update(service="private", flag="S0", src_bytes=0, dst_bytes=0, logged_in=0,
                   count=rng.randint(100, 300), serror_rate=1.0, srv_serror_rate=1.0,
                   dst_host_serror_rate=1.0)
        if rng.random() < 0.1:
            rec["serror_rate"] = 0.5
    else:
        rec.update(src_bytes=54540, hot=2)
    return kind


def _probe(rng, rec):
    kind = rng.choice(["ipsweep", "portsweep", "satan"])
    if kind == "ipsweep":
        rec.update(protocol_type="icmp", service="eco_i", logged_in=0, src_bytes=8,
                   dst_bytes=0, dst_host_diff_srv_rate=1.0)
    elif kind == "portsweep":
        rec.update(service="private", flag="REJ", logged_in=0, rerror_rate=1.0,
                   srv_rerror_rate=1.0, dst_bytes=0)
    else:
        rec.update(service="other", flag=rng.choice(["REJ", "SF"]), logged_in=0,
                   diff_srv_rate=0.8)
        rec["rerror_rate"] = 1.0 if rec["flag"] == "REJ" else 0.0
    return kind


def _r2u(rng, rec):
    kind = rng.choice(["guess_passwd", "warezclient"])
    if kind == "guess_passwd":
        rec.update(service="telnet", flag="RSTO", logged_in=0,
                   num_failed_logins=1 if rng.random() < 0.8 else 0)
    else:
        rec.update(service="ftp_data", hot=rng.randint(20, 30), is_guest_login=1)
    return kind


def _u2r(rng, rec):
    kind = rng.choice(["buffer_overflow", "rootkit"])
    rec.update(service="telnet", hot=rng.randint(1, 3), num_file_creations=1)
    rec["root_shell"] = 1 if kind == "buffer_overflow" or rng.random() < 0.5 else 0
    return kind


_TEMPLATES = {"Normal": _normal, "DoS": _dos, "Probe": _probe, "R2U": _r2u, "U2R": _u2r}


def synth_kdd(n: int, seed: int, mix: Optional[Mapping[str, float]] = None,
              source: Optional[AgentAddress] = None) -> list[EventRecord]:
    """``n`` labelled connection records; class counts follow ``mix`` exactly
    (largest remainder), defaulting to the 10% training-file proportions."""
    mix = dict(mix or KDD10_COUNTS)
    for c in mix:
        if c not in CLASSES:
            raise ValueError(f"unknown class {c!r}")
    rng = random.Random(seed)
    quota = largest_remainder(n, mix)
    classes = [c for c in sorted(quota) for _ in range(quota[c])]
    rng.shuffle(classes)
    source = source or AgentAddress("kdd", "sensor", "ba")
    out = []
    for seq, cls in enumerate(classes):
        rec = _base(rng)
        label = _TEMPLATES[cls](rng, rec)
        attrs = {f: rec[f] for f in KDD_FEATURES}
        attrs["label"] = label
        out.append(make_event(seq, float(seq), source, "kdd.connection", attrs))
    return out


def attribute_records(records: Sequence[EventRecord],
                      producers: Sequence[AgentAddress]) -> list[EventRecord]:
    """Spread records round-robin over the agents that collect connection data."""
    if not producers:
        raise ValueError("no agent produces kdd.connection")
    return [EventRecord(r.seq, r.time, producers[r.seq % len(producers)], r.category,
                        r.attributes) for r in records]
