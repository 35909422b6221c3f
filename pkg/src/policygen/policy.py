"""Deny-rule policies: construction, text format, checking and diagnosis.

Text format::

    # droidgen-policy v1
    # resource-kind: permission
    # solver: exact
    deny service : permission SEND_SMS

Header lines of the form ``# key: value`` carry metadata; rules follow one
per line in property order.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .encode import MaxSatInstance
from .ingest import AppGraph, PermissionMap, derive_spec, match_contexts
from .model import AppSpec, FormatError, Property, ResourceKind

log = logging.getLogger(__name__)

MAGIC = "# droidgen-policy v1"


@dataclass(frozen=True)
class Policy:
    """An ordered set of rules; each rule ``p`` means *deny p*."""

    resource_kind: ResourceKind
    rules: tuple = ()
    metadata: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        rules = tuple(sorted(set(self.rules)))
        for r in rules:
            if r.kind is not self.resource_kind:
                raise FormatError(f"rule {r} does not match resource kind "
                                  f"{self.resource_kind.value}")
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "metadata", {str(k): str(v) for k, v in self.metadata.items()})

    def __len__(self):
        return len(self.rules)


@dataclass(frozen=True)
class Violation:
    rule: Property
    witness: tuple | None = None

    def to_json(self) -> dict:
        return {
            "rule": [self.rule.context.value, self.rule.kind.value, self.rule.resource.identifier],
            "witness": list(self.witness) if self.witness is not None else None,
        }


def policy_from_solution(inst: MaxSatInstance, a: Sequence[bool],
                         metadata: dict | None = None,
                         resource_kind: ResourceKind | None = None) -> Policy:
    """Deny every property the assignment sets false.

    ``resource_kind`` is only consulted when the instance has no specs to
    take it from; it defaults to permission.
    """
    if len(a) != inst.n_vars:
        raise ValueError(f"assignment has length {len(a)}, instance has {inst.n_vars} vars")
    kind = inst.resource_kind or resource_kind or ResourceKind.PERMISSION
    rules = tuple(p for p, allowed in zip(inst.vars, a) if not allowed)
    return Policy(kind, rules, metadata or {})


def _check_kind(p: Policy, kind: ResourceKind, app_id: str):
    if kind is not p.resource_kind:
        raise FormatError(f"resource kind mismatch: policy is {p.resource_kind.value}, "
                          f"app is {kind.value}", where=app_id)


def check(p: Policy, s: AppSpec) -> list[Property]:
    """Rules of ``p`` that ``s`` violates, sorted.  Non-empty means rejected."""
    _check_kind(p, s.resource_kind, s.app_id)
    return [r for r in p.rules if r in s.properties]


def _realizing_apis(rule: Property, pm: PermissionMap) -> set[str]:
    if rule.kind is ResourceKind.API:
        return {rule.resource.identifier}
    return pm.apis_for(rule.resource.identifier)


def shortest_witness(g: AppGraph, rule: Property, pm: PermissionMap) -> tuple | None:
    """Shortest call chain from a method matching the rule's context to one
    directly invoking an api that realizes the rule's resource.

    BFS over call edges, frontier and callees visited in method-id order, so
    the first chain found is also the lexicographically smallest by layer.
    """
    targets = _realizing_apis(rule, pm)
    sources = sorted(mid for mid, m in g.methods.items() if rule.context in match_contexts(m))
    parent = {mid: None for mid in sources}
    frontier = sources
    while frontier:
        for mid in frontier:
            if g.methods[mid].direct_apis & targets:
                chain = [mid]
                while parent[chain[-1]] is not None:
                    chain.append(parent[chain[-1]])
                return tuple(reversed(chain))
        nxt = []
        for mid in frontier:
            for callee in sorted(g.methods[mid].callees):
                if callee not in parent:
                    parent[callee] = mid
                    nxt.append(callee)
        frontier = sorted(nxt)
    return None


def explain(p: Policy, g: AppGraph, pm: PermissionMap) -> list[Violation]:
    """Violations of ``p`` by the app behind ``g``, each with a witness chain."""
    spec = derive_spec(g, pm, p.resource_kind)
    out = []
    for rule in check(p, spec):
        witness = shortest_witness(g, rule, pm)
        if witness is None:
            raise RuntimeError(f"{g.app_id}: rule {rule} violated but no call chain found")
        out.append(Violation(rule, witness))
    return out


def violation_report(app_id: str, violations: Iterable[Violation]) -> dict:
    return {"app_id": app_id, "violations": [v.to_json() for v in violations]}


def dump_report(report: dict) -> str:
    return json.dumps(report, separators=(",", ":"))


def serialize_policy(p: Policy) -> str:
    lines = [MAGIC, f"# resource-kind: {p.resource_kind.value}"]
    for key in sorted(p.metadata):
        value = p.metadata[key]
        if (":" in key or key != key.strip() or not key or key == "resource-kind"
                or value != value.strip() or len(f"{key}: {value}".splitlines()) != 1):
            raise ValueError(f"metadata {key!r}={value!r} cannot be written on one header line")
        lines.append(f"# {key}: {value}")
    lines.extend(f"deny {r.to_token()}" for r in p.rules)
    return "\n".join(lines) + "\n"


def parse_policy(data) -> Policy:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError(f"missing header {MAGIC!r}", where="line 1")
    kind = None
    metadata = {}
    rules = []
    seen = set()
    for lineno, raw in enumerate(lines[1:], 2):
        line = raw.strip()
        if not line:
            continue
        where = f"line {lineno}"
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if not sep:
                continue
            key, value = key.strip(), value.strip()
            if key == "resource-kind":
                try:
                    kind = ResourceKind.parse(value)
                except FormatError as exc:
                    raise FormatError(str(exc), where=where) from None
            else:
                metadata[key] = value
            continue
        head, _, rest = line.partition(" ")
        if head != "deny" or not rest:
            raise FormatError(f"malformed rule line {line!r}", where=where)
        try:
            rule = Property.from_token(rest)
        except FormatError as exc:
            raise FormatError(str(exc), where=where) from None
        if kind is None:
            kind = rule.kind
        elif rule.kind is not kind:
            raise FormatError(f"mixed resource kinds: {kind.value} and {rule.kind.value}",
                              where=where)
        if rule in seen:
            log.warning("%s: duplicate rule %s ignored", where, rule)
            continue
        seen.add(rule)
        rules.append(rule)
    if kind is None:
        raise FormatError("policy declares no resource kind and has no rules")
    return Policy(kind, tuple(rules), metadata)
