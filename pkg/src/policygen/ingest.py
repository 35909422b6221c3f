"""Application abstraction: call graphs in, property sets out.

A property ``(c, r)`` belongs to an app when some method matching context
``c`` transitively reaches a sensitive api realizing ``r``.  Reachability is
the least fixpoint of pushing api sets backwards along call edges.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .model import (
    HANDLER_CONTEXTS,
    LIFECYCLE_CONTEXTS,
    AppSpec,
    Context,
    FormatError,
    Label,
    Property,
    Resource,
    ResourceKind,
)

log = logging.getLogger(__name__)

COMPONENT_KINDS = ("activity", "service", "receiver", "other")
LIFECYCLE_NAMES = frozenset(c.value for c in LIFECYCLE_CONTEXTS)
HANDLER_NAMES = frozenset(HANDLER_CONTEXTS)


@dataclass(frozen=True)
class MethodNode:
    method_id: str
    component_kind: str = "other"
    callbacks: frozenset = frozenset()
    handlers: frozenset = frozenset()
    is_entry_point: bool = False
    callees: frozenset = frozenset()
    direct_apis: frozenset = frozenset()


@dataclass(frozen=True)
class AppGraph:
    app_id: str
    label: Label
    methods: Mapping[str, MethodNode] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "app_id": self.app_id,
            "label": self.label.value,
            "methods": [
                {
                    "id": m.method_id,
                    "component": m.component_kind,
                    "callbacks": sorted(m.callbacks),
                    "handlers": sorted(m.handlers),
                    "entry_point": m.is_entry_point,
                    "calls": sorted(m.callees),
                    "apis": sorted(m.direct_apis),
                }
                for _, m in sorted(self.methods.items())
            ],
        }


class PermissionMap:
    """Sensitive api -> permissions.  Unmapped apis map to the empty set."""

    def __init__(self, entries: Mapping[str, Iterable[str]] | None = None):
        self._entries: dict[str, frozenset] = {}
        for api, perms in (entries or {}).items():
            perms = frozenset(perms)
            if not perms:
                raise FormatError("empty permission set", where=api)
            self._entries[api] = perms

    def __getitem__(self, api: str) -> frozenset:
        return self._entries.get(api, frozenset())

    def __contains__(self, api: str) -> bool:
        return api in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other):
        if not isinstance(other, PermissionMap):
            return NotImplemented
        return self._entries == other._entries

    def apis(self) -> frozenset:
        return frozenset(self._entries)

    def items(self):
        return self._entries.items()

    def apis_for(self, permission: str) -> set[str]:
        return {a for a, perms in self._entries.items() if permission in perms}

    def to_tsv(self) -> str:
        lines = [f"{api}\t{perm}"
                 for api in sorted(self._entries)
                 for perm in sorted(self._entries[api])]
        return "".join(line + "\n" for line in lines)


def _text(data) -> str:
    return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data


def _str_list(node: dict, key: str, method_id: str) -> list[str]:
    value = node.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise FormatError(f"field {key!r} must be a list of strings", where=method_id)
    return value


def app_graph_from_json(obj) -> AppGraph:
    if not isinstance(obj, dict):
        raise FormatError("app graph must be a JSON object")
    app_id = obj.get("app_id")
    if not isinstance(app_id, str) or not app_id:
        raise FormatError("missing or empty app_id")
    label = Label.parse(obj.get("label", "unknown"))
    raw_methods = obj.get("methods", [])
    if not isinstance(raw_methods, list):
        raise FormatError("'methods' must be a list", where=app_id)

    methods: dict[str, MethodNode] = {}
    for raw in raw_methods:
        if not isinstance(raw, dict) or not isinstance(raw.get("id"), str) or not raw["id"]:
            raise FormatError("method without a string 'id'", where=app_id)
        mid = raw["id"]
        if mid in methods:
            raise FormatError("duplicate method id (field 'id')", where=mid)
        component = raw.get("component", "other")
        if component not in COMPONENT_KINDS:
            log.debug("%s: unknown component kind %r treated as 'other'", mid, component)
            component = "other"
        callbacks = frozenset(_str_list(raw, "callbacks", mid))
        bad = callbacks - LIFECYCLE_NAMES
        if bad:
            raise FormatError(f"unknown lifecycle callback(s) {sorted(bad)} (field 'callbacks')",
                              where=mid)
        handlers = frozenset(_str_list(raw, "handlers", mid))
        bad = handlers - HANDLER_NAMES
        if bad:
            raise FormatError(f"unknown handler(s) {sorted(bad)} (field 'handlers')", where=mid)
        entry = raw.get("entry_point", False)
        if not isinstance(entry, bool):
            raise FormatError("field 'entry_point' must be a boolean", where=mid)
        if (callbacks or handlers) and not entry:
            raise FormatError(
                "callbacks/handlers set but entry_point is false (field 'entry_point')",
                where=mid)
        methods[mid] = MethodNode(
            method_id=mid,
            component_kind=component,
            callbacks=callbacks,
            handlers=handlers,
            is_entry_point=entry,
            callees=frozenset(_str_list(raw, "calls", mid)),
            direct_apis=frozenset(_str_list(raw, "apis", mid)),
        )

    for mid, node in methods.items():
        for callee in sorted(node.callees):
            if callee not in methods:
                raise FormatError(f"dangling callee reference {callee!r} (field 'calls')",
                                  where=mid)
    return AppGraph(app_id, label, methods)


def load_app_graph(data) -> AppGraph:
    """Parse one app-graph JSON document (bytes or str)."""
    try:
        obj = json.loads(_text(data))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON: {exc}") from None
    return app_graph_from_json(obj)


def iter_app_graphs(data) -> Iterator[AppGraph]:
    """Parse a JSONL stream of app graphs, one object per non-blank line."""
    for lineno, line in enumerate(_text(data).splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed JSON: {exc}", where=f"line {lineno}") from None
        yield app_graph_from_json(obj)


def load_permission_map(data) -> PermissionMap:
    """Parse ``api<TAB>PERMISSION`` lines; duplicate apis are merged."""
    merged: dict[str, set] = {}
    for lineno, line in enumerate(_text(data).splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.rstrip("\r").split("\t")
        if len(fields) < 2 or not fields[0].strip() or not fields[1].strip():
            raise FormatError("expected 'api<TAB>PERMISSION'", where=f"line {lineno}")
        merged.setdefault(fields[0].strip(), set()).add(fields[1].strip())
    return PermissionMap(merged)


def compute_reach(g: AppGraph) -> dict[str, frozenset]:
    """Apis transitively invoked from each method (least fixpoint).

    Worklist over reverse call edges: when a method's set grows, its callers
    are revisited.  Terminates on cycles because sets only grow.
    """
    callers: dict[str, list[str]] = {mid: [] for mid in g.methods}
    for mid in sorted(g.methods):
        for callee in sorted(g.methods[mid].callees):
            callers[callee].append(mid)

    reach = {mid: set(node.direct_apis) for mid, node in g.methods.items()}
    worklist = deque(sorted(g.methods))
    queued = set(worklist)
    while worklist:
        mid = worklist.popleft()
        queued.discard(mid)
        for caller in callers[mid]:
            before = len(reach[caller])
            reach[caller] |= reach[mid]
            if len(reach[caller]) != before and caller not in queued:
                worklist.append(caller)
                queued.add(caller)
    return {mid: frozenset(apis) for mid, apis in reach.items()}


def match_contexts(m: MethodNode) -> set[Context]:
    contexts = set()
    if m.component_kind != "other":
        contexts.add(Context(m.component_kind))
    contexts.update(Context(cb) for cb in m.callbacks)
    contexts.update(HANDLER_CONTEXTS[h] for h in m.handlers)
    if m.is_entry_point:
        contexts.add(Context.ENTRY_POINT)
    return contexts


def method_resources(apis: Iterable[str], pm: PermissionMap, mode: ResourceKind) -> set[str]:
    """Resource identifiers realized by a set of reached apis."""
    if mode is ResourceKind.API:
        return {a for a in apis if a in pm}
    out = set()
    for a in apis:
        out |= pm[a]
    return out


def derive_spec(g: AppGraph, pm: PermissionMap, mode: ResourceKind,
                stats: dict | None = None) -> AppSpec:
    """Build the app's spec in ``mode``.

    Apis absent from the permission map are dropped in both modes.  When a
    ``stats`` dict is given, the number of distinct unmapped apis reached is
    added under ``"unmapped_apis"``.
    """
    mode = ResourceKind(mode)
    reach = compute_reach(g)
    props = set()
    for mid in sorted(g.methods):
        contexts = match_contexts(g.methods[mid])
        if not contexts:
            continue
        for ident in method_resources(reach[mid], pm, mode):
            resource = Resource(mode, ident)
            props.update(Property(c, resource) for c in contexts)
    if stats is not None:
        unmapped = set()
        for apis in reach.values():
            unmapped |= {a for a in apis if a not in pm}
        stats["unmapped_apis"] = stats.get("unmapped_apis", 0) + len(unmapped)
    return AppSpec(g.app_id, g.label, mode, frozenset(props))


def dump_specs(specs: Iterable[AppSpec]) -> str:
    """Spec JSONL text, one line per app, in the given order."""
    return "".join(json.dumps(s.to_json(), separators=(",", ":")) + "\n" for s in specs)


def load_specs(data) -> list[AppSpec]:
    specs = []
    for lineno, line in enumerate(_text(data).splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed JSON: {exc}", where=f"line {lineno}") from None
        try:
            specs.append(AppSpec.from_json(obj))
        except FormatError as exc:
            raise FormatError(str(exc), where=f"line {lineno}") from None
    return specs
