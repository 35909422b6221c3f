"""Core value types: contexts, resources, properties and application specs.

Everything here is immutable.  The ordering of :class:`Context` members is
significant: it drives property ordering, variable numbering and every
deterministic tie-break elsewhere in the package.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Iterable


class FormatError(ValueError):
    """Raised for malformed input files or tokens.

    ``where`` locates the problem (a method id, a line number, a field name)
    when the caller knows it.
    """

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class _OrderedEnum(enum.Enum):
    """Enum ordered by declaration position."""

    @property
    def rank(self) -> int:
        return _RANKS[type(self)][self]

    def __lt__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.rank >= other.rank

    @classmethod
    def parse(cls, token: str):
        try:
            return cls(token)
        except ValueError:
            raise FormatError(f"unknown {cls.__name__.lower()} {token!r}") from None


class Context(_OrderedEnum):
    ENTRY_POINT = "entry_point"
    ACTIVITY = "activity"
    SERVICE = "service"
    RECEIVER = "receiver"
    ONCLICK_HANDLER = "onclick_handler"
    ONTOUCH_HANDLER = "ontouch_handler"
    ONCREATE = "oncreate"
    ONSTART = "onstart"
    ONRESUME = "onresume"
    ONPAUSE = "onpause"
    ONSTOP = "onstop"
    ONDESTROY = "ondestroy"
    ONRESTART = "onrestart"


LIFECYCLE_CONTEXTS = frozenset({
    Context.ONCREATE, Context.ONSTART, Context.ONRESUME, Context.ONPAUSE,
    Context.ONSTOP, Context.ONDESTROY, Context.ONRESTART,
})
COMPONENT_CONTEXTS = frozenset({Context.ACTIVITY, Context.SERVICE, Context.RECEIVER})
HANDLER_CONTEXTS = {"onclick": Context.ONCLICK_HANDLER, "ontouch": Context.ONTOUCH_HANDLER}


class ResourceKind(_OrderedEnum):
    PERMISSION = "permission"
    API = "api"


class Label(enum.Enum):
    BENIGN = "benign"
    MALWARE = "malware"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, token: str) -> "Label":
        try:
            return cls(token)
        except ValueError:
            raise FormatError(f"unknown label {token!r}") from None


_RANKS = {
    cls: {member: i for i, member in enumerate(cls)}
    for cls in (Context, ResourceKind)
}


def check_identifier(identifier: str) -> str:
    if not isinstance(identifier, str) or not identifier:
        raise FormatError("resource identifier must be a non-empty string")
    if ":" in identifier or any(ch.isspace() for ch in identifier):
        raise FormatError(f"resource identifier {identifier!r} contains ':' or whitespace")
    return identifier


@functools.total_ordering
@dataclass(frozen=True)
class Resource:
    kind: ResourceKind
    identifier: str

    def __post_init__(self):
        check_identifier(self.identifier)

    @classmethod
    def permission(cls, name: str) -> "Resource":
        return cls(ResourceKind.PERMISSION, name)

    @classmethod
    def api(cls, identifier: str) -> "Resource":
        return cls(ResourceKind.API, identifier)

    def sort_key(self):
        return (self.kind.rank, self.identifier)

    def __lt__(self, other):
        if not isinstance(other, Resource):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __str__(self):
        return f"{self.kind.value} {self.identifier}"


@functools.total_ordering
@dataclass(frozen=True)
class Property:
    """A resource used within a context, written ``context : kind identifier``."""

    context: Context
    resource: Resource

    def sort_key(self):
        return (self.context.rank, self.resource.kind.rank, self.resource.identifier)

    def __lt__(self, other):
        if not isinstance(other, Property):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    @property
    def kind(self) -> ResourceKind:
        return self.resource.kind

    def to_token(self) -> str:
        return f"{self.context.value} : {self.resource.kind.value} {self.resource.identifier}"

    @classmethod
    def from_token(cls, text: str) -> "Property":
        ctx, sep, rest = text.partition(":")
        if not sep:
            raise FormatError(f"expected '<context> : <kind> <identifier>', got {text!r}")
        parts = rest.split()
        if len(parts) != 2:
            raise FormatError(f"expected '<kind> <identifier>' after ':', got {rest.strip()!r}")
        return cls(Context.parse(ctx.strip()), Resource(ResourceKind.parse(parts[0]), parts[1]))

    def __str__(self):
        return self.to_token()


def property_order(a: Property, b: Property) -> int:
    """Three-way comparison: -1, 0 or 1."""
    ka, kb = a.sort_key(), b.sort_key()
    return (ka > kb) - (ka < kb)


@dataclass(frozen=True)
class AppSpec:
    """The abstraction of one application: its label and property set.

    ``resource_kind`` is carried explicitly so an empty spec still knows
    which kind of policy it can be checked against.
    """

    app_id: str
    label: Label
    resource_kind: ResourceKind
    properties: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.app_id:
            raise FormatError("app_id must be non-empty")
        props = frozenset(self.properties)
        object.__setattr__(self, "properties", props)
        for p in props:
            if p.kind is not self.resource_kind:
                raise FormatError(
                    f"property {p} does not match resource kind {self.resource_kind.value}",
                    where=self.app_id)

    def sorted_properties(self) -> list[Property]:
        return sorted(self.properties)

    def to_json(self) -> dict:
        return {
            "app_id": self.app_id,
            "label": self.label.value,
            "resource_kind": self.resource_kind.value,
            "properties": [[p.context.value, p.resource.identifier]
                           for p in self.sorted_properties()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AppSpec":
        try:
            kind = ResourceKind.parse(obj["resource_kind"])
            props = [Property(Context.parse(c), Resource(kind, ident))
                     for c, ident in obj["properties"]]
            return cls(obj["app_id"], Label.parse(obj["label"]), kind, frozenset(props))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"malformed spec record: {exc}") from None


def common_kind(specs: Iterable[AppSpec]) -> ResourceKind | None:
    """Return the shared resource kind of ``specs``; raise if they mix kinds."""
    kind = None
    for s in specs:
        if kind is None:
            kind = s.resource_kind
        elif s.resource_kind is not kind:
            raise FormatError(
                f"mixed resource kinds: {kind.value} and {s.resource_kind.value}",
                where=s.app_id)
    return kind
