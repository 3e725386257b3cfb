"""Core domain types: identifiers, endpoints, type descriptors, remote references.

Everything in this module is immutable after construction and safe to share
across threads. Type identity is the globally unique ``type_name`` text; two
nodes agree on a type iff the names match.
"""

from __future__ import annotations

import re
import secrets
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

from .errors import RegistryIntegrityError

# Semantic type names understood without registration.
PRIMITIVE_TYPES = frozenset({"i64", "f64", "bool", "string"})
VOID = "void"
NULL_TYPE = "null"
SEQUENCE_TYPE = "list"

PUBLIC = "public"
NON_PUBLIC = "non-public"

_HEX32 = re.compile(r"^[0-9a-f]{32}$")


class _Unbounded:
    """Singleton depth marker: traverse the whole closure when passing by value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"


UNBOUNDED = _Unbounded()

Depth = int | _Unbounded


class PolicyKind(Enum):
    BY_VALUE = "BY_VALUE"
    BY_REFERENCE = "BY_REFERENCE"


#: ``winning_rule`` marker for decisions that fell through to the default policy.
DEFAULT_RULE = "default"


@dataclass(frozen=True, order=True)
class GUID:
    """128-bit opaque identifier; canonical text is 32 lowercase hex chars."""

    value: bytes

    def __post_init__(self):
        if not isinstance(self.value, bytes) or len(self.value) != 16:
            raise ValueError("GUID requires exactly 16 bytes")

    @property
    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def parse(cls, text: str) -> "GUID":
        if not isinstance(text, str) or not _HEX32.match(text):
            raise ValueError(f"not a canonical GUID: {text!r}")
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex


GuidSource = Callable[[], bytes]


def guid_new(source: GuidSource | None = None) -> GUID:
    """Return a fresh uniformly random 128-bit GUID.

    ``source`` may supply the 16 random bytes (tests inject seeded sources);
    the default draws from the OS cryptographic generator.
    """
    raw = source() if source is not None else secrets.token_bytes(16)
    return GUID(bytes(raw))


@dataclass(frozen=True)
class Endpoint:
    """Network location of a node: host text plus TCP port."""

    host: str
    port: int

    def __post_init__(self):
        if not self.host:
            raise ValueError("endpoint host must be non-empty")
        if not (1 <= int(self.port) <= 65535):
            raise ValueError(f"endpoint port out of range: {self.port}")

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


def service_url(endpoint: Endpoint, name_or_guid: str) -> str:
    """Address of a deployed service: http://<host>:<port>/<name or GUID>."""
    if not name_or_guid:
        raise ValueError("service name or GUID must be non-empty")
    return f"http://{endpoint.host}:{endpoint.port}/{name_or_guid}"


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    type_name: str
    mutable: bool = True

    def __post_init__(self):
        if not self.name or not self.type_name:
            raise ValueError("field descriptor requires name and type")


@dataclass(frozen=True)
class MethodDescriptor:
    """One invokable method: name, parameter types, return type, fault clause."""

    name: str
    params: tuple[str, ...] = ()
    return_type: str = VOID
    declares_network_fault: bool = False
    visibility: str = PUBLIC

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.name:
            raise ValueError("method descriptor requires a name")
        if any(not p for p in self.params):
            raise ValueError(f"method {self.name}: empty parameter type name")
        if not self.return_type:
            raise ValueError(f"method {self.name}: empty return type")
        if self.visibility not in (PUBLIC, NON_PUBLIC):
            raise ValueError(f"method {self.name}: bad visibility {self.visibility!r}")

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def ident(self) -> str:
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class TypeDescriptor:
    """Registered metadata about an application type and its remote surface.

    Method names plus arity are unique within one descriptor. The supertype
    chain is resolved by name against a registry view; it must be acyclic and
    fully registered before use.
    """

    type_name: str
    supertype_name: str | None = None
    fields: tuple[FieldDescriptor, ...] = ()
    methods: tuple[MethodDescriptor, ...] = ()
    is_interface: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.type_name:
            raise ValueError("type descriptor requires a name")
        seen: set[tuple[str, int]] = set()
        for m in self.methods:
            key = (m.name, m.arity)
            if key in seen:
                raise ValueError(f"{self.type_name}: duplicate method {m.ident}")
            seen.add(key)
        fseen: set[str] = set()
        for f in self.fields:
            if f.name in fseen:
                raise ValueError(f"{self.type_name}: duplicate field {f.name}")
            fseen.add(f.name)

    def find_method(self, name: str, arity: int | None = None) -> MethodDescriptor | None:
        for m in self.methods:
            if m.name == name and (arity is None or m.arity == arity):
                return m
        return None

    def has_method_named(self, name: str) -> bool:
        return any(m.name == name for m in self.methods)

    def field(self, name: str) -> FieldDescriptor | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    @property
    def field_names(self) -> frozenset[str]:
        return frozenset(f.name for f in self.fields)

    def with_methods(self, extra: list[MethodDescriptor]) -> "TypeDescriptor":
        return TypeDescriptor(
            type_name=self.type_name,
            supertype_name=self.supertype_name,
            fields=self.fields,
            methods=self.methods + tuple(extra),
            is_interface=self.is_interface,
        )


def supertype_chain(
    descriptor: TypeDescriptor,
    registry_view: Mapping[str, TypeDescriptor],
    *,
    strict: bool = True,
) -> list[str]:
    """Names on the supertype chain, starting with the descriptor itself.

    ``strict`` controls what happens at an unresolvable supertype name: raise
    a registry-integrity error, or stop the walk (policy resolution tolerates
    types known only by wire descriptors).
    """
    chain = [descriptor.type_name]
    seen = {descriptor.type_name}
    current = descriptor
    while current.supertype_name is not None:
        name = current.supertype_name
        if name in seen:
            raise RegistryIntegrityError(f"supertype cycle through {name!r}")
        nxt = registry_view.get(name)
        if nxt is None:
            if strict:
                raise RegistryIntegrityError(f"unresolvable supertype {name!r}")
            break
        chain.append(name)
        seen.add(name)
        current = nxt
    return chain


def is_subtype(
    candidate: TypeDescriptor,
    ancestor: TypeDescriptor,
    registry_view: Mapping[str, TypeDescriptor],
) -> bool:
    """True iff candidate equals ancestor or ancestor is on its supertype chain."""
    return ancestor.type_name in supertype_chain(candidate, registry_view)


@dataclass(frozen=True)
class RIOR:
    """Interoperable remote reference: where a service lives and how to talk to it.

    ``cached_field_snapshot`` maps field names to wire values recorded
    immediately before the reference was serialized; its keys always equal
    ``cached_field_names``.
    """

    endpoint: Endpoint
    guid: GUID
    service_name: str | None = None
    interface_descriptor: TypeDescriptor = field(default_factory=lambda: TypeDescriptor("object"))
    cached_field_names: frozenset[str] = frozenset()
    cached_field_snapshot: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "cached_field_names", frozenset(self.cached_field_names))
        object.__setattr__(self, "cached_field_snapshot", dict(self.cached_field_snapshot))
        unknown = self.cached_field_names - self.interface_descriptor.field_names
        if unknown:
            raise ValueError(f"cached fields not on interface: {sorted(unknown)}")
        if set(self.cached_field_snapshot) != self.cached_field_names:
            raise ValueError("cached-field snapshot keys must equal cached_field_names")

    @property
    def url(self) -> str:
        return service_url(self.endpoint, self.service_name or self.guid.hex)


class RemoteProxyBase:
    """Marker base for client-side handles; the codec sends these as references."""

    rior: RIOR


@dataclass(frozen=True)
class TransmissionDecision:
    """Resolved transmission outcome for one value position.

    ``depth`` is present only for by-value transmission. ``level`` is the
    precedence slot (1..6) of the winning rule, or None when the default
    policy applied.
    """

    kind: PolicyKind
    depth: Depth | None = None
    winning_rule: int | str = DEFAULT_RULE
    level: int | None = None

    def __post_init__(self):
        if self.kind is PolicyKind.BY_VALUE:
            if self.depth is None:
                raise ValueError("by-value decision requires a depth")
            if not isinstance(self.depth, _Unbounded) and self.depth < 1:
                raise ValueError("depth must be positive")
        elif self.depth is not None:
            raise ValueError("depth is meaningful only for by-value decisions")

    @property
    def level_text(self) -> str:
        return DEFAULT_RULE if self.level is None else str(self.level)


def by_value(depth: Depth = UNBOUNDED, winning_rule: int | str = DEFAULT_RULE,
             level: int | None = None) -> TransmissionDecision:
    return TransmissionDecision(PolicyKind.BY_VALUE, depth, winning_rule, level)


def by_reference(winning_rule: int | str = DEFAULT_RULE,
                 level: int | None = None) -> TransmissionDecision:
    return TransmissionDecision(PolicyKind.BY_REFERENCE, None, winning_rule, level)
