"""Bit-exact wire representation of values, references, requests and responses.

Value graphs travel as tagged wire nodes: primitives, inlined objects with
intra-message ids, back-references preserving aliasing and cycles, sequences,
and remote references. Canonical JSON keeps a fixed key order so identical
inputs always produce identical bytes.

The codec is stateless between messages; per-message state (the seen-object
table, the id counter) is confined to one call.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable, Mapping

from .errors import ProtocolError, WireFormatError
from .model import (
    GUID,
    Endpoint,
    FieldDescriptor,
    MethodDescriptor,
    PUBLIC,
    PolicyKind,
    RIOR,
    RemoteProxyBase,
    TransmissionDecision,
    TypeDescriptor,
    UNBOUNDED,
)

RRT_VERSION = 1

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1

PRIM_TAGS = frozenset({"i64", "f64", "bool", "str", "null"})


@dataclass(frozen=True)
class Prim:
    tag: str
    value: int | float | bool | str | None = None


@dataclass(frozen=True)
class WireObject:
    class_name: str
    obj_id: int
    fields: Mapping[str, "WireValue"]


@dataclass(frozen=True)
class Backref:
    obj_id: int


@dataclass(frozen=True)
class WireSeq:
    elements: tuple["WireValue", ...]


@dataclass(frozen=True)
class WireRef:
    rior: RIOR


WireValue = Prim | WireObject | Backref | WireSeq | WireRef

PRIM_NULL = Prim("null")


def prim_of(value: int | float | bool | str | None) -> Prim:
    if value is None:
        return PRIM_NULL
    if isinstance(value, bool):
        return Prim("bool", value)
    if isinstance(value, int):
        if not I64_MIN <= value <= I64_MAX:
            raise WireFormatError(f"integer out of 64-bit range: {value}")
        return Prim("i64", value)
    if isinstance(value, float):
        return Prim("f64", value)
    if isinstance(value, str):
        return Prim("str", value)
    raise WireFormatError(f"not a primitive: {type(value).__name__}")


@dataclass(frozen=True)
class Fault:
    kind: str  # "application" | "network" | "protocol"
    fault_class: str
    message: str


@dataclass(frozen=True)
class Request:
    target: str
    method: str
    args: tuple[WireValue, ...] = ()
    peer_kind: str = "rrt"
    rrt_version: int = RRT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if self.peer_kind not in ("rrt", "plain"):
            raise ValueError(f"bad peer kind {self.peer_kind!r}")


@dataclass(frozen=True)
class Response:
    ok: bool
    result: WireValue | None = None
    fault: Fault | None = None

    def __post_init__(self):
        shape_ok = (
            (self.result is not None and self.fault is None)
            if self.ok
            else (self.fault is not None and self.result is None)
        )
        if not shape_ok:
            raise ValueError("response carries exactly one of result/fault")


# A deploy callback turns an escaping object into a remote reference:
# deploy_ref(obj, signature_type_name) -> RIOR.
DeployRef = Callable[[object, str | None], RIOR]
ResolveRef = Callable[[RIOR], object]


class MessageEncoder:
    """Encodes the value positions of one message under a shared object table.

    Wire-object ids are unique within the message and assigned in
    first-encounter preorder starting at 0, so an object repeated across
    positions (or within one graph) becomes a back-reference and aliasing
    survives the wire.
    """

    def __init__(self, registry, deploy_ref: DeployRef | None = None):
        self._enc = _Encoder(registry, deploy_ref)

    def encode(
        self,
        value: object,
        decision: TransmissionDecision,
        declared_type: str | None = None,
    ) -> WireValue:
        if decision.kind is PolicyKind.BY_REFERENCE:
            return self._enc.as_ref(value, declared_type)
        return self._enc.inline(value, 1, decision.depth, declared_type)


def encode_value(
    value: object,
    decision: TransmissionDecision,
    *,
    registry,
    deploy_ref: DeployRef | None = None,
    declared_type: str | None = None,
) -> WireValue:
    """Encode one standalone value position under a transmission decision.

    By-reference positions become remote references through the deploy
    callback. By-value positions inline the object closure: the root sits at
    nesting level 1, objects at levels beyond the decision depth degrade to
    references, and repeated objects become back-references so aliasing and
    cycles survive. Sequences are transparent containers (copied, elements
    encoded at the enclosing level). Primitives always travel as primitives.
    """
    return MessageEncoder(registry, deploy_ref).encode(value, decision, declared_type)


class _Encoder:
    def __init__(self, registry, deploy_ref: DeployRef | None):
        self.registry = registry
        self.deploy_ref = deploy_ref
        self.seen: dict[int, int] = {}
        self.counter = itertools.count()
        self._active_seqs: set[int] = set()

    def _deploy(self, value: object, signature: str | None) -> WireRef:
        if self.deploy_ref is None:
            raise WireFormatError(
                "by-reference transmission needs a deployment callback"
            )
        return WireRef(self.deploy_ref(value, signature))

    def as_ref(self, value: object, signature: str | None) -> WireValue:
        if value is None or isinstance(value, (bool, int, float, str)):
            return prim_of(value)
        if isinstance(value, RemoteProxyBase):
            return WireRef(value.rior)
        if isinstance(value, (list, tuple)):
            return self._seq(value, lambda v: self.as_ref(v, None))
        return self._deploy(value, signature)

    def inline(self, value, level: int, depth, signature: str | None) -> WireValue:
        if value is None or isinstance(value, (bool, int, float, str)):
            return prim_of(value)
        if isinstance(value, RemoteProxyBase):
            return WireRef(value.rior)
        if isinstance(value, (list, tuple)):
            return self._seq(value, lambda v: self.inline(v, level, depth, None))
        prior = self.seen.get(id(value))
        if prior is not None:
            return Backref(prior)
        descriptor = self.registry.descriptor_of(value)
        if depth is not UNBOUNDED and level > depth:
            return self._deploy(value, signature or descriptor.type_name)
        oid = next(self.counter)
        self.seen[id(value)] = oid
        fields: dict[str, WireValue] = {}
        for f in descriptor.fields:
            try:
                raw = getattr(value, f.name)
            except AttributeError:
                raise WireFormatError(
                    f"{descriptor.type_name}.{f.name}: live object has no such field"
                ) from None
            fields[f.name] = self.inline(raw, level + 1, depth, f.type_name)
        return WireObject(descriptor.type_name, oid, fields)

    def _seq(self, value, item: Callable[[object], WireValue]) -> WireSeq:
        if id(value) in self._active_seqs:
            raise WireFormatError("sequences may not contain themselves")
        self._active_seqs.add(id(value))
        try:
            return WireSeq(tuple(item(v) for v in value))
        finally:
            self._active_seqs.discard(id(value))


class MessageDecoder:
    """Rebuilds live values from wire form, sharing the object table across
    the positions of one message.

    Inlined objects are instantiated through their registered constructors
    and populated field by field; back-references restore aliasing and
    cycles. Remote references go through the resolver (loop-back, proxy
    cache, or a new handle).
    """

    def __init__(self, registry, resolve_ref: ResolveRef | None = None):
        self._registry = registry
        self._resolve_ref = resolve_ref
        self._table: dict[int, object] = {}

    def decode(self, wire: WireValue) -> object:
        if isinstance(wire, Prim):
            return wire.value
        if isinstance(wire, Backref):
            if wire.obj_id not in self._table:
                raise ProtocolError(
                    f"back-reference to unknown object id {wire.obj_id}"
                )
            return self._table[wire.obj_id]
        if isinstance(wire, WireSeq):
            return [self.decode(e) for e in wire.elements]
        if isinstance(wire, WireRef):
            if self._resolve_ref is None:
                raise ProtocolError("remote reference arrived without a resolver")
            return self._resolve_ref(wire.rior)
        if isinstance(wire, WireObject):
            rt = self._registry.lookup(wire.class_name)
            if rt is None:
                raise ProtocolError(f"unknown class on the wire: {wire.class_name}")
            if wire.obj_id in self._table:
                raise ProtocolError(f"duplicate object id {wire.obj_id}")
            if rt.instantiate is None:
                raise ProtocolError(f"class {wire.class_name} is not instantiable")
            declared = rt.descriptor.field_names
            instance = rt.instantiate()
            self._table[wire.obj_id] = instance
            for fname, fwire in wire.fields.items():
                if fname not in declared:
                    raise ProtocolError(
                        f"{wire.class_name}: undeclared field {fname!r}"
                    )
                setattr(instance, fname, self.decode(fwire))
            return instance
        raise ProtocolError(f"unknown wire node {type(wire).__name__}")


def decode_value(
    wire: WireValue,
    *,
    registry,
    resolve_ref: ResolveRef | None = None,
) -> object:
    """Rebuild one standalone value from its wire form."""
    return MessageDecoder(registry, resolve_ref).decode(wire)


# -- canonical JSON ----------------------------------------------------------


def canonical_bytes(doc: object) -> bytes:
    try:
        return json.dumps(
            doc, separators=(",", ":"), ensure_ascii=False, allow_nan=False
        ).encode("utf-8")
    except ValueError as exc:
        raise WireFormatError(f"value not representable in JSON: {exc}") from exc


def _parse_json(data: bytes) -> object:
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON: {exc}") from exc


def wire_to_doc(w: WireValue) -> dict:
    if isinstance(w, Prim):
        if w.tag not in PRIM_TAGS:
            raise WireFormatError(f"bad primitive tag {w.tag!r}")
        doc = {"k": "prim", "t": w.tag}
        if w.tag != "null":
            doc["v"] = w.value
        return doc
    if isinstance(w, WireObject):
        return {
            "k": "obj",
            "class": w.class_name,
            "id": w.obj_id,
            "fields": {name: wire_to_doc(v) for name, v in w.fields.items()},
        }
    if isinstance(w, Backref):
        return {"k": "backref", "id": w.obj_id}
    if isinstance(w, WireSeq):
        return {"k": "seq", "elements": [wire_to_doc(e) for e in w.elements]}
    if isinstance(w, WireRef):
        return {"k": "ref", "rior": rior_to_doc(w.rior)}
    raise WireFormatError(f"unknown wire node {type(w).__name__}")


def doc_to_wire(doc: object) -> WireValue:
    if not isinstance(doc, dict) or "k" not in doc:
        raise ProtocolError("wire value must be an object with a 'k' discriminator")
    kind = doc["k"]
    if kind == "prim":
        return _doc_to_prim(doc)
    if kind == "obj":
        class_name = _req(doc, "class", str)
        obj_id = _req(doc, "id", int)
        raw = _req(doc, "fields", dict)
        return WireObject(
            class_name, obj_id, {k: doc_to_wire(v) for k, v in raw.items()}
        )
    if kind == "backref":
        return Backref(_req(doc, "id", int))
    if kind == "seq":
        raw = _req(doc, "elements", list)
        return WireSeq(tuple(doc_to_wire(e) for e in raw))
    if kind == "ref":
        return WireRef(doc_to_rior(_req(doc, "rior", dict)))
    raise ProtocolError(f"unknown wire discriminator {kind!r}")


def _doc_to_prim(doc: dict) -> Prim:
    tag = _req(doc, "t", str)
    if tag not in PRIM_TAGS:
        raise ProtocolError(f"unknown primitive tag {tag!r}")
    if tag == "null":
        if doc.get("v") is not None:
            raise ProtocolError("null primitive carries no value")
        return PRIM_NULL
    if "v" not in doc:
        raise ProtocolError(f"{tag} primitive requires a value")
    v = doc["v"]
    if tag == "i64":
        if isinstance(v, bool) or not isinstance(v, int):
            raise ProtocolError(f"i64 primitive requires an integer, got {v!r}")
        if not I64_MIN <= v <= I64_MAX:
            raise ProtocolError(f"integer overflows 64 bits: {v}")
        return Prim("i64", v)
    if tag == "f64":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ProtocolError(f"f64 primitive requires a number, got {v!r}")
        return Prim("f64", float(v))
    if tag == "bool":
        if not isinstance(v, bool):
            raise ProtocolError(f"bool primitive requires a boolean, got {v!r}")
        return Prim("bool", v)
    if not isinstance(v, str):
        raise ProtocolError(f"str primitive requires text, got {v!r}")
    return Prim("str", v)


def descriptor_to_doc(desc: TypeDescriptor) -> dict:
    return {
        "name": desc.type_name,
        "supertype": desc.supertype_name,
        "interface": desc.is_interface,
        "fields": [
            {"name": f.name, "type": f.type_name, "mutable": f.mutable}
            for f in desc.fields
        ],
        "methods": [
            {
                "name": m.name,
                "params": list(m.params),
                "returns": m.return_type,
                "network_fault": m.declares_network_fault,
                "visibility": m.visibility,
            }
            for m in desc.methods
        ],
    }


def doc_to_descriptor(doc: object) -> TypeDescriptor:
    if not isinstance(doc, dict):
        raise ProtocolError("type descriptor must be an object")
    try:
        fields = tuple(
            FieldDescriptor(f["name"], f["type"], bool(f["mutable"]))
            for f in _req(doc, "fields", list)
        )
        methods = tuple(
            MethodDescriptor(
                m["name"],
                tuple(m["params"]),
                m["returns"],
                bool(m["network_fault"]),
                m.get("visibility", PUBLIC),
            )
            for m in _req(doc, "methods", list)
        )
        return TypeDescriptor(
            type_name=_req(doc, "name", str),
            supertype_name=doc.get("supertype"),
            fields=fields,
            methods=methods,
            is_interface=bool(_req(doc, "interface", bool)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed type descriptor: {exc}") from exc


def rior_to_doc(rior: RIOR) -> dict:
    # Cache keys are emitted sorted so equal references always yield equal bytes.
    names = sorted(rior.cached_field_names)
    return {
        "host": rior.endpoint.host,
        "port": rior.endpoint.port,
        "guid": rior.guid.hex,
        "name": rior.service_name,
        "iface": descriptor_to_doc(rior.interface_descriptor),
        "cache": {
            "fields": {n: wire_to_doc(rior.cached_field_snapshot[n]) for n in names},
            "accessors": names,
        },
    }


def doc_to_rior(doc: object) -> RIOR:
    if not isinstance(doc, dict):
        raise ProtocolError("remote reference must be an object")
    try:
        cache = doc.get("cache") or {"fields": {}, "accessors": []}
        if not isinstance(cache, dict):
            raise ProtocolError("cache section must be an object")
        snapshot = {
            name: doc_to_wire(w) for name, w in _req(cache, "fields", dict).items()
        }
        return RIOR(
            endpoint=Endpoint(_req(doc, "host", str), _req(doc, "port", int)),
            guid=GUID.parse(_req(doc, "guid", str)),
            service_name=doc.get("name"),
            interface_descriptor=doc_to_descriptor(_req(doc, "iface", dict)),
            cached_field_names=frozenset(_req(cache, "accessors", list)),
            cached_field_snapshot=snapshot,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed remote reference: {exc}") from exc


def _req(doc: dict, key: str, typ: type):
    if key not in doc:
        raise ProtocolError(f"missing key {key!r}")
    value = doc[key]
    if typ is int and isinstance(value, bool):
        raise ProtocolError(f"key {key!r} must be an integer")
    if not isinstance(value, typ):
        raise ProtocolError(f"key {key!r} has wrong type {type(value).__name__}")
    return value


# -- envelopes ---------------------------------------------------------------


def encode_request(req: Request) -> bytes:
    return canonical_bytes(
        {
            "rrt": req.rrt_version,
            "target": req.target,
            "method": req.method,
            "args": [wire_to_doc(a) for a in req.args],
            "peer": req.peer_kind,
        }
    )


def decode_request(data: bytes) -> Request:
    doc = _parse_json(data)
    if not isinstance(doc, dict):
        raise ProtocolError("request envelope must be a JSON object")
    version = _req(doc, "rrt", int)
    if version != RRT_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    peer = _req(doc, "peer", str)
    if peer not in ("rrt", "plain"):
        raise ProtocolError(f"unknown peer kind {peer!r}")
    return Request(
        target=_req(doc, "target", str),
        method=_req(doc, "method", str),
        args=tuple(doc_to_wire(a) for a in _req(doc, "args", list)),
        peer_kind=peer,
    )


def encode_response(resp: Response) -> bytes:
    if resp.ok:
        return canonical_bytes({"ok": True, "result": wire_to_doc(resp.result)})
    return canonical_bytes(
        {
            "ok": False,
            "fault": {
                "kind": resp.fault.kind,
                "class": resp.fault.fault_class,
                "message": resp.fault.message,
            },
        }
    )


def decode_response(data: bytes) -> Response:
    doc = _parse_json(data)
    if not isinstance(doc, dict):
        raise ProtocolError("response envelope must be a JSON object")
    ok = _req(doc, "ok", bool)
    if ok:
        return Response(ok=True, result=doc_to_wire(_req(doc, "result", dict)))
    fault = _req(doc, "fault", dict)
    kind = _req(fault, "kind", str)
    if kind not in ("application", "network", "protocol"):
        raise ProtocolError(f"unknown fault kind {kind!r}")
    return Response(
        ok=False,
        fault=Fault(kind, _req(fault, "class", str), _req(fault, "message", str)),
    )
