"""Client/server reference machinery: handles, the proxy cache, loop-back
resolution, smart-proxy field caching, automatic deployment, and outbound
method invocation.

Functions here take the owning runtime node as their first argument; a node
provides `types`, `services`, `policy`, `proxy_cache`, `endpoint`, `config`,
plus `handle_network_fault` and `observe_decision` hooks.
"""

from __future__ import annotations

import http.client
import threading
from typing import Callable, Sequence

from . import codec
from .codec import Request, Response
from .errors import (
    ApplicationFault,
    NetworkFault,
    ProtocolError,
    ServiceNotFound,
    UnknownMethodError,
    UnregisteredTypeError,
)
from .model import (
    GUID,
    Endpoint,
    NULL_TYPE,
    RIOR,
    RemoteProxyBase,
    SEQUENCE_TYPE,
    UNBOUNDED,
    by_value,
)
from .policy import CallContext, CallRole, PeerKind
from .registry import Skeleton

Transport = Callable[[Request], Response]

DEFAULT_TIMEOUT = 10.0


def http_transport(endpoint: Endpoint, timeout: float = DEFAULT_TIMEOUT) -> Transport:
    """One-shot HTTP POST transport to a node's invoke endpoint."""

    def send(request: Request) -> Response:
        body = codec.encode_request(request)
        conn = http.client.HTTPConnection(endpoint.host, endpoint.port, timeout=timeout)
        try:
            conn.request(
                "POST",
                f"/invoke/{request.target}",
                body=body,
                headers={"Content-Type": "application/json"},
            )
            raw = conn.getresponse().read()
        except OSError as exc:
            raise NetworkFault(f"{endpoint}: {exc}") from exc
        finally:
            conn.close()
        return codec.decode_response(raw)

    return send


class Handle(RemoteProxyBase):
    """Client-side stand-in for a remote service.

    A handle presents exactly the methods of the reference's deployment
    interface; attribute access on an interface method yields a callable that
    forwards over the wire. Accessors for cached fields are served from the
    local snapshot and never touch the network. ``call_counter`` counts
    transport sends (test instrumentation).
    """

    def __init__(self, rior: RIOR, node, transport: Transport | None = None):
        self.rior = rior
        self.call_counter = 0
        self._node = node
        self._transport = transport or http_transport(
            rior.endpoint, getattr(node.config, "request_timeout", DEFAULT_TIMEOUT)
        )
        self._cache_lock = threading.Lock()
        self.cached_fields: dict[str, object] = {
            name: codec.decode_value(
                wire,
                registry=node.types,
                resolve_ref=lambda r: resolve_incoming_rior(node, r),
            )
            for name, wire in rior.cached_field_snapshot.items()
        }

    @property
    def interface_name(self) -> str:
        return self.rior.interface_descriptor.type_name

    def invoke(self, method: str, args: Sequence[object] = ()) -> object:
        return remote_invoke(self._node, self, method, list(args))

    def _send(self, request: Request) -> Response:
        self.call_counter += 1
        return self._transport(request)

    def _cached_accessor(self, method: str) -> tuple[str, str] | None:
        """(op, field) when the method is a local accessor for a cached field."""
        for op in ("get", "set"):
            prefix = f"{op}_"
            if method.startswith(prefix) and method[len(prefix):] in self.cached_fields:
                return op, method[len(prefix):]
        return None

    def __getattr__(self, name: str):
        try:
            rior = object.__getattribute__(self, "rior")
        except AttributeError:
            raise AttributeError(name) from None
        if rior.interface_descriptor.has_method_named(name):
            return lambda *args: self.invoke(name, args)
        raise AttributeError(
            f"{rior.interface_descriptor.type_name} proxy has no method {name!r}"
        )

    def __repr__(self) -> str:
        return (
            f"<Handle {self.interface_name} "
            f"{self.rior.service_name or self.rior.guid.hex} @ {self.rior.endpoint}>"
        )


class ProxyCache:
    """At most one handle per remote GUID per node."""

    def __init__(self):
        self._handles: dict[GUID, Handle] = {}
        self._lock = threading.Lock()

    def get_or_create(self, guid: GUID, factory: Callable[[], Handle]) -> Handle:
        with self._lock:
            handle = self._handles.get(guid)
            if handle is None:
                handle = factory()
                self._handles[guid] = handle
            return handle

    def get(self, guid: GUID) -> Handle | None:
        with self._lock:
            return self._handles.get(guid)

    def __len__(self) -> int:
        with self._lock:
            return len(self._handles)


def resolve_incoming_rior(node, rior: RIOR) -> object:
    """Turn an incoming remote reference into something the application can use.

    A reference that denotes a service in this node's own address space
    loops back to the live object itself; otherwise the per-GUID cache
    either supplies the existing handle or a new one is built with its
    cached fields initialized from the reference's snapshot.
    """
    if rior.endpoint == node.endpoint:
        skeleton = node.services.lookup_guid(rior.guid)
        if skeleton is not None:
            return skeleton.service_object
    return node.proxy_cache.get_or_create(rior.guid, lambda: Handle(rior, node))


def get_object_by_name(node, host: str, port: int, name: str) -> object:
    """Fetch a remote service's reference by name or GUID and resolve it."""
    conn = http.client.HTTPConnection(
        host, port, timeout=getattr(node.config, "request_timeout", DEFAULT_TIMEOUT)
    )
    try:
        conn.request("GET", f"/describe/{name}")
        resp = conn.getresponse()
        raw = resp.read()
        status = resp.status
    except OSError as exc:
        raise NetworkFault(f"{host}:{port}: {exc}") from exc
    finally:
        conn.close()
    if status == 404:
        raise ServiceNotFound(f"{host}:{port} has no service {name!r}")
    if status != 200:
        raise ProtocolError(f"describe returned HTTP {status}")
    doc = codec._parse_json(raw)
    return resolve_incoming_rior(node, codec.doc_to_rior(doc))


def actual_type_name_of(node, value: object) -> str:
    """Wire-policy type name for a live value (actual class, not declared)."""
    if value is None:
        return NULL_TYPE
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "i64"
    if isinstance(value, float):
        return "f64"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return SEQUENCE_TYPE
    if isinstance(value, RemoteProxyBase):
        return value.rior.interface_descriptor.type_name
    return node.types.descriptor_of(value).type_name


def remote_invoke(node, handle: Handle, method: str, args: list) -> object:
    """Forward one method call through a handle.

    Cached-field accessors are served locally with zero transport calls (a
    local set never contacts the remote node; there is no coherency).
    Everything else resolves a transmission decision per argument, encodes a
    request, sends it, and decodes the response. Application faults re-raise
    locally; network faults follow the node's failure policy.
    """
    iface = handle.rior.interface_descriptor
    md = iface.find_method(method, len(args))
    if md is None:
        raise UnknownMethodError(
            f"method {method!r}/{len(args)} not in deployment interface "
            f"{iface.type_name}"
        )
    accessor = handle._cached_accessor(method)
    if accessor is not None:
        op, fname = accessor
        with handle._cache_lock:
            if op == "get" and not args:
                return handle.cached_fields[fname]
            if op == "set" and len(args) == 1:
                handle.cached_fields[fname] = args[0]
                return None

    encoder = codec.MessageEncoder(
        node.types, deploy_ref=lambda obj, sig: auto_deploy(node, obj, sig)
    )
    wire_args = []
    for i, value in enumerate(args):
        ctx = CallContext(
            role=CallRole.ARGUMENT,
            declared_type_name=iface.type_name,
            method_name=method,
            actual_type_name=actual_type_name_of(node, value),
            peer_kind=PeerKind.RRT,
            param_index=i,
        )
        decision = node.policy.resolve(ctx)
        node.observe_decision("arg", ctx.actual_type_name, decision)
        wire_args.append(encoder.encode(value, decision, md.params[i]))

    request = Request(
        target=handle.rior.guid.hex,
        method=method,
        args=tuple(wire_args),
        peer_kind="rrt",
    )
    try:
        response = handle._send(request)
    except NetworkFault as fault:
        return node.handle_network_fault(md, fault)
    if response.ok:
        return codec.decode_value(
            response.result,
            registry=node.types,
            resolve_ref=lambda r: resolve_incoming_rior(node, r),
        )
    fault = response.fault
    if fault.kind == "application":
        raise ApplicationFault(fault.fault_class, fault.message)
    if fault.kind == "network":
        return node.handle_network_fault(
            md, NetworkFault(f"{fault.fault_class}: {fault.message}")
        )
    raise ProtocolError(f"{fault.fault_class}: {fault.message}")


def auto_deploy(node, obj: object, signature_type_name: str | None = None) -> RIOR:
    """Reference an object that is escaping this address space.

    Already deployed under its own concrete type: that service is reused.
    Deployed under interfaces related to the signature type: the narrowest
    matching deployment wins (most derived, then newest). Otherwise a new
    anonymous service is created — under the concrete type by default, or
    under the signature type when the node is configured that way.
    """
    if isinstance(obj, RemoteProxyBase):
        return obj.rior
    services = node.services
    concrete_name = node.types.registered_name_of(obj)
    if concrete_name is None:
        raise UnregisteredTypeError(
            f"cannot auto-deploy unregistered class {type(obj).__name__}"
        )
    deployments = services.deployments_of(obj)
    for sk in deployments:
        if sk.interface_descriptor.type_name == concrete_name:
            return build_rior(node, sk)

    if signature_type_name is not None:
        matching = [
            sk
            for sk in deployments
            if node.types.is_subtype_name(
                sk.interface_descriptor.type_name, signature_type_name
            )
        ]
        if matching:
            best = max(matching, key=lambda sk: (self_derivation(node, sk, signature_type_name), sk.seq))
            return build_rior(node, best)

    interface: str | None = None
    if not node.config.concrete_type_always and signature_type_name is not None:
        if node.types.lookup(signature_type_name) is not None:
            interface = signature_type_name
    rior = services.deploy(obj, interface, None)
    return build_rior(node, services.lookup_guid(rior.guid))


def self_derivation(node, skeleton: Skeleton, ancestor_name: str) -> int:
    """Steps from a deployment's interface down to the signature type (0 = same)."""
    chain = node.types.supertype_chain_of(skeleton.interface_descriptor.type_name)
    try:
        return len(chain) - 1 - chain.index(ancestor_name)
    except ValueError:
        return -1


def build_rior(node, skeleton: Skeleton, *, with_snapshot: bool = True) -> RIOR:
    """Serialize-time remote reference for a deployed service.

    Smart-proxy information is recorded here, immediately before the
    reference goes on the wire: cache-rule field names applicable to the
    service (via its concrete type or its deployment interface, including
    supertypes) that the interface declares, plus the current field values.
    """
    iface = skeleton.interface_descriptor
    names: frozenset[str] = frozenset()
    snapshot: dict[str, object] = {}
    if with_snapshot:
        lineage = node.types.supertype_chain_of(
            skeleton.concrete_type_name
        ) + node.types.supertype_chain_of(iface.type_name)
        cached = node.policy.cached_fields_for(dict.fromkeys(lineage))
        names = frozenset(n for n in cached if n in iface.field_names)
        for fname in sorted(names):
            value = getattr(skeleton.service_object, fname)
            snapshot[fname] = codec.encode_value(
                value,
                by_value(UNBOUNDED),
                registry=node.types,
                deploy_ref=lambda obj, sig: auto_deploy(node, obj, sig),
                declared_type=iface.field(fname).type_name,
            )
    return RIOR(
        endpoint=node.endpoint,
        guid=skeleton.guid,
        service_name=skeleton.service_name,
        interface_descriptor=iface,
        cached_field_names=names,
        cached_field_snapshot=snapshot,
    )
