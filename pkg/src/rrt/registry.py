"""Server-side deployment: type registration, the service map, and skeleton dispatch.

Method dispatch never probes live objects at call time: every invokable method
gets a binding callable at registration, and a skeleton restricts a concrete
type's table to its deployment interface. Only interface-listed methods are
remotely reachable, independent of local visibility.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import (
    ApplicationFault,
    DeploymentError,
    GuidCollisionError,
    InvocationError,
    ServiceNotFound,
    TypeRegistrationError,
    UnknownMethodError,
    UnregisteredTypeError,
)
from .model import (
    GUID,
    Endpoint,
    GuidSource,
    MethodDescriptor,
    PUBLIC,
    RIOR,
    TypeDescriptor,
    VOID,
    guid_new,
    is_subtype,
    supertype_chain,
)

# A binding applies one method to a live object: binding(obj, args) -> result.
Binding = Callable[[object, Sequence[object]], object]


class MethodTable:
    """Bindings from (method name, arity) to invokable callables."""

    def __init__(self, bindings: dict[tuple[str, int], Binding] | None = None):
        self.bindings: dict[tuple[str, int], Binding] = dict(bindings or {})

    def bind(self, name: str, arity: int, fn: Binding) -> None:
        self.bindings[(name, arity)] = fn

    def get(self, name: str, arity: int) -> Binding | None:
        return self.bindings.get((name, arity))

    def restricted_to(self, descriptor: TypeDescriptor) -> "MethodTable":
        table = MethodTable()
        for m in descriptor.methods:
            fn = self.get(m.name, m.arity)
            if fn is None:
                raise TypeRegistrationError(
                    f"no binding for interface method {m.ident}"
                )
            table.bind(m.name, m.arity, fn)
        return table

    @classmethod
    def for_class(cls, py_type: type, descriptor: TypeDescriptor) -> "MethodTable":
        """Build bindings once from the class's own callables, one per method."""
        table = cls()
        for m in descriptor.methods:
            target = getattr(py_type, m.name, None)
            if not callable(target):
                raise TypeRegistrationError(
                    f"{descriptor.type_name}: no callable for method {m.ident}"
                )
            table.bind(m.name, m.arity, _call_binding(target))
        return table


def _call_binding(target) -> Binding:
    def bound(obj, args):
        return target(obj, *args)

    return bound


def _field_get_binding(field_name: str) -> Binding:
    def bound(obj, args):
        return getattr(obj, field_name)

    return bound


def _field_set_binding(field_name: str) -> Binding:
    def bound(obj, args):
        setattr(obj, field_name, args[0])
        return None

    return bound


def synthesize_accessors(descriptor: TypeDescriptor) -> list[MethodDescriptor]:
    """Accessor methods the registry adds at registration time.

    For each field f this yields get_<f>() and, for mutable fields,
    set_<f>(value). A declared method that already has the accessor shape is
    treated as the accessor (synthesis is idempotent); a colliding method of
    a different shape pushes the accessor to get_<f>_field / set_<f>_field.
    """
    out: list[MethodDescriptor] = []
    for f in descriptor.fields:
        getter = MethodDescriptor(f"get_{f.name}", (), f.type_name)
        existing = descriptor.find_method(getter.name, 0)
        if existing is None:
            out.append(getter)
        elif existing.return_type != f.type_name:
            out.append(MethodDescriptor(f"{getter.name}_field", (), f.type_name))
        if not f.mutable:
            continue
        setter = MethodDescriptor(f"set_{f.name}", (f.type_name,), VOID)
        existing = descriptor.find_method(setter.name, 1)
        if existing is None:
            out.append(setter)
        elif existing.params != setter.params or existing.return_type != VOID:
            out.append(MethodDescriptor(f"{setter.name}_field", (f.type_name,), VOID))
    return out


@dataclass
class RegisteredType:
    """Everything the runtime knows about one application type."""

    descriptor: TypeDescriptor
    method_table: MethodTable | None
    py_type: type | None = None
    instantiate: Callable[[], object] | None = None
    factory: Callable[..., object] | None = None
    repr_fn: Callable[[object], str] | None = None


class TypeRegistry:
    """Name-keyed table of registered type descriptors and their bindings."""

    def __init__(self):
        self._types: dict[str, RegisteredType] = {}
        self._by_class: dict[type, str] = {}
        self._lock = threading.RLock()

    def register_type(
        self,
        descriptor: TypeDescriptor,
        table: MethodTable | None = None,
        *,
        py_type: type | None = None,
        instantiate: Callable[[], object] | None = None,
        factory: Callable[..., object] | None = None,
        repr_fn: Callable[[object], str] | None = None,
    ) -> str:
        """Install a descriptor plus its bindings; returns the type id (its name).

        Accessor methods are synthesized from the field list and merged into
        both the descriptor and the table. Non-interface types must supply a
        binding for every declared method.
        """
        with self._lock:
            name = descriptor.type_name
            if name in self._types:
                raise TypeRegistrationError(f"type name already registered: {name}")
            if descriptor.supertype_name is not None:
                # Also rejects cycles through already-registered ancestors.
                view = dict(self.descriptor_view())
                view[name] = descriptor
                supertype_chain(descriptor, view)

            accessors = synthesize_accessors(descriptor)
            merged = descriptor.with_methods(accessors) if accessors else descriptor

            merged_table: MethodTable | None = None
            if not merged.is_interface:
                merged_table = MethodTable(dict(table.bindings)) if table else MethodTable()
                # Accessor-shaped methods without an explicit binding fall back
                # to direct field access.
                for m in merged.methods:
                    if merged_table.get(m.name, m.arity) is not None:
                        continue
                    fname = _accessor_field(merged, m)
                    if fname is None:
                        continue
                    if m.arity == 0:
                        merged_table.bind(m.name, 0, _field_get_binding(fname))
                    else:
                        merged_table.bind(m.name, 1, _field_set_binding(fname))
                for m in merged.methods:
                    if merged_table.get(m.name, m.arity) is None:
                        raise TypeRegistrationError(
                            f"{name}: method {m.ident} has no binding"
                        )

            if instantiate is None and py_type is not None:
                instantiate = _bare_constructor(py_type)
            if factory is None and py_type is not None:
                factory = py_type
            self._types[name] = RegisteredType(
                descriptor=merged,
                method_table=merged_table,
                py_type=py_type,
                instantiate=instantiate,
                factory=factory,
                repr_fn=repr_fn,
            )
            if py_type is not None:
                self._by_class[py_type] = name
            return name

    def lookup(self, type_name: str) -> RegisteredType | None:
        return self._types.get(type_name)

    def get(self, type_name: str) -> TypeDescriptor:
        rt = self._types.get(type_name)
        if rt is None:
            raise UnregisteredTypeError(f"unknown type: {type_name}")
        return rt.descriptor

    def maybe_descriptor(self, type_name: str) -> TypeDescriptor | None:
        rt = self._types.get(type_name)
        return rt.descriptor if rt else None

    def descriptor_of(self, value: object) -> TypeDescriptor:
        name = self._by_class.get(type(value))
        if name is None:
            raise UnregisteredTypeError(
                f"no registered descriptor for class {type(value).__name__}"
            )
        return self._types[name].descriptor

    def registered_name_of(self, value: object) -> str | None:
        return self._by_class.get(type(value))

    def instantiate(self, type_name: str) -> object:
        rt = self._types.get(type_name)
        if rt is None:
            raise UnregisteredTypeError(f"unknown type: {type_name}")
        if rt.instantiate is None:
            raise UnregisteredTypeError(f"type {type_name} is not instantiable")
        return rt.instantiate()

    def descriptor_view(self) -> dict[str, TypeDescriptor]:
        return {name: rt.descriptor for name, rt in self._types.items()}

    def supertype_chain_of(self, type_name: str, *, strict: bool = False) -> list[str]:
        rt = self._types.get(type_name)
        if rt is None:
            return [type_name]
        return supertype_chain(rt.descriptor, self.descriptor_view(), strict=strict)

    def is_subtype_name(self, candidate: str, ancestor: str) -> bool:
        cand = self._types.get(candidate)
        anc = self._types.get(ancestor)
        if cand is None or anc is None:
            return candidate == ancestor
        return is_subtype(cand.descriptor, anc.descriptor, self.descriptor_view())

    def repr_of(self, value: object) -> str | None:
        name = self._by_class.get(type(value))
        if name is None:
            return None
        fn = self._types[name].repr_fn
        return fn(value) if fn else None


def _accessor_field(descriptor: TypeDescriptor, method: MethodDescriptor) -> str | None:
    """Field a method reads or writes, if it has accessor shape; else None."""
    for prefix, arity in (("get_", 0), ("set_", 1)):
        if method.name.startswith(prefix) and method.arity == arity:
            fname = method.name[len(prefix):]
            if fname.endswith("_field"):
                fname = fname[: -len("_field")]
            f = descriptor.field(fname)
            if f is not None:
                return fname
    return None


def _bare_constructor(py_type: type) -> Callable[[], object]:
    def make() -> object:
        return object.__new__(py_type)

    return make


@dataclass
class Skeleton:
    """Server-side binding of one deployed service to its live object.

    One skeleton per deployed service; the method table is the concrete
    type's table restricted to the deployment interface.
    """

    service_object: object
    interface_descriptor: TypeDescriptor
    method_table: MethodTable
    guid: GUID
    service_name: str | None
    concrete_type_name: str
    seq: int = 0


class ServiceRegistry:
    """The service map plus deploy/lookup/invoke operations of one node."""

    def __init__(
        self,
        types: TypeRegistry,
        *,
        endpoint_provider: Callable[[], Endpoint],
        guid_source: GuidSource | None = None,
    ):
        self.types = types
        self._endpoint_provider = endpoint_provider
        self._guid_source = guid_source
        self._by_guid: dict[GUID, Skeleton] = {}
        self._by_name: dict[str, Skeleton] = {}
        self._by_object: dict[int, list[Skeleton]] = {}
        self._seq = 0
        self._lock = threading.RLock()

    @property
    def endpoint(self) -> Endpoint:
        return self._endpoint_provider()

    def deploy(
        self,
        obj: object,
        interface: TypeDescriptor | str | None = None,
        name: str | None = None,
    ) -> RIOR:
        """Expose a live object as a service and return its remote reference.

        Without an explicit interface the service exposes the public methods
        of the object's concrete type. The object itself is never touched:
        existing local references keep working unchanged.
        """
        with self._lock:
            concrete = self.types.descriptor_of(obj)
            iface = self._resolve_interface(concrete, interface)
            if name is not None:
                if not name:
                    raise DeploymentError("service name must be non-empty")
                if name in self._by_name:
                    raise DeploymentError(f"service name already in use: {name}")
            guid = guid_new(self._guid_source)
            if guid in self._by_guid:
                raise GuidCollisionError(f"GUID collision: {guid.hex}")

            concrete_rt = self.types.lookup(concrete.type_name)
            assert concrete_rt is not None and concrete_rt.method_table is not None
            table = concrete_rt.method_table.restricted_to(iface)

            self._seq += 1
            skeleton = Skeleton(
                service_object=obj,
                interface_descriptor=iface,
                method_table=table,
                guid=guid,
                service_name=name,
                concrete_type_name=concrete.type_name,
                seq=self._seq,
            )
            self._by_guid[guid] = skeleton
            if name is not None:
                self._by_name[name] = skeleton
            self._by_object.setdefault(id(obj), []).append(skeleton)
            return RIOR(
                endpoint=self.endpoint,
                guid=guid,
                service_name=name,
                interface_descriptor=iface,
            )

    def _resolve_interface(
        self, concrete: TypeDescriptor, interface: TypeDescriptor | str | None
    ) -> TypeDescriptor:
        if interface is None:
            public = tuple(m for m in concrete.methods if m.visibility == PUBLIC)
            return TypeDescriptor(
                type_name=concrete.type_name,
                supertype_name=concrete.supertype_name,
                fields=concrete.fields,
                methods=public,
                is_interface=concrete.is_interface,
            )
        name = interface if isinstance(interface, str) else interface.type_name
        rt = self.types.lookup(name)
        if rt is None:
            raise DeploymentError(f"deployment interface not registered: {name}")
        iface = rt.descriptor
        missing = [
            m.ident
            for m in iface.methods
            if not _compliant(concrete, m)
        ]
        if missing:
            raise DeploymentError(
                f"interface {name} has methods absent from {concrete.type_name}: "
                + ", ".join(missing)
            )
        return iface

    def lookup(self, name_or_guid: str) -> Skeleton:
        """Exact-match, case-sensitive service lookup by name or canonical GUID."""
        with self._lock:
            sk = self._by_name.get(name_or_guid)
            if sk is not None:
                return sk
            try:
                guid = GUID.parse(name_or_guid)
            except ValueError:
                raise ServiceNotFound(f"no service named {name_or_guid!r}") from None
            sk = self._by_guid.get(guid)
            if sk is None:
                raise ServiceNotFound(f"no service with GUID {name_or_guid}")
            return sk

    def lookup_guid(self, guid: GUID) -> Skeleton | None:
        with self._lock:
            return self._by_guid.get(guid)

    def deployments_of(self, obj: object) -> list[Skeleton]:
        with self._lock:
            return list(self._by_object.get(id(obj), ()))

    def undeploy(self, name_or_guid: str) -> None:
        """Tear a service down. Test hygiene only; GUIDs are never reused."""
        with self._lock:
            sk = self.lookup(name_or_guid)
            del self._by_guid[sk.guid]
            if sk.service_name is not None:
                self._by_name.pop(sk.service_name, None)
            lst = self._by_object.get(id(sk.service_object))
            if lst is not None:
                lst.remove(sk)
                if not lst:
                    del self._by_object[id(sk.service_object)]

    def list_skeletons(self) -> list[Skeleton]:
        with self._lock:
            return sorted(self._by_guid.values(), key=lambda s: s.seq)

    def __len__(self) -> int:
        with self._lock:
            return len(self._by_guid)

    def service_count(self) -> int:
        return len(self)


def _compliant(concrete: TypeDescriptor, wanted: MethodDescriptor) -> bool:
    """Strict structural compliance: name, arity, parameter types, return type."""
    have = concrete.find_method(wanted.name, wanted.arity)
    return (
        have is not None
        and have.params == wanted.params
        and have.return_type == wanted.return_type
    )


def invoke_local(skeleton: Skeleton, method: str, args: Sequence[object]) -> object:
    """Apply a decoded call to the live object through the skeleton's table.

    Methods outside the deployment interface are rejected no matter what the
    concrete type can do locally. Exceptions raised by the binding surface as
    structured application faults and never crash the node.
    """
    iface = skeleton.interface_descriptor
    md = iface.find_method(method, len(args))
    if md is None:
        if iface.has_method_named(method):
            raise InvocationError(
                f"{method}: wrong arity {len(args)} for service "
                f"{skeleton.service_name or skeleton.guid.hex}"
            )
        raise UnknownMethodError(
            f"method {method!r} not in deployment interface {iface.type_name}"
        )
    _check_args(md, args)
    binding = skeleton.method_table.get(method, len(args))
    assert binding is not None  # restricted_to guarantees coverage
    try:
        return binding(skeleton.service_object, list(args))
    except Exception as exc:  # noqa: BLE001 - captured as a structured fault
        raise ApplicationFault(type(exc).__name__, str(exc)) from exc


_PRIM_CHECKS = {
    "i64": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "f64": lambda v: isinstance(v, float),
    "bool": lambda v: isinstance(v, bool),
    "string": lambda v: isinstance(v, str),
}


def _check_args(md: MethodDescriptor, args: Sequence[object]) -> None:
    # Primitive parameters are checked strictly; object-typed parameters
    # accept whatever decoded (plain Web Service clients send loose shapes).
    for i, (ptype, value) in enumerate(zip(md.params, args)):
        check = _PRIM_CHECKS.get(ptype)
        if check is None or value is None:
            continue
        if not check(value):
            raise InvocationError(
                f"{md.ident}: argument {i} must be {ptype}, "
                f"got {type(value).__name__}"
            )


def return_type_of(skeleton: Skeleton, method: str) -> str:
    """Declared return type of an interface method; the automatic-deployment
    signature type."""
    for m in skeleton.interface_descriptor.methods:
        if m.name == method:
            return m.return_type
    raise UnknownMethodError(
        f"method {method!r} not in deployment interface "
        f"{skeleton.interface_descriptor.type_name}"
    )
