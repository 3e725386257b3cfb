from __future__ import annotations

import pytest

from rrt.codec import wire_to_doc
from rrt.errors import (
    ApplicationFault,
    NetworkFault,
    ServiceNotFound,
    UnknownMethodError,
)
from rrt.model import MethodDescriptor, TypeDescriptor
from rrt.node import NodeConfig
from rrt.registry import MethodTable
from rrt.remote import Handle, auto_deploy, build_rior, resolve_incoming_rior
from rrt.toolkit import LocalPair
from rrt.toolkit.demo import (
    Key,
    Message,
    P2PNode,
    install_demo_policy,
    register_demo_types,
)

import test_node


@pytest.fixture
def deployed(pair):
    node_obj = P2PNode(Key("node-key"))
    pair.a.deploy(node_obj, "IP2PNode", "P2P")
    return node_obj


def a_addr(pair):
    return pair.a.endpoint.host, pair.a.endpoint.port


class TestGetObjectByName:
    def test_returns_typed_handle(self, pair, deployed):
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "P2P")
        assert isinstance(handle, Handle)
        assert handle.interface_name == "IP2PNode"

    def test_unknown_name_not_found(self, pair):
        host, port = a_addr(pair)
        with pytest.raises(ServiceNotFound):
            pair.b.get_object_by_name(host, port, "ghost")

    def test_same_service_same_handle(self, pair, deployed):
        host, port = a_addr(pair)
        one = pair.b.get_object_by_name(host, port, "P2P")
        two = pair.b.get_object_by_name(host, port, "P2P")
        assert one is two

    def test_guid_lookup(self, pair, deployed):
        host, port = a_addr(pair)
        guid = pair.a.services.lookup("P2P").guid.hex
        handle = pair.b.get_object_by_name(host, port, guid)
        assert handle.rior.guid.hex == guid

    def test_dead_host_network_fault(self, pair):
        with pytest.raises(NetworkFault):
            pair.b.get_object_by_name("127.0.0.1", 9, "P2P")


class TestResolveIncomingRior:
    def test_local_loops_back_to_object(self, pair, deployed):
        skeleton = pair.a.services.lookup("P2P")
        rior = build_rior(pair.a, skeleton)
        assert resolve_incoming_rior(pair.a, rior) is deployed

    def test_remote_resolves_once(self, pair, deployed):
        rior = build_rior(pair.a, pair.a.services.lookup("P2P"))
        h1 = resolve_incoming_rior(pair.b, rior)
        h2 = resolve_incoming_rior(pair.b, rior)
        assert h1 is h2 and isinstance(h1, Handle)

    def test_snapshot_initializes_cached_fields(self, pair, deployed):
        install_demo_policy(pair.a)
        rior = build_rior(pair.a, pair.a.services.lookup("P2P"))
        assert rior.cached_field_names == {"key"}
        handle = resolve_incoming_rior(pair.b, rior)
        assert isinstance(handle.cached_fields["key"], Key)
        assert handle.cached_fields["key"].value == "node-key"


class TestRemoteInvoke:
    def test_round_trip_by_value(self, pair, deployed):
        install_demo_policy(pair.b)  # Key instances travel by value
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "P2P")
        handle.route(Key("dest"), Message("hi"))
        assert "dest" in deployed.getLog()

    def test_unknown_method_rejected_client_side(self, pair, deployed):
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "P2P")
        with pytest.raises(UnknownMethodError):
            handle.invoke("stop")
        with pytest.raises(AttributeError):
            handle.stop

    def test_application_fault_reraised(self, pair):
        class Thrower:
            def go(self):
                raise KeyError("missing-thing")

        desc = TypeDescriptor("Thrower", methods=(MethodDescriptor("go"),))
        pair.a.types.register_type(
            desc, MethodTable.for_class(Thrower, desc), py_type=Thrower
        )
        pair.a.deploy(Thrower(), name="thrower")
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "thrower")
        with pytest.raises(ApplicationFault) as info:
            handle.go()
        assert info.value.fault_class == "KeyError"

    def test_loop_back_returns_original_object(self, pair, deployed):
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "P2P")
        # B sends A's own service back to A as an argument.
        handle.addPeer(handle)
        assert deployed.peers[-1] is deployed

    def test_call_counter_counts_transport(self, pair, deployed):
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "P2P")
        before = handle.call_counter
        handle.getKey()
        assert handle.call_counter == before + 1


class TestSmartProxy:
    @pytest.fixture
    def smart_handle(self, pair, deployed):
        install_demo_policy(pair.a)
        install_demo_policy(pair.b)
        host, port = a_addr(pair)
        return pair.b.get_object_by_name(host, port, "P2P")

    def test_cached_get_without_transport(self, pair, deployed, smart_handle):
        invokes = pair.a.invoke_requests
        sends = smart_handle.call_counter
        key = smart_handle.get_key()
        assert key.value == "node-key"
        assert pair.a.invoke_requests == invokes
        assert smart_handle.call_counter == sends

    def test_cached_matches_remote_snapshot(self, pair, deployed, smart_handle):
        cached = smart_handle.get_key()
        remote_value = test_node.invoke(pair.a, "P2P", "get_key", peer="plain")
        doc = wire_to_doc(remote_value.result)
        assert doc["fields"]["value"]["v"] == cached.value

    def test_local_set_never_reaches_remote(self, pair, deployed, smart_handle):
        invokes = pair.a.invoke_requests
        smart_handle.set_key(Key("local-only"))
        assert pair.a.invoke_requests == invokes
        assert deployed.key.value == "node-key"
        assert smart_handle.get_key().value == "local-only"

    def test_uncached_methods_still_remote(self, pair, deployed, smart_handle):
        before = smart_handle.call_counter
        smart_handle.getKey()
        assert smart_handle.call_counter == before + 1


class TestAutoDeploy:
    def test_case1_reuses_concrete_deployment(self, pair):
        key = Key("x")
        rior = pair.a.deploy(key, None, "the-key")  # concrete-type interface
        before = len(pair.a.services)
        got = auto_deploy(pair.a, key, "Key")
        assert got.guid == rior.guid
        assert len(pair.a.services) == before

    def test_case2_narrowest_matching_interface(self, pair):
        types = pair.a.types
        ibase = TypeDescriptor(
            "IBase", methods=(MethodDescriptor("poke", (), "i64"),), is_interface=True
        )
        iderived = TypeDescriptor(
            "IDerived",
            supertype_name="IBase",
            methods=(MethodDescriptor("poke", (), "i64"),),
            is_interface=True,
        )

        class Impl:
            def poke(self):
                return 99

        impl_desc = TypeDescriptor("Impl", methods=(MethodDescriptor("poke", (), "i64"),))
        types.register_type(ibase)
        types.register_type(iderived)
        types.register_type(impl_desc, MethodTable.for_class(Impl, impl_desc), py_type=Impl)
        obj = Impl()
        pair.a.deploy(obj, "IBase", "wide")
        pair.a.deploy(obj, "IDerived", "narrow")
        before = len(pair.a.services)
        rior = auto_deploy(pair.a, obj, "IBase")
        assert rior.interface_descriptor.type_name == "IDerived"
        assert rior.service_name == "narrow"
        assert len(pair.a.services) == before

    def test_case3_new_service_concrete_type(self, pair):
        key = Key("escaping")
        before = len(pair.a.services)
        rior = auto_deploy(pair.a, key, "Key")
        assert len(pair.a.services) == before + 1
        assert rior.interface_descriptor.type_name == "Key"
        assert rior.service_name is None

    def test_case3_signature_type_when_configured(self):
        with LocalPair(
            seed=5,
            registrars=(register_demo_types,),
            config_a=NodeConfig(port=0, concrete_type_always=False),
        ) as pair:
            types = pair.a.types
            inode = TypeDescriptor(
                "INode", methods=(MethodDescriptor("getLog", (), "string"),),
                is_interface=True,
            )
            types.register_type(inode)
            obj = P2PNode(Key("k"))
            rior = auto_deploy(pair.a, obj, "INode")
            assert rior.interface_descriptor.type_name == "INode"

    def test_idempotent(self, pair):
        key = Key("stable")
        first = auto_deploy(pair.a, key, "Key")
        counts = len(pair.a.services)
        second = auto_deploy(pair.a, key, "Key")
        assert first.guid == second.guid
        assert len(pair.a.services) == counts

    def test_handle_passthrough(self, pair, deployed):
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "P2P")
        assert auto_deploy(pair.b, handle, "IP2PNode") is handle.rior

    def test_escaping_return_value_over_wire(self, pair, deployed):
        # getKey's Key is undeployed; an RRT peer receives a reference to a
        # freshly auto-deployed service and can invoke through it.
        host, port = a_addr(pair)
        handle = pair.b.get_object_by_name(host, port, "P2P")
        services_before = len(pair.a.services)
        key_handle = handle.getKey()
        assert isinstance(key_handle, Handle)
        assert len(pair.a.services) == services_before + 1
        assert key_handle.get_value() == "node-key"
        # The same escape resolves to the same service next time.
        again = handle.getKey()
        assert again is key_handle
        assert len(pair.a.services) == services_before + 1
