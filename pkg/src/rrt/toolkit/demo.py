"""Peer-to-peer routing demonstration.

A P2PNode instance is deployed under three interfaces (management,
monitoring, routing), policy rules make Key instances travel by value and
cache the node's key in client proxies, and the deliver helper switches big
messages to by-reference transmission per call. Routing itself is trivial on
purpose: the demo exercises middleware semantics, not overlay logic.
"""

from __future__ import annotations

from ..errors import UnknownMethodError
from ..model import (
    FieldDescriptor,
    MethodDescriptor,
    PolicyKind,
    TypeDescriptor,
    UNBOUNDED,
)
from ..node import RRTNode
from ..registry import MethodTable, TypeRegistry
from .harness import LocalPair

#: Messages above this payload size are pushed by-reference (demo constant).
MAX_MESSAGE_SIZE = 1024


class Key:
    def __init__(self, value: str = ""):
        self.value = value

    def __repr__(self) -> str:
        return f"Key({self.value!r})"


class Message:
    def __init__(self, payload: str = ""):
        self.payload = payload

    def __repr__(self) -> str:
        return f"Message({len(self.payload)} bytes)"


class P2PNode:
    """A routing-network node. Remote method names are its wire contract."""

    def __init__(self, key: Key):
        self.key = key
        self.peers: list = []
        self.running = True
        self._log: list[str] = []

    def addPeer(self, peer) -> None:
        self.peers.append(peer)

    def route(self, key, msg) -> None:
        self._log.append(f"route {key!r} -> {msg!r}")

    def getLog(self) -> str:
        return "\n".join(self._log)

    def stop(self) -> None:
        self.running = False

    def start(self) -> None:
        self.running = True

    def getKey(self) -> Key:
        return self.key


KEY_TYPE = TypeDescriptor(
    "Key",
    fields=(FieldDescriptor("value", "string"),),
)

MESSAGE_TYPE = TypeDescriptor(
    "Message",
    fields=(FieldDescriptor("payload", "string"),),
)

P2PNODE_TYPE = TypeDescriptor(
    "P2PNode",
    fields=(FieldDescriptor("key", "Key"),),
    methods=(
        MethodDescriptor("addPeer", ("IP2PNode",)),
        MethodDescriptor("route", ("Key", "Message")),
        MethodDescriptor("getLog", (), "string"),
        MethodDescriptor("stop"),
        MethodDescriptor("start"),
        MethodDescriptor("getKey", (), "Key"),
    ),
)

IMANAGE = TypeDescriptor(
    "IManage",
    methods=(MethodDescriptor("stop"), MethodDescriptor("start")),
    is_interface=True,
)

IMONITOR = TypeDescriptor(
    "IMonitor",
    methods=(MethodDescriptor("getLog", (), "string"),),
    is_interface=True,
)

IP2PNODE = TypeDescriptor(
    "IP2PNode",
    fields=(FieldDescriptor("key", "Key"),),
    methods=(
        MethodDescriptor("addPeer", ("IP2PNode",)),
        MethodDescriptor("route", ("Key", "Message")),
        MethodDescriptor("getKey", (), "Key"),
    ),
    is_interface=True,
)


def register_demo_types(types: TypeRegistry) -> None:
    types.register_type(KEY_TYPE, py_type=Key, factory=Key)
    types.register_type(MESSAGE_TYPE, py_type=Message, factory=Message)
    types.register_type(
        P2PNODE_TYPE,
        MethodTable.for_class(P2PNode, P2PNODE_TYPE),
        py_type=P2PNode,
        factory=lambda key="": P2PNode(Key(key)),
    )
    types.register_type(IMANAGE)
    types.register_type(IMONITOR)
    types.register_type(IP2PNODE)


def install_demo_policy(node: RRTNode) -> None:
    """Key travels by value; client proxies for P2PNode cache its key field."""
    node.policy.set_class_policy("Key", PolicyKind.BY_VALUE, True)
    node.policy.set_field_to_be_cached("P2PNode", "key")


def deliver(client: RRTNode, p2p_handle, dest: Key, msg: Message,
            max_size: int = MAX_MESSAGE_SIZE) -> None:
    """Route a message, pushing oversized payloads by reference for this call."""
    kind = (
        PolicyKind.BY_REFERENCE
        if len(msg.payload) > max_size
        else PolicyKind.BY_VALUE
    )
    with client.policy.scoped_param_policy(
        "IP2PNode", "route", 1, kind, UNBOUNDED, overridable=False
    ):
        p2p_handle.route(dest, msg)


def p2p_demo(seed: int = 17) -> list[str]:
    """Run the full scenario and return the wire-decision transcript.

    Transcript lines are "<arg|return> <type_name> <BY_VALUE|BY_REFERENCE>
    level=<1..7|default>", one per transmitted value, in call order.
    """
    transcript: list[str] = []

    def observe(role, type_name, decision):
        transcript.append(
            f"{role} {type_name} {decision.kind.value} level={decision.level_text}"
        )

    with LocalPair(seed=seed, registrars=(register_demo_types,)) as pair:
        server, client = pair.a, pair.b
        node_obj = P2PNode(Key("node-key"))
        server.deploy(node_obj, "IManage", "Manage")
        server.deploy(node_obj, "IMonitor", "Monitor")
        server.deploy(node_obj, "IP2PNode", "P2P")
        install_demo_policy(server)
        install_demo_policy(client)
        server.decision_observer = observe
        client.decision_observer = observe

        host, port = server.endpoint.host, server.endpoint.port
        p2p = client.get_object_by_name(host, port, "P2P")
        manage = client.get_object_by_name(host, port, "Manage")
        monitor = client.get_object_by_name(host, port, "Monitor")

        # Cached key: served from the proxy snapshot, zero invoke traffic.
        invokes_before = server.invoke_requests
        key = p2p.get_key()
        if server.invoke_requests != invokes_before:
            raise AssertionError("cached key read hit the invoke endpoint")
        if not isinstance(key, Key) or key.value != "node-key":
            raise AssertionError(f"cached key snapshot wrong: {key!r}")

        deliver(client, p2p, Key("dest-1"), Message("ping"))
        deliver(client, p2p, Key("dest-2"), Message("x" * (2 * MAX_MESSAGE_SIZE)))

        manage.stop()
        try:
            manage.invoke("route", (Key("dest-3"), Message("nope")))
            raise AssertionError("route must be rejected on the management interface")
        except UnknownMethodError:
            pass
        deliver(client, p2p, Key("dest-3"), Message("pong"))
        manage.start()

        log = monitor.getLog()
        if "dest-3" not in log:
            raise AssertionError("routing log is missing the post-stop delivery")

    return transcript
