"""The runtime process: HTTP endpoints, failure policy, node configuration.

A node binds one TCP port and serves four endpoints:

    GET  /services          JSON listing of deployed services
    GET  /describe/<id>     full remote-reference document for one service
    GET  /browse            HTML listing for humans
    GET  /<id>              alias of describe
    POST /invoke/<id>       remote method invocation

Every HTTP request receives exactly one response; malformed input produces a
structured protocol fault, never a connection abort.
"""

from __future__ import annotations

import html
import json
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote

from . import codec, remote
from .codec import Fault, Response
from .errors import (
    ApplicationFault,
    ConfigError,
    NetworkFault,
    RRTError,
    ServiceNotFound,
)
from .model import Endpoint, GuidSource, MethodDescriptor, TransmissionDecision
from .policy import CallContext, CallRole, PeerKind, TransmissionPolicyManager
from .registry import ServiceRegistry, Skeleton, TypeRegistry, invoke_local

DEFAULT_PORT = 8000


@dataclass
class NodeConfig:
    port: int = 0  # 0 = pick a free port at bind time
    host: str = "127.0.0.1"
    fast_fail: bool = False
    concrete_type_always: bool = True
    policy_file: str | Path | None = None
    deploy_manifest: str | Path | None = None
    log_sink: str | Path | None = None  # "-" = stderr, path = append, None = memory only
    workers: int | None = None  # bounded handler pool; default = CPU count
    request_timeout: float = 10.0


@dataclass(frozen=True)
class FaultPolicyOutcome:
    """What the runtime does with a network fault: pass it on, or swallow it."""

    action: str  # "propagate" | "suppress"
    fault: NetworkFault | None = None
    default_value: object = None
    log_record: str | None = None


def default_return_value(return_type: str) -> object:
    """Suppression stand-in per declared return type: 0, false, or null."""
    if return_type == "i64":
        return 0
    if return_type == "f64":
        return 0.0
    if return_type == "bool":
        return False
    return None


def apply_failure_policy(
    method: MethodDescriptor, failure: NetworkFault, config: NodeConfig
) -> FaultPolicyOutcome:
    """Decide a network fault's fate for one method call.

    Methods that declare network faults always see them; otherwise fast-fail
    nodes propagate (marked), and everything else suppresses to a
    type-appropriate default plus one log record. Application faults never
    come through here — they always propagate.
    """
    if method.declares_network_fault:
        return FaultPolicyOutcome(action="propagate", fault=failure)
    if config.fast_fail:
        marked = NetworkFault(failure.message, fast_fail=True)
        return FaultPolicyOutcome(action="propagate", fault=marked)
    stamp = datetime.now(timezone.utc).isoformat()
    record = f"{stamp} WARN {method.ident} network {failure.message}"
    return FaultPolicyOutcome(
        action="suppress",
        default_value=default_return_value(method.return_type),
        log_record=record,
    )


class RRTNode:
    """One middleware runtime: registry, policy manager, proxy cache, transport."""

    def __init__(
        self,
        config: NodeConfig | None = None,
        *,
        types: TypeRegistry | None = None,
        policy: TransmissionPolicyManager | None = None,
        guid_source: GuidSource | None = None,
    ):
        self.config = config or NodeConfig()
        self.types = types or TypeRegistry()
        self.policy = policy or TransmissionPolicyManager(self.types.maybe_descriptor)
        self.services = ServiceRegistry(
            self.types,
            endpoint_provider=lambda: self.endpoint,
            guid_source=guid_source,
        )
        self.proxy_cache = remote.ProxyCache()
        self.fault_log: list[str] = []
        self.decision_observer = None
        self.invoke_requests = 0
        self.describe_requests = 0
        self._counter_lock = threading.Lock()
        self._httpd: _PooledHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self._bound_port: int | None = None

    # -- identity & lifecycle -------------------------------------------------

    @property
    def endpoint(self) -> Endpoint:
        port = self._bound_port if self._bound_port else self.config.port
        return Endpoint(self.config.host, port or DEFAULT_PORT)

    @property
    def running(self) -> bool:
        return self._httpd is not None

    def start(self) -> "RRTNode":
        """Bind the port, apply policy file and manifest, then accept traffic."""
        if self._httpd is not None:
            raise ConfigError("node already running")
        workers = self.config.workers or os.cpu_count() or 4
        self._httpd = _PooledHTTPServer(
            (self.config.host, self.config.port), _Handler, workers
        )
        self._httpd.node = self
        self._bound_port = self._httpd.server_address[1]
        try:
            self._apply_startup_files()
        except Exception:
            self._teardown_server()
            raise
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name=f"rrt-node-{self._bound_port}",
            daemon=True,
        )
        self._thread.start()
        return self

    def _apply_startup_files(self) -> None:
        if self.config.policy_file is not None:
            path = Path(self.config.policy_file)
            if not path.is_file():
                raise ConfigError(f"policy file not readable: {path}")
            self.policy.load_policy_file(path.read_text(encoding="utf-8"))
        if self.config.deploy_manifest is not None:
            path = Path(self.config.deploy_manifest)
            if not path.is_file():
                raise ConfigError(f"deploy manifest not readable: {path}")
            self._apply_manifest(path.read_text(encoding="utf-8"))

    def _apply_manifest(self, text: str) -> None:
        try:
            entries = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"deploy manifest is not valid JSON: {exc}") from exc
        if not isinstance(entries, list):
            raise ConfigError("deploy manifest must be a JSON array")
        for pos, entry in enumerate(entries):
            if not isinstance(entry, dict) or "type" not in entry:
                raise ConfigError(f"manifest entry {pos}: need an object with 'type'")
            rt = self.types.lookup(entry["type"])
            if rt is None or rt.factory is None:
                raise ConfigError(
                    f"manifest entry {pos}: type {entry['type']!r} not constructible"
                )
            args = entry.get("constructor_args", [])
            if not isinstance(args, list):
                raise ConfigError(f"manifest entry {pos}: constructor_args must be a list")
            try:
                obj = rt.factory(*args)
                self.deploy(obj, entry.get("interface"), entry.get("name"))
            except RRTError:
                raise
            except Exception as exc:
                raise ConfigError(f"manifest entry {pos}: {exc}") from exc

    def stop(self) -> None:
        if self._httpd is None:
            return
        self._httpd.shutdown()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        self._teardown_server()

    def _teardown_server(self) -> None:
        if self._httpd is not None:
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "RRTNode":
        if not self.running:
            self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- application surface ----------------------------------------------------

    def deploy(self, obj, interface=None, name: str | None = None):
        return self.services.deploy(obj, interface, name)

    def get_object_by_name(self, host: str, port: int, name: str):
        return remote.get_object_by_name(self, host, port, name)

    def observe_decision(
        self, role: str, type_name: str, decision: TransmissionDecision
    ) -> None:
        observer = self.decision_observer
        if observer is not None:
            observer(role, type_name, decision)

    def handle_network_fault(self, method: MethodDescriptor, failure: NetworkFault):
        outcome = apply_failure_policy(method, failure, self.config)
        if outcome.action == "propagate":
            raise outcome.fault
        self._log(outcome.log_record)
        return outcome.default_value

    def _log(self, record: str) -> None:
        self.fault_log.append(record)
        sink = self.config.log_sink
        if sink is None:
            return
        if str(sink) == "-":
            print(record, file=sys.stderr)
        else:
            with open(sink, "a", encoding="utf-8") as fh:
                fh.write(record + "\n")

    def _count(self, attr: str) -> None:
        with self._counter_lock:
            setattr(self, attr, getattr(self, attr) + 1)

    # -- endpoint bodies ---------------------------------------------------------

    def list_services(self) -> list[dict]:
        out = []
        for sk in self.services.list_skeletons():
            out.append(
                {
                    "name": sk.service_name,
                    "guid": sk.guid.hex,
                    "interface_name": sk.interface_descriptor.type_name,
                    "object_repr": self._object_repr(sk),
                }
            )
        return out

    def _object_repr(self, sk: Skeleton) -> str:
        custom = self.types.repr_of(sk.service_object)
        if custom is not None:
            return custom
        return f"{sk.concrete_type_name}@{sk.guid.hex[:8]}"

    def describe_service(self, name_or_guid: str) -> dict:
        skeleton = self.services.lookup(name_or_guid)
        return codec.rior_to_doc(remote.build_rior(self, skeleton))

    def browse_html(self) -> str:
        endpoint = self.endpoint
        rows = []
        for entry in self.list_services():
            describe = f"/describe/{entry['guid']}"
            rows.append(
                "<tr>"
                f"<td>{html.escape(entry['name'] or '')}</td>"
                f"<td><code>{entry['guid']}</code></td>"
                f"<td>{html.escape(entry['interface_name'])}</td>"
                f"<td>{html.escape(entry['object_repr'])}</td>"
                f'<td><a href="{describe}">description</a></td>'
                "</tr>"
            )
        body = "\n".join(rows) or '<tr><td colspan="5">no services deployed</td></tr>'
        return (
            "<!DOCTYPE html>\n"
            f"<html><head><title>Services at {html.escape(str(endpoint))}</title></head>\n"
            f"<body><h1>Deployed services at {html.escape(str(endpoint))}</h1>\n"
            "<table border=\"1\">\n"
            "<tr><th>Name</th><th>GUID</th><th>Interface</th>"
            "<th>Object</th><th>Description</th></tr>\n"
            f"{body}\n</table></body></html>\n"
        )

    def handle_invoke(self, service_id: str, body: bytes) -> Response:
        """Decode, dispatch, and encode one invocation; faults become envelopes."""
        self._count("invoke_requests")
        try:
            request = codec.decode_request(body)
            skeleton = self.services.lookup(service_id)
            decoder = codec.MessageDecoder(
                self.types, resolve_ref=lambda r: remote.resolve_incoming_rior(self, r)
            )
            args = [decoder.decode(w) for w in request.args]
            result = invoke_local(skeleton, request.method, args)
            md = skeleton.interface_descriptor.find_method(request.method, len(args))
            ctx = CallContext(
                role=CallRole.RETURN_VALUE,
                declared_type_name=skeleton.interface_descriptor.type_name,
                method_name=request.method,
                actual_type_name=remote.actual_type_name_of(self, result),
                peer_kind=PeerKind(request.peer_kind),
            )
            decision = self.policy.resolve(ctx)
            self.observe_decision("return", ctx.actual_type_name, decision)
            wire = codec.encode_value(
                result,
                decision,
                registry=self.types,
                deploy_ref=lambda obj, sig: remote.auto_deploy(self, obj, sig),
                declared_type=md.return_type,
            )
            return Response(ok=True, result=wire)
        except ApplicationFault as exc:
            return Response(
                ok=False, fault=Fault("application", exc.fault_class, exc.message)
            )
        except RRTError as exc:
            return Response(
                ok=False, fault=Fault("protocol", type(exc).__name__, str(exc))
            )
        except Exception as exc:  # noqa: BLE001 - the endpoint never aborts
            return Response(
                ok=False, fault=Fault("protocol", type(exc).__name__, str(exc))
            )


class _PooledHTTPServer(ThreadingHTTPServer):
    """HTTP server dispatching requests to a bounded worker pool."""

    daemon_threads = True
    node: RRTNode

    def __init__(self, addr, handler, workers: int):
        # The pool must exist before bind: a bind failure closes the server.
        self._pool = ThreadPoolExecutor(
            max_workers=workers, thread_name_prefix="rrt-worker"
        )
        super().__init__(addr, handler)

    def process_request(self, request, client_address):
        self._pool.submit(self._work, request, client_address)

    def _work(self, request, client_address):
        try:
            self.finish_request(request, client_address)
        except Exception:  # noqa: BLE001 - a broken client must not kill the pool
            pass
        finally:
            self.shutdown_request(request)

    def server_close(self):
        super().server_close()
        self._pool.shutdown(wait=True)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _PooledHTTPServer

    def log_message(self, format, *args):  # noqa: A002 - base-class signature
        pass

    def _send(self, status: int, payload: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _send_json(self, status: int, doc: object) -> None:
        self._send(status, codec.canonical_bytes(doc), "application/json")

    def do_GET(self):
        node = self.server.node
        path = unquote(self.path.split("?", 1)[0])
        if path in ("/", "/browse"):
            self._send(200, node.browse_html().encode("utf-8"), "text/html; charset=utf-8")
            return
        if path == "/services":
            self._send_json(200, node.list_services())
            return
        if path.startswith("/describe/"):
            self._describe(node, path[len("/describe/"):])
            return
        tail = path.lstrip("/")
        if tail and "/" not in tail:
            self._describe(node, tail)
            return
        self._send_json(404, {"error": f"no such endpoint: {path}"})

    def _describe(self, node: RRTNode, service_id: str) -> None:
        node._count("describe_requests")
        try:
            self._send_json(200, node.describe_service(service_id))
        except ServiceNotFound as exc:
            self._send_json(404, {"error": str(exc)})
        except RRTError as exc:
            self._send_json(500, {"error": str(exc)})

    def do_POST(self):
        node = self.server.node
        path = unquote(self.path.split("?", 1)[0])
        if not path.startswith("/invoke/"):
            self._send_json(404, {"error": f"no such endpoint: {path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
        except (ValueError, OSError):
            body = b""
        response = node.handle_invoke(path[len("/invoke/"):], body)
        self._send(200, codec.encode_response(response), "application/json")


def serve(
    config: NodeConfig | None = None,
    *,
    types: TypeRegistry | None = None,
    policy: TransmissionPolicyManager | None = None,
    guid_source: GuidSource | None = None,
) -> RRTNode:
    """Build a node from a configuration and start serving. Caller stops it."""
    node = RRTNode(config, types=types, policy=policy, guid_source=guid_source)
    node.start()
    return node
