"""Policy-overhead benchmark.

Measures a one-argument, one-return remote call where both the argument and
the return value travel by reference, first with policy resolution bypassed
by a fixed decision and then with a method rule plus a return rule installed.
This is the worst case for the policy phase: nothing is serialized, so the
rule evaluation cost is as visible as it ever gets.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from ..model import (
    FieldDescriptor,
    MethodDescriptor,
    PolicyKind,
    TypeDescriptor,
    UNBOUNDED,
    by_reference,
)
from ..registry import MethodTable, TypeRegistry
from .harness import LocalPair

DEFAULT_CALLS = 1600


@dataclass(frozen=True)
class BenchReport:
    calls: int
    mean_without_policy_ms: float
    mean_with_policy_ms: float
    overhead_ratio: float

    def __post_init__(self):
        if self.calls < 1:
            raise ValueError("benchmark needs at least one call")


class Payload:
    def __init__(self, n: int = 0):
        self.n = n


class EchoService:
    def echo(self, value):
        return value


PAYLOAD_TYPE = TypeDescriptor("Payload", fields=(FieldDescriptor("n", "i64"),))

ECHO_TYPE = TypeDescriptor(
    "Echo",
    methods=(MethodDescriptor("echo", ("Payload",), "Payload"),),
)


def register_bench_types(types: TypeRegistry) -> None:
    types.register_type(PAYLOAD_TYPE, py_type=Payload, factory=Payload)
    types.register_type(
        ECHO_TYPE, MethodTable.for_class(EchoService, ECHO_TYPE), py_type=EchoService
    )


def bench_policy_overhead(
    calls: int = DEFAULT_CALLS, pair: LocalPair | None = None, warmup: int = 32
) -> BenchReport:
    """Time the echo round-trip with and without the policy evaluation phase."""
    own_pair = pair is None
    if own_pair:
        pair = LocalPair(registrars=(register_bench_types,))
    try:
        server, client = pair.a, pair.b
        server.deploy(EchoService(), name="echo")
        handle = client.get_object_by_name(
            server.endpoint.host, server.endpoint.port, "echo"
        )
        payload = Payload(7)

        def run(n: int) -> float:
            start = time.perf_counter()
            for _ in range(n):
                handle.echo(payload)
            return (time.perf_counter() - start) / n * 1000.0

        fixed = by_reference()
        server.policy.fixed_decision = fixed
        client.policy.fixed_decision = fixed
        run(warmup)
        mean_without = run(calls)

        server.policy.fixed_decision = None
        client.policy.fixed_decision = None
        for manager in (server.policy, client.policy):
            manager.set_method_policy(
                "Echo", "echo", PolicyKind.BY_REFERENCE, UNBOUNDED, False
            )
            manager.set_return_value_policy(
                "Echo", "echo", PolicyKind.BY_REFERENCE, False
            )
        run(warmup)
        mean_with = run(calls)
    finally:
        if own_pair:
            pair.close()

    return BenchReport(
        calls=calls,
        mean_without_policy_ms=mean_without,
        mean_with_policy_ms=mean_with,
        overhead_ratio=(mean_with - mean_without) / mean_without,
    )
