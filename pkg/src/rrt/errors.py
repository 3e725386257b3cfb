"""Exception taxonomy shared by every runtime module."""

from __future__ import annotations


class RRTError(Exception):
    """Base class for all middleware errors."""


class RegistryIntegrityError(RRTError):
    """A type table references names that cannot be resolved consistently."""


class GuidCollisionError(RegistryIntegrityError):
    """A freshly generated GUID duplicated one already live in this registry."""


class TypeRegistrationError(RRTError):
    """Descriptor registration rejected: duplicate name, missing binding, bad shape."""


class UnregisteredTypeError(RRTError):
    """A live value's class has no registered type descriptor."""


class DeploymentError(RRTError):
    """deploy() rejected: non-compliant interface, name in use, or unknown type."""


class ServiceNotFound(RRTError):
    """No service is registered under the given name or GUID."""


class UnknownMethodError(RRTError):
    """The method is not exposed by the deployment interface."""


class InvocationError(RRTError):
    """Argument arity or shape does not match the declared method."""


class PolicyRuleError(RRTError):
    """A transmission-policy rule violates the rule-kind invariants."""


class PolicyFileError(RRTError):
    """A policy document does not match the policy-file schema."""


class WireFormatError(RRTError):
    """A value cannot be encoded for transmission."""


class ProtocolError(RRTError):
    """Incoming bytes violate the wire protocol."""


class ConfigError(RRTError):
    """Node configuration or startup input is unusable."""


class ApplicationFault(RRTError):
    """An exception raised by a service object, carried across the wire."""

    def __init__(self, fault_class: str, message: str):
        super().__init__(f"{fault_class}: {message}")
        self.fault_class = fault_class
        self.message = message


class NetworkFault(RRTError):
    """Transport-level failure while talking to a remote node."""

    def __init__(self, message: str, *, fast_fail: bool = False):
        super().__init__(message)
        self.message = message
        self.fast_fail = fast_fail
