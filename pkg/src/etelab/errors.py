"""Exception types shared across the package."""


class EteLabError(Exception):
    """Base class for all package errors."""


class ConfigError(EteLabError, ValueError):
    """Invalid configuration: bad geometry, unknown keys, out-of-range parameters."""


class ContractViolation(EteLabError, RuntimeError):
    """A caller broke an API precondition (e.g. queried an unmasked position)."""


class OracleError(EteLabError, RuntimeError):
    """An oracle failed to answer a query."""


class OracleTransportError(OracleError):
    """Remote oracle transport failure. Safe to retry."""


class UnsupportedCapability(OracleError):
    """The oracle does not support the requested operation (e.g. exact joints)."""


class ZeroProbabilityEvidence(OracleError):
    """Conditioning evidence has zero probability; the conditional is undefined."""
