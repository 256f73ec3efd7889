"""Exception types raised across the package."""


class QbcError(Exception):
    """Base class for all simulator and protocol errors."""


class SizeError(QbcError, ValueError):
    """A register is empty, too large, or has the wrong dimension."""


class QubitIndexError(QbcError, IndexError):
    """A qubit index is out of range, duplicated, or otherwise invalid."""


class KeyExhaustedError(QbcError):
    """The key counter would pass its configured width."""


class IntegrityError(QbcError):
    """Announced data is inconsistent with every honest explanation."""


class ConfigError(QbcError, ValueError):
    """A session or run configuration is invalid."""
