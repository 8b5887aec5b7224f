"""Common exception types.

Every error raised by the toolkit derives from ToolkitError so the CLI can
map any data-level failure to a single exit code.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by burntrace modules."""


class Truncated(ToolkitError):
    """Input ended before a complete structure could be read."""


class NonMinimal(ToolkitError):
    """A CompactSize integer (or SegWit marker) used a non-canonical encoding."""


class TrailingBytes(ToolkitError):
    """Extra bytes remained after a structure that must consume its input exactly."""


class BadMagic(ToolkitError):
    """Block-file record did not start with the expected network magic."""


class LengthMismatch(ToolkitError):
    """Framed payload length disagrees with the parsed block size."""


class MalformedPush(ToolkitError):
    """A data push inside a script ran past the end of the script."""


class BadChecksum(ToolkitError):
    """Address checksum verification failed."""


class BadAlphabet(ToolkitError):
    """Address contains characters outside its encoding alphabet."""


class UnknownTx(ToolkitError):
    """Transaction id is not present in the ledger index."""


class BadLabel(ToolkitError):
    """Label name outside the closed entity set, or malformed label row."""


class BadAddress(ToolkitError):
    """Address failed base58check/bech32 validation."""


class DateNotCovered(ToolkitError):
    """Price table has no entry for the requested date."""


class InfeasibleScenario(ToolkitError):
    """Synthetic scenario parameters cannot be realized in whole satoshis."""


class BadConfig(ToolkitError):
    """Malformed scenario, registry, or price configuration."""
