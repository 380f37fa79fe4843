"""Exception types raised across the package.

Everything derives from FeatBankError so callers (and the CLI) can treat any
domain failure as a data error, distinct from usage errors and genuine bugs.
"""


class FeatBankError(Exception):
    """Base class for all featbank domain errors."""


class ConfigError(FeatBankError):
    """A StrategyConfig field violates its invariant."""


class ShapeError(FeatBankError):
    """Array dimensions do not match the declared grid or channel counts."""


class NonFiniteError(FeatBankError):
    """NaN or Inf encountered where finite values are required."""


class EmptyBankError(FeatBankError):
    """A read was requested against a bank with no live slots."""


class MissingObjectError(FeatBankError):
    """No slot (or no selected slot with nonzero weight) holds values for the object."""


class StaleSelectionError(FeatBankError):
    """A top-k selection no longer matches the bank it was computed from."""


class CapacityError(FeatBankError):
    """A slot-count constraint cannot be satisfied (bank too small, ceiling hit,
    or eviction would cut into pinned slots)."""


class ScenarioError(FeatBankError):
    """A synthetic scenario violates its invariants (overlap, bad ids, ...)."""


class ScenarioConfigError(ScenarioError):
    """A scenario config file failed to parse; message carries the line number."""


class TraceError(FeatBankError):
    """Base class for trace-file codec failures."""


class TraceMagicError(TraceError):
    """File does not start with the trace magic bytes."""


class TraceVersionError(TraceError):
    """Trace container version is not supported by this reader."""


class TraceTruncatedError(TraceError):
    """File length does not match the size implied by the header."""


class TraceDataError(TraceError):
    """Header or payload content is structurally valid but semantically bad."""
