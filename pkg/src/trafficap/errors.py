"""Exception types shared across the package."""


class TrafficapError(Exception):
    """Base class for all package errors."""


class MalformedPcap(TrafficapError):
    """Capture file has a bad magic number or a truncated global header."""


class InvalidConfig(TrafficapError):
    """A configuration value is out of range or an unknown key was given."""


class EmptyFlowInWindow(TrafficapError):
    """Flow has no packets inside the segment window being featurized."""


class ShapeMismatch(TrafficapError):
    """Tensor or array shape disagrees with the configured dimensions."""


class IndexOutOfRange(TrafficapError):
    """App-type or token index outside the valid range."""


class AllMasked(TrafficapError):
    """Attention was asked to run over a fully padded sequence."""


class EmptyGold(TrafficapError):
    """Teacher forcing requires a non-empty gold token sequence."""


class LabelOutOfRange(TrafficapError):
    """A class label does not index a row of the probability batch."""


class LengthMismatch(TrafficapError):
    """Per-step distributions and gold tokens disagree in length."""


class NonFiniteLoss(TrafficapError):
    """A loss component evaluated to NaN or Inf; the step must abort."""


class EmptyDataset(TrafficapError):
    """Training was started with no records."""


class InvalidSplit(TrafficapError):
    """Split fractions do not sum to 1 or are negative."""


class ProviderAuthError(TrafficapError):
    """The VLM provider credential is missing or rejected."""


class ProviderTimeout(TrafficapError):
    """The VLM provider did not answer within the configured timeout."""


class EmptyText(TrafficapError):
    """Sentence embedding requires non-empty text."""


class TooFewItems(TrafficapError):
    """CIDEr needs at least two corpus items to define IDF."""


class TooFewTypes(TrafficapError):
    """Separability needs samples from at least two app types."""


class InvalidProfile(TrafficapError):
    """A synthetic app profile has invalid distribution parameters."""
