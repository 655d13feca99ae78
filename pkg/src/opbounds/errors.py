"""Exception hierarchy with machine-readable categories.

Every error raised by the library carries a short ``category`` string that the
CLI surfaces verbatim, so callers can branch on failure kind without parsing
messages.
"""


class OpboundsError(Exception):
    category = "error"


class InputError(OpboundsError):
    category = "input"


class NumericError(OpboundsError):
    category = "numeric"


class NotPsdError(InputError):
    category = "not-psd"


class DegenerateInputError(InputError):
    category = "degenerate-input"


class NonInjectiveError(InputError):
    category = "non-injective"


class RefinementOrderError(InputError):
    category = "refinement-order"


class UnboundedLossError(InputError):
    category = "unbounded-loss"


class ConfigError(InputError):
    category = "config"
