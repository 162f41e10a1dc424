"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: config errors exit 2,
numerical errors exit 3, infeasible instances exit 4.
"""


class DmaboError(Exception):
    """Base class for all package errors."""


class InputError(DmaboError):
    """Caller passed inconsistent or out-of-contract arguments."""


class ConfigError(DmaboError):
    """Experiment configuration failed to parse or validate."""


class NumericalError(DmaboError):
    """Linear algebra failed after jitter escalation or similar."""


class ProtocolError(DmaboError):
    """Agent/coordinator message contract violated."""


class InfeasibleError(DmaboError):
    """Problem instance admits no feasible grid tuple."""
