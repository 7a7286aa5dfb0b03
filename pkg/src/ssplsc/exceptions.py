"""Exception hierarchy.

Every error carries a stable ``code`` string so the command-line tool can
emit machine-parsable diagnostics.
"""


class SSPLSCError(Exception):
    code = "ERROR"
    exit_status = 1


class EmptyRecording(SSPLSCError):
    code = "EMPTY_RECORDING"


class InvalidRecording(SSPLSCError):
    code = "INVALID_RECORDING"


class BinMismatch(SSPLSCError):
    code = "BIN_MISMATCH"


class ShapeMismatch(SSPLSCError):
    code = "SHAPE_MISMATCH"


class DegenerateChannel(SSPLSCError):
    code = "DEGENERATE_CHANNEL"


class AsymmetricConnectivity(SSPLSCError):
    code = "ASYMMETRIC_CONNECTIVITY"


class ZeroProjection(SSPLSCError):
    """The proximal step shrank a projection vector to zero."""

    code = "ZERO_PROJECTION"


class PhaseDegenerate(SSPLSCError):
    code = "PHASE_DEGENERATE"


class NonFinite(SSPLSCError):
    code = "NON_FINITE"


class SingularAutoSpectrum(SSPLSCError):
    code = "SINGULAR_AUTO_SPECTRUM"


class ZeroLatent(SSPLSCError):
    code = "ZERO_LATENT"


class ZeroPattern(SSPLSCError):
    code = "ZERO_PATTERN"


class DegenerateFold(SSPLSCError):
    code = "DEGENERATE_FOLD"


class PermutationFailure(SSPLSCError):
    code = "PERMUTATION_FAILURE"


class ConfigError(SSPLSCError):
    code = "CONFIG_ERROR"
    exit_status = 2


class DatasetError(SSPLSCError):
    code = "DATASET_ERROR"
    exit_status = 3
