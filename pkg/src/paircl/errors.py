"""Exception types shared across the package.

The CLI maps these onto exit codes: anything that is the caller's fault
(bad config, bad file, bad shapes) exits 1; failures at runtime (diverging
training, internal errors) exit 2.
"""


class PairclError(Exception):
    """Base class for all package errors."""


class ShapeError(PairclError):
    """Operands have incompatible shapes; message names both shapes."""


class DegenerateInputError(PairclError):
    """Input is structurally empty or degenerate (all-masked softmax, empty sequence, K < 2 batch)."""


class KinkPointError(PairclError):
    """Gradient check attempted at a non-differentiable point; resample the point."""


class VocabularyError(PairclError):
    """Token id outside the vocabulary."""


class ParameterError(PairclError):
    """Hyperparameter outside its valid range."""


class ConfigError(PairclError):
    """Configuration is inconsistent or infeasible."""


class DataFormatError(PairclError):
    """A data file could not be parsed; message carries the line number."""


class CheckpointError(PairclError):
    """Checkpoint is unreadable, has a wrong version, or mismatched tensor shapes."""


class TrainingDivergedError(PairclError):
    """Loss became NaN/Inf; carries a diagnostic dump of the offending batch."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump
