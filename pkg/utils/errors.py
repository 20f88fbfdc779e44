"""Exception hierarchy shared by every simulator component"""


class SimulatorError(Exception):
    """Base class for all simulator errors"""


class DimensionError(SimulatorError):
    """Vectors or layouts with incompatible dimensions"""


class NonFiniteError(SimulatorError):
    """A vector contains NaN or Inf"""


class UndefinedDirectionError(SimulatorError):
    """An angle or cosine was requested for a zero-norm vector"""


class EmptyInputError(SimulatorError):
    """An operation received an empty vector, set or dataset"""


class InvalidParameterError(SimulatorError, ValueError):
    """A scalar parameter is outside its documented range"""


class LabelRangeError(SimulatorError):
    """A label lies outside [0, C)"""


class InfeasibleAggregationError(SimulatorError):
    """The aggregator cannot run with the given client / Byzantine counts"""


class MaskBudgetError(SimulatorError):
    """A mask budget cannot be met exactly (caps or clipping)"""


class UnknownSegmentError(SimulatorError, KeyError):
    """A layer segment name does not exist in the layout"""


class ConfigError(SimulatorError):
    """Experiment configuration could not be parsed or validated"""


class DatasetError(SimulatorError):
    """Dataset files could not be read"""


class BadMagicError(DatasetError):
    """IDX magic number does not match the expected file kind"""


class TruncatedFileError(DatasetError):
    """IDX payload is shorter than its header announces"""


class CountMismatchError(DatasetError):
    """Image and label files disagree on the sample count"""


class SimulationError(SimulatorError):
    """A failure inside the round loop, tagged with the round index"""

    def __init__(self, round_index, message):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index
