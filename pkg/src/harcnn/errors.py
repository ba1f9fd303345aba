"""Exception types shared across the toolkit.

Each exception carries the process exit code the CLI maps it to.
"""


class HARError(Exception):
    exit_code = 1


class DatasetError(HARError):
    exit_code = 2


class EmptyDataset(DatasetError):
    pass


class MalformedRecording(DatasetError):
    pass


class EmptyTrainingSet(DatasetError):
    pass


class UnknownClass(HARError, KeyError):
    exit_code = 5

    def __str__(self):
        return Exception.__str__(self)


class ShapeMismatch(HARError, ValueError):
    pass


class InvalidTarget(HARError, ValueError):
    pass


class InvalidCache(HARError):
    pass


class NumericalFailure(HARError, ArithmeticError):
    pass


class DivergenceError(NumericalFailure):
    exit_code = 3

    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class CorruptCheckpoint(HARError):
    exit_code = 4


class DegenerateInput(HARError, ValueError):
    pass
