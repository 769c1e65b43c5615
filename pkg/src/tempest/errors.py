"""Exception hierarchy shared across the package."""


class TempestError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(TempestError, ValueError):
    pass


class TrainingDivergedError(TempestError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class DatasetError(TempestError):
    pass


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class HeaderMismatchError(DatasetError):
    pass


class AllRowsDroppedError(DatasetError):
    pass


class UnknownCategoryError(DatasetError):
    def __init__(self, feature, value):
        super().__init__(f"unknown category {value!r} for feature {feature!r}")
        self.feature = feature
        self.value = value


class MissingClassError(TempestError):
    def __init__(self, class_index):
        super().__init__(f"class {class_index} has no rows in the pool")
        self.class_index = class_index


class SchemaMismatchError(TempestError):
    pass


class UnavailableStatisticError(TempestError):
    def __init__(self, feature, statistic):
        super().__init__(f"statistic {statistic!r} unavailable for feature {feature!r}")
        self.feature = feature
        self.statistic = statistic


class EmptyPoolError(TempestError):
    def __init__(self, feature):
        super().__init__(f"categorical pool for feature {feature!r} is empty")
        self.feature = feature


class ClassShortfallError(TempestError):
    def __init__(self, class_index, needed, available):
        super().__init__(
            f"class {class_index} needs {needed} initial rows but only {available} exist"
        )
        self.class_index = class_index
        self.needed = needed
        self.available = available


class RejectedQueryError(TempestError):
    pass


class TransportError(TempestError):
    pass


class ServiceStartupError(TempestError):
    pass


class ReportParseError(TempestError):
    def __init__(self, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
