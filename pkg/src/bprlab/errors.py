"""Exception hierarchy shared across the package."""


class BPRLabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BPRLabError, ValueError):
    exit_code = 2


class DataError(BPRLabError):
    exit_code = 3


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class EmptyDataset(DataError):
    pass


class SplitError(DataError):
    pass


class AlignmentError(DataError):
    pass


class NoNegativeAvailable(DataError):
    pass


class SearchError(BPRLabError):
    exit_code = 2


class NumericsError(BPRLabError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, row=None, step=None, table=None):
        self.row = row
        self.step = step
        self.table = table
        super().__init__(message)
