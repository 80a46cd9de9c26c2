"""Exception hierarchy. The CLI maps ConfigError to exit code 2 and DataError to 3."""


class MimoPoisonError(Exception):
    pass


class ConfigError(MimoPoisonError, ValueError):
    pass


class DataError(MimoPoisonError, ValueError):
    pass


class DomainError(MimoPoisonError, ValueError):
    """Argument outside the mathematical domain of a function."""


class EmptyDatasetError(DataError):
    pass


class CsvParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NoCandidateError(DataError):
    """Distance attack found no donor record clearing the target gap."""


class SingleClassError(DataError):
    pass


class EmptySecuredError(DataError):
    """Detector flagged every record of the contaminated set."""
