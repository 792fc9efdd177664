"""Exception hierarchy shared by all qkdsent modules."""


class QkdSentError(Exception):
    """Base class for every error raised by this package."""


class LogParseError(QkdSentError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.reason = message


class OrderingError(QkdSentError):
    pass


class ConfigError(QkdSentError):
    pass


class DegenerateLinkError(QkdSentError):
    pass


class WindowSizeError(QkdSentError):
    pass


class TrainingError(QkdSentError):
    pass


class SplitError(QkdSentError):
    pass


class SchemaError(QkdSentError):
    pass
