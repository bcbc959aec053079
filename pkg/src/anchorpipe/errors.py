from __future__ import annotations

# exit codes: 1 usage/config, 2 data/format, 3 runtime


class AnchorError(Exception):
    code = "E900"
    exit_code = 3

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code:
            self.code = code

    def one_line(self) -> str:
        msg = " ".join(str(self).split())
        return f"error code={self.code} kind={type(self).__name__} msg={msg}"


class UsageError(AnchorError):
    code = "E001"
    exit_code = 1


class ConfigError(UsageError):
    code = "E100"


class DataError(AnchorError):
    code = "E400"
    exit_code = 2


class FormatError(DataError):
    code = "E410"


class RangeError(DataError, ValueError):
    code = "E420"


class ShapeError(DataError, ValueError):
    code = "E430"


class EmptyInputError(DataError, ValueError):
    code = "E440"


class InvalidInputError(DataError, ValueError):
    code = "E450"


class LengthError(DataError, ValueError):
    code = "E460"


class ContractError(DataError, ValueError):
    """Raised when a value violates a precondition (e.g. raw AU+PS where normalized is required)."""
    code = "E470"


class EvaluationError(AnchorError):
    code = "E500"


class RuntimeFailure(AnchorError):
    code = "E900"
