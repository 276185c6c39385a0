"""Exception hierarchy shared across the package."""


class FstForgeError(Exception):
    pass


class UnknownSymbol(FstForgeError, KeyError):
    def __init__(self, symbol):
        super().__init__(symbol)
        self.symbol = symbol

    def __str__(self):
        return f"unknown symbol {self.symbol!r}"


class NoTransition(FstForgeError):
    def __init__(self, state, symbol):
        super().__init__(state, symbol)
        self.state = state
        self.symbol = symbol

    def __str__(self):
        return f"no transition from state {self.state} on {self.symbol!r}"


class ParseError(FstForgeError, ValueError):
    pass


class FormatError(FstForgeError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = self.args[0]
        return f"line {self.line}: {msg}" if self.line is not None else msg


class ConflictError(FstForgeError, ValueError):
    """Training pairs do not describe a function (same input, two outputs)."""


class ConfigError(FstForgeError, ValueError):
    pass


class InvalidK(FstForgeError, ValueError):
    pass


class SplitFailure(FstForgeError):
    """Conflicting activations could not be separated by the classifier."""
