"""Exception hierarchy; the CLI maps each class to an exit code."""


class FrameLensError(Exception):
    """Base class for all errors raised by framelens."""


class DataError(FrameLensError, ValueError):
    """Malformed or inconsistent input data (lexicon, corpus, checkpoint)."""


class NumericError(FrameLensError, ArithmeticError):
    """Degenerate numerics: zero-norm vectors, non-finite gradients."""
