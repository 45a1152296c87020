"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``ContractError`` and ``DomainError``
exit with 2, ``RegimeError`` with 3.
"""


class PacingError(Exception):
    """Base class for all errors raised by bidpacer."""


class ContractError(PacingError, ValueError):
    """A caller-side precondition does not hold (bad input, malformed data)."""


class DomainError(PacingError, ArithmeticError):
    """A numeric evaluation is undefined (singularity, overflow, division by zero)."""


class RegimeError(PacingError):
    """A quantity was requested outside the parameter regime where it exists."""


class ParseError(ContractError):
    """A cost expression does not match the grammar."""

    def __init__(self, message, text="", pos=0):
        self.text = text
        self.pos = pos
        if text:
            message = f"{message}\n  {text}\n  {' ' * pos}^"
        super().__init__(message)
