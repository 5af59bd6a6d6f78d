"""Exception hierarchy shared across the toolkit.

Two broad families map onto CLI exit codes: FormatError for malformed or
unsupported input files (exit 1), ContractError for operations invoked
outside their contract, degenerate datasets included (exit 2).
"""

from __future__ import annotations


class FlowidentError(Exception):
    """Base class for every error raised by this package."""


class FormatError(FlowidentError):
    """Input bytes or text do not parse as the expected format."""


class ContractError(FlowidentError):
    """An operation was called with arguments outside its contract."""


class DegenerateDatasetError(ContractError):
    """A dataset lacks the variety an operation needs (e.g. one class)."""
