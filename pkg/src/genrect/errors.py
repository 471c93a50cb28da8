"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so the command line
front end can report it on one line.
"""

from __future__ import annotations


class GenrectError(Exception):
    code = "ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ConfigurationError(GenrectError):
    """Input the library refuses to run, including exceeded size caps."""

    code = "CONFIG"


class DomainError(GenrectError):
    """An argument lies outside the domain of the operation."""

    code = "DOMAIN"
