"""Shared error type.

Every domain failure raised by the library carries the originating module
name and a short stable code, so callers (and the CLI) can match on the
pair without parsing messages.
"""

from __future__ import annotations


class CamforgeError(Exception):
    """Domain error identified by a stable ``(module, code)`` pair."""

    def __init__(self, module: str, code: str, message: str):
        self.module = module
        self.code = code
        super().__init__(message)

    def __str__(self) -> str:
        return f"[{self.module}/{self.code}] {super().__str__()}"
