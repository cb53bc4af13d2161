"""Shared error base so the CLI and HTTP layers can map domain failures uniformly."""


class WorkbenchError(Exception):
    """Base class for expected, user-facing failures."""
