"""Diary-grounded lifestyle counselling pipeline with a three-perspective
evaluation workbench (user relevance, expert quality, developer reliability)."""

from .errors import WorkbenchError

__version__ = "0.1.0"

__all__ = ["WorkbenchError", "__version__"]
