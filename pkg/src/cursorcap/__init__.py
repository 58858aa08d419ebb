"""Cursor-prompted narration of GUI action videos."""

__version__ = "0.1.0"
