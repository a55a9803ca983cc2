"""Shared exception hierarchy.

Every error raised on bad data or bad usage derives from PhonerecError so
callers (and the CLI) can distinguish data problems from genuine bugs.
"""


class PhonerecError(Exception):
    """Base class for all phonerec data and usage errors."""
