"""Exception types shared across the pipeline.

Every error carries a short machine-readable ``code`` (for example
``"empty-window"`` or ``"bad-checksum"``) so callers can count and
classify failures without parsing messages.
"""


class HydroError(ValueError):
    def __init__(self, code, message=None):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class FrameError(HydroError):
    """Serial frame could not be encoded or decoded."""


class CacheWriteError(HydroError):
    """The local record cache refused a write. Treated as fatal."""


class ConfigError(HydroError):
    """Scenario or data file is invalid."""
