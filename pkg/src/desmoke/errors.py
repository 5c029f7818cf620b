"""Error taxonomy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to, so failures
surface with a stable category instead of a bare traceback.
"""


class DesmokeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(DesmokeError):
    """Invalid or inconsistent configuration values."""

    exit_code = 2


class DataError(DesmokeError):
    """Malformed dataset layout or mismatched clip contents."""

    exit_code = 3


class CheckpointError(DesmokeError):
    """Checkpoint missing, corrupt, or incompatible with the config."""

    exit_code = 4
