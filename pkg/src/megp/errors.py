"""Exception types shared across the package."""


class MegpError(Exception):
    """Base class for all package errors."""


class ConfigError(MegpError):
    """Invalid configuration value; message names the offending field."""


class ContractError(MegpError):
    """A caller violated an operation precondition."""


class IngestionError(MegpError):
    """A dataset file could not be ingested; message carries line numbers."""
