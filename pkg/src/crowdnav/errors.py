"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (see crowdnav.cli).
"""


class CrowdNavError(Exception):
    """Base class for package errors."""


class ConfigError(CrowdNavError):
    """Invalid configuration value or malformed config file."""


class ScenarioGenerationError(CrowdNavError):
    """Rejection sampling could not place the agents (over-crowded config)."""


class ContractViolationError(CrowdNavError):
    """An operation was called outside its contract."""


class FormatError(CrowdNavError):
    """A weight, trajectory, or log file failed to parse; message carries
    the offending line number where applicable."""
