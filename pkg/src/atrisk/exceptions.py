"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AtRiskError(Exception):
    exit_code = 1


class ConfigError(AtRiskError, ValueError):
    exit_code = 2


class DataError(AtRiskError, ValueError):
    exit_code = 3


class PrivacyError(AtRiskError):
    exit_code = 4


class AtRiskWarning(UserWarning):
    """Recoverable data condition (empty roster, unseen category, zero variance...)."""
