"""Exception hierarchy shared by all calmapf modules."""


class CalMapfError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CalMapfError):
    """Invalid input detected before a simulation starts."""


class MalformedMap(ConfigError):
    pass


class UnreachableCell(ConfigError):
    pass


class InvalidCacheCount(ConfigError):
    pass


class IndivisibleAgents(ConfigError):
    pass


class InvalidParams(ConfigError):
    pass


class MalformedCsv(ConfigError):
    pass


class EmptyTable(ConfigError):
    pass


class EmptyQueue(ConfigError):
    pass


class LockNotHeld(CalMapfError):
    """An agent released a cache lock it never acquired (task assigner bug)."""


class NoStep(CalMapfError):
    pass


class RunError(CalMapfError):
    """A simulation started but could not finish."""


class LivelockSuspected(RunError):
    pass


class TimeoutExceeded(RunError):
    pass


class InvariantViolation(RunError):
    pass
