"""Exception hierarchy shared across the toolkit.

Each class maps onto one CLI exit code so commands can translate failures
uniformly: ConfigError -> 2, OracleError -> 3, DataError -> 4.
"""


class CodemixError(Exception):
    pass


class ConfigError(CodemixError):
    pass


class DataError(CodemixError):
    pass


class TranslationError(DataError):
    pass


class OracleError(CodemixError):
    pass
