"""Shared exception types."""


class SplitchainError(Exception):
    pass


class DomainError(SplitchainError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class LeafFull(SplitchainError):
    """A new key would push a Merkle leaf past its collision threshold.

    The transaction originator must pick a different key.
    """


class InfeasibleConfig(SplitchainError):
    """Population/corruption parameters cannot guarantee consensus (gap < 1)."""


class ConfigError(SplitchainError):
    """Scenario configuration failed to parse or validate."""


class MissingPool(SplitchainError):
    """A pool committed in the consensus output is unavailable at build time."""


class StalledRound(SplitchainError):
    """No (block hash, state root) pair reached the commit threshold."""


class SimulationInvariantError(SplitchainError):
    """A safety/liveness assertion failed inside a simulation run."""
