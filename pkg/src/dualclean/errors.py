"""Exception hierarchy shared by every subsystem."""
from __future__ import annotations


class BenchError(Exception):
    """Base class for all dualclean errors."""


# world
class ParseError(BenchError):
    pass


class ValidationError(BenchError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class UnknownScene(BenchError):
    pass


class DegenerateScene(BenchError):
    pass


# sim
class TerminalState(BenchError):
    pass


class OutOfReach(BenchError):
    pass


class AlreadyCarrying(BenchError):
    pass


# procgen
class GenerationFailure(BenchError):
    pass


class InsufficientSpace(BenchError):
    pass


# metrics
class BadWeights(BenchError):
    pass


class EmptyLog(BenchError):
    pass


class TooShort(BenchError):
    pass


# agents
class NoNavigableSpace(BenchError):
    pass


# harness
class ConfigError(BenchError):
    pass


class SceneError(BenchError):
    pass
