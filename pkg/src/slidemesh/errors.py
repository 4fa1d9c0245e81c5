"""Exception hierarchy.

Each error class carries the process exit code used by the command line
front end, so callers can map failures without string matching.
"""


class SlidemeshError(Exception):
    exit_code = 1


class ConfigurationError(SlidemeshError, ValueError):
    exit_code = 2


class SolverDivergenceError(SlidemeshError, RuntimeError):
    exit_code = 3

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class LinearSolveError(SolverDivergenceError):
    def __init__(self, message, pivot_info=None):
        super().__init__(message)
        self.pivot_info = pivot_info or {}


class GeometryError(SlidemeshError, ValueError):
    exit_code = 4


class MaterialRangeError(SlidemeshError, ValueError):
    exit_code = 2


class AssemblyError(SlidemeshError, RuntimeError):
    exit_code = 3


class OutputError(SlidemeshError, OSError):
    exit_code = 5
