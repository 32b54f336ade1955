"""Exception types shared across the package.

Every error that points at a location in an input file carries that
location (line number, element path, or character offset) so callers can
report actionable messages.
"""

from __future__ import annotations


class AcoufemError(Exception):
    """Base class for all errors raised by this package."""


class MeshParseError(AcoufemError):
    """Malformed mesh file; ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedElementError(MeshParseError):
    """Mesh contains an element type outside the supported subset."""


class MeshConsistencyError(AcoufemError):
    """Mesh references nodes or regions that do not exist."""


class RegionLookupError(AcoufemError):
    """A region name did not resolve; message lists the valid names."""

    def __init__(self, name: str, available: list[str]):
        self.name = name
        self.available = list(available)
        super().__init__(
            f"unknown region '{name}'; available regions: "
            + ", ".join(f"'{r}'" for r in self.available)
        )


class DegenerateElementError(AcoufemError):
    """Element with non-positive Jacobian determinant."""

    def __init__(self, element_id: int, det: float):
        self.element_id = element_id
        self.det = det
        super().__init__(
            f"element {element_id}: degenerate geometry (detJ = {det:g} <= 0)"
        )


class ConfigError(AcoufemError):
    """Invalid simulation configuration; ``path`` is the XML element path."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class MaterialError(ConfigError):
    """Invalid or missing material data."""


class ExpressionParseError(AcoufemError):
    """Syntax error in an analytic expression; ``offset`` is 0-based."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


class ExpressionDomainError(AcoufemError):
    """Expression evaluated outside its domain (division by zero, ...)."""


class SolverError(AcoufemError):
    """Linear solve failed; carries the final residual when known."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class EigenSolverError(SolverError):
    """Generalized eigenvalue iteration failed."""
