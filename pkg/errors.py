# errors.py
# Exception hierarchy. Every error knows which pipeline stage raised it so the
# CLI can print stage-tagged diagnostics and pick an exit code.


class MissionError(Exception):
    """Base class for every failure raised by the mission pipeline."""

    stage = "mission"

    def __init__(self, message, stage=None, details=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage
        self.details = details or {}

    def __str__(self):
        return f"[{self.stage}] {super().__str__()}"


class SpecError(MissionError, ValueError):
    stage = "stl"


class SpecSyntaxError(SpecError):
    """Parse failure with a 1-based line/column pointing at the bad token."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class GeometryError(MissionError, ValueError):
    stage = "geometry"


class DynamicsError(MissionError, ValueError):
    stage = "dynamics"


class InfeasibleError(MissionError):
    stage = "planner"


class SolverError(MissionError):
    stage = "solver"


class ScenarioError(MissionError, ValueError):
    stage = "scenario"

    def __init__(self, message, path=None):
        where = f" at '{path}'" if path else ""
        super().__init__(f"{message}{where}")
        self.path = path


class ValidationError(MissionError):
    """Raised when a solved plan fails its independent post-solve audit."""

    stage = "audit"
