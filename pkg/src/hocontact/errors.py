"""Exception hierarchy.

The CLI maps these onto exit codes: input/format problems exit 2, violated
geometric preconditions exit 3, optimisation divergence exits 4.
"""


class HocontactError(Exception):
    pass


class InputError(HocontactError, ValueError):
    """Unreadable or malformed input (files, annotations, manifests)."""


class ObjFormatError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class GeometryError(HocontactError, ValueError):
    """A geometric precondition does not hold."""


class NotWatertightError(GeometryError):
    def __init__(self, message="mesh is not watertight", diagnostics=None):
        self.diagnostics = diagnostics or {}
        if diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in sorted(diagnostics.items()))
            message = f"{message} ({details})"
        super().__init__(message)


class DegenerateMeshError(GeometryError):
    pass


class RayCastError(GeometryError):
    """Every retry direction grazed an edge or vertex."""


class SimulationUnstableError(HocontactError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        if diagnostics:
            message = f"{message} ({', '.join(f'{k}={v:.6g}' for k, v in sorted(diagnostics.items()))})"
        super().__init__(message)


class DivergenceError(HocontactError, RuntimeError):
    """Refinement aborted; ``trace`` holds the iterations completed so far."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)
