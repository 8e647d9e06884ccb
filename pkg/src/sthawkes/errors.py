"""Exception types shared across the package."""


class CatalogError(ValueError):
    """Malformed catalog input: unparseable rows, empty files, bad windows."""


class SimulationError(RuntimeError):
    """Simulation cannot proceed (e.g. no finite bound on the background)."""


class NumericalError(RuntimeError):
    """Numerical failure: non-positive intensity at an event, divergence."""
