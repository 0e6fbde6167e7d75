# Geometry exceptions
class PresetError(Exception):
    """
    Error: unknown domain preset.
    """
    pass


class ResolutionError(Exception):
    """
    The grid is too coarse to represent the observation region strictly inside the domain.
    """
    pass


class GeometryError(Exception):
    """
    A domain invariant failed on the grid.
    """
    def __init__(self, message, cells=None):
        super().__init__(message)
        self.cells = [] if cells is None else list(cells)


class WeightProfileError(GeometryError):
    """
    The weight profile violates positivity, boundary or gradient conditions. The violating cells are in `cells`.
    """
    pass


class GridError(Exception):
    """
    Too few nodes for the stencils, or fields living on different grids.
    """
    pass


# Constant exceptions
class ParameterError(Exception):
    """
    Inconsistent stability parameters.
    """
    pass


# Forward problem exceptions
class SourceError(Exception):
    """
    Malformed source family parameters.
    """
    pass


class DataTierError(Exception):
    """
    The requested data tier needs derivatives that are not available.
    """
    pass


class SolverError(Exception):
    """
    A linear solve failed and the result would be meaningless.
    """
    pass


# Carleman exceptions
class DiscretizationError(Exception):
    """
    The right hand side of an estimate vanishes while the left hand side does not.
    """
    pass


class SupportError(Exception):
    """
    A field that must vanish near the boundary does not.
    """
    pass


# Experiment exceptions
class ConfigError(Exception):
    """
    The experiment configuration is invalid. The offending keys are in `keys`.
    """
    def __init__(self, message, keys=None):
        super().__init__(message)
        self.keys = [] if keys is None else list(keys)
