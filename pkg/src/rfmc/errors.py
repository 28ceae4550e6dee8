"""Exception types raised across the package."""


class RfmcError(Exception):
    """Base class for all package errors."""


class DegenerateState(RfmcError):
    """A state has zero escape probability or no selectable neighbour."""


class SingularSystem(RfmcError):
    """A linear system from a chain oracle has no unique solution."""


class AsymmetricProposal(RfmcError):
    pass


class SupportMismatch(RfmcError):
    pass


class AllCandidatesZero(RfmcError):
    """Uniform Selection found no acceptable candidate after the resample cap."""


class ZeroDensity(RfmcError):
    pass


class EmptyTrace(RfmcError):
    pass


class DimensionMismatch(RfmcError):
    pass


class ZeroVariance(RfmcError):
    pass


class StateOverflow(RfmcError):
    """A simulated walk left the tabulated portion of a countable state space."""


class ConfigError(RfmcError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
