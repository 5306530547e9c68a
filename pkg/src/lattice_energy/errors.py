"""Exception hierarchy.  Every domain failure derives from ``LatticeEnergyError``
so the CLI can map them to exit code 1."""


class LatticeEnergyError(Exception):
    pass


class InvalidForm(LatticeEnergyError):
    pass


class InvalidTransform(LatticeEnergyError):
    pass


class PerturbationTooLarge(LatticeEnergyError):
    pass


class EmptyShell(LatticeEnergyError):
    pass


class NotAntipodal(LatticeEnergyError):
    pass


class UnsupportedParity(LatticeEnergyError):
    pass


class DomainError(LatticeEnergyError):
    pass


class DivergentSum(LatticeEnergyError):
    pass


class CutoffOverflow(LatticeEnergyError):
    pass


class WindowTooSmall(LatticeEnergyError):
    pass


class NotALatticeError(LatticeEnergyError):
    pass


class DesignHypothesisFailed(LatticeEnergyError):
    pass


class PreconditionFailed(LatticeEnergyError):
    pass


class InternalInconsistency(LatticeEnergyError):
    pass


class LineSearchStalled(LatticeEnergyError):
    pass


class UnknownLattice(LatticeEnergyError):
    pass
