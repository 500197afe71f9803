"""Exception types shared across the package."""


class MdmError(Exception):
    """Base class for all package errors."""


class InvalidDataset(MdmError):
    pass


class InvalidGrouping(MdmError):
    pass


class CertificateInvalid(MdmError):
    pass


class DataNotRepresentable(MdmError):
    pass


class SolverFailure(MdmError):
    pass


class CycleLimitExceeded(SolverFailure):
    pass


class NodeLimitExceeded(SolverFailure):
    pass


class NotNested(MdmError):
    pass


class TooManyProducts(MdmError):
    pass


class CollectionTooLarge(MdmError):
    pass


class NonConvergence(MdmError):
    pass


class InfeasibleConfig(MdmError):
    pass


class OverflowRisk(MdmError):
    pass


class BisectionBracketFailure(MdmError):
    pass
