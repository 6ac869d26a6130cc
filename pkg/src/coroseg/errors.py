"""Exception hierarchy shared across the toolkit."""


class CorosegError(Exception):
    """Base class for all toolkit errors."""


class FormatError(CorosegError):
    """A file does not conform to its declared format."""


class UnsupportedDataTypeError(FormatError):
    """A file uses a datatype the toolkit does not handle."""


class TruncationError(FormatError):
    """A file payload is shorter than its header promises."""


class InputError(CorosegError):
    """An argument violates an operation's precondition."""


class GridMismatchError(InputError):
    """Two volumes do not share dims/spacing/origin."""


class ThinnessError(InputError):
    """A volume expected to be a thin skeleton is not."""


class WatertightError(InputError):
    """A mesh operation requires a closed surface."""


class DegenerateSampleError(InputError):
    """A statistical sample carries no usable information."""


class DisconnectedGraphError(InputError):
    """A graph operation requires every node reachable from the root."""


class MissingRootError(InputError):
    """A graph operation requires a designated root node."""


class MissingWeightsError(InputError):
    """A mesh operation requires per-vertex bone weights."""


class UnknownBoneError(InputError):
    """A bone id does not exist in the armature."""


class RootCutError(InputError):
    """The armature root cannot be removed."""


class CaseError(CorosegError):
    """A case directory is missing required inputs."""
