"""Coronary segmentation support toolkit."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CaseError,
    CorosegError,
    DegenerateSampleError,
    FormatError,
    GridMismatchError,
    InputError,
    RootCutError,
    ThinnessError,
    TruncationError,
    UnknownBoneError,
    UnsupportedDataTypeError,
    WatertightError,
)
from .volume import (  # noqa: F401
    Kind,
    ResampleMode,
    Volume,
    WindowSpec,
    read_volume,
    resample,
    window_to_gray,
    write_volume,
)
