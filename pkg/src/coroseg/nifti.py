"""Minimal NIfTI-1 reader/writer.

Single-file .nii / .nii.gz only, 348-byte header, no extensions.
Supported payloads: uint8, int16, float32. The data block is stored
x-fastest (Fortran order over the first three dims), which is what the
format prescribes.
"""

from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncationError, UnsupportedDataTypeError

HEADER_SIZE = 348
VOX_OFFSET = 352.0

_HEADER_DTD = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]

HEADER_DTYPE = np.dtype(_HEADER_DTD)

# NIfTI datatype code -> numpy dtype, for the subset we support
DTYPE_FOR_CODE = {2: np.uint8, 4: np.int16, 16: np.float32}
CODE_FOR_DTYPE = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.float32): 16}
MAGIC_SINGLE = b"n+1"
MAGIC_PAIR = b"ni1"


def _open(path: str | Path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def read_header(raw: bytes) -> np.void:
    """Decode the 348-byte header, byte-swapping if needed."""
    if len(raw) < HEADER_SIZE:
        raise TruncationError(f"header is {len(raw)} bytes, expected {HEADER_SIZE}")
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE)[0]
    if hdr["sizeof_hdr"] != HEADER_SIZE:
        swapped = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder())[0]
        if swapped["sizeof_hdr"] != HEADER_SIZE:
            raise FormatError("sizeof_hdr is neither 348 nor its byte-swap")
        hdr = swapped
    magic = bytes(hdr["magic"]).rstrip(b"\x00")
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise FormatError(f"bad magic {magic!r}, expected 'n+1' or 'ni1'")
    return hdr


def read(path: str | Path) -> tuple[np.void, np.ndarray]:
    """Read a NIfTI-1 file; returns (header record, data in (nx,ny,nz) shape)."""
    with _open(path, "rb") as f:
        raw = f.read()
    hdr = read_header(raw)
    code = int(hdr["datatype"])
    if code not in DTYPE_FOR_CODE:
        raise UnsupportedDataTypeError(f"datatype code {code} not supported (uint8/int16/float32 only)")
    dtype = np.dtype(DTYPE_FOR_CODE[code])
    if HEADER_DTYPE != hdr.dtype:  # byte-swapped file
        dtype = dtype.newbyteorder()
    ndim = int(hdr["dim"][0])
    if not 1 <= ndim <= 7:
        raise FormatError(f"dim[0]={ndim} out of range")
    shape = tuple(int(d) for d in hdr["dim"][1 : 1 + ndim])
    if any(d <= 0 for d in shape):
        raise FormatError(f"non-positive dims {shape}")
    count = int(np.prod(shape))
    offset = int(hdr["vox_offset"])
    payload = raw[offset : offset + count * dtype.itemsize]
    if len(payload) < count * dtype.itemsize:
        raise TruncationError(
            f"payload holds {len(payload)} bytes, header promises {count * dtype.itemsize}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    # collapse trailing singleton dims beyond the first three
    while data.ndim > 3 and data.shape[-1] == 1:
        data = data[..., 0]
    if data.ndim > 3:
        raise UnsupportedDataTypeError("4D+ volumes not supported")
    while data.ndim < 3:
        data = data[..., np.newaxis]
    return hdr, np.asarray(data.astype(data.dtype.newbyteorder("="), copy=False), order="F")


def affine_from_header(hdr: np.void) -> np.ndarray:
    """4x4 voxel-to-mm affine; qform preferred, then sform, then pixdim diagonal."""
    if hdr["qform_code"] > 0:
        b, c, d = (float(hdr["quatern_b"]), float(hdr["quatern_c"]), float(hdr["quatern_d"]))
        w2 = 1.0 - (b * b + c * c + d * d)
        a = np.sqrt(w2) if w2 > 0 else 0.0
        R = _quat_to_mat(a, b, c, d)
        pix = np.abs(np.array(hdr["pixdim"][1:4], dtype=np.float64))
        qfac = float(hdr["pixdim"][0])
        if qfac not in (-1.0, 1.0):
            qfac = 1.0
        scale = np.array([pix[0], pix[1], pix[2] * qfac])
        aff = np.eye(4)
        aff[:3, :3] = R * scale[np.newaxis, :]
        aff[:3, 3] = [float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"])]
        return aff
    if hdr["sform_code"] > 0:
        aff = np.eye(4)
        aff[0, :] = hdr["srow_x"]
        aff[1, :] = hdr["srow_y"]
        aff[2, :] = hdr["srow_z"]
        return aff
    aff = np.eye(4)
    for i in range(3):
        aff[i, i] = float(hdr["pixdim"][1 + i]) or 1.0
    return aff


def _quat_to_mat(a: float, b: float, c: float, d: float) -> np.ndarray:
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )


def _mat_to_quat(R: np.ndarray) -> tuple[float, float, float, float]:
    # Shepperd's method; assumes R is a rotation (det +1)
    t = np.trace(R)
    if t > 0:
        a = 0.5 * np.sqrt(1.0 + t)
        b = (R[2, 1] - R[1, 2]) / (4 * a)
        c = (R[0, 2] - R[2, 0]) / (4 * a)
        d = (R[1, 0] - R[0, 1]) / (4 * a)
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            b = 0.5 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
            a = (R[2, 1] - R[1, 2]) / (4 * b)
            c = (R[0, 1] + R[1, 0]) / (4 * b)
            d = (R[0, 2] + R[2, 0]) / (4 * b)
        elif i == 1:
            c = 0.5 * np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
            a = (R[0, 2] - R[2, 0]) / (4 * c)
            b = (R[0, 1] + R[1, 0]) / (4 * c)
            d = (R[1, 2] + R[2, 1]) / (4 * c)
        else:
            d = 0.5 * np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
            a = (R[1, 0] - R[0, 1]) / (4 * d)
            b = (R[0, 2] + R[2, 0]) / (4 * d)
            c = (R[1, 2] + R[2, 1]) / (4 * d)
    if a < 0:
        a, b, c, d = -a, -b, -c, -d
    return float(a), float(b), float(c), float(d)


def build_header(
    dims: tuple[int, int, int],
    spacing: np.ndarray,
    origin: np.ndarray,
    direction: np.ndarray,
    dtype: np.dtype,
) -> np.ndarray:
    """Assemble a header record with matching qform and sform."""
    if dtype not in CODE_FOR_DTYPE:
        raise UnsupportedDataTypeError(f"cannot write dtype {dtype}")
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, dims[0], dims[1], dims[2], 1, 1, 1, 1]
    hdr["datatype"] = CODE_FOR_DTYPE[dtype]
    hdr["bitpix"] = dtype.itemsize * 8
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm

    R = np.array(direction, dtype=np.float64)
    qfac = 1.0
    if np.linalg.det(R) < 0:
        qfac = -1.0
        R = R.copy()
        R[:, 2] = -R[:, 2]
    a, b, c, d = _mat_to_quat(R)
    hdr["pixdim"] = [qfac, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0]
    hdr["qform_code"] = 1
    hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"] = b, c, d
    hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"] = origin[0], origin[1], origin[2]

    M = np.array(direction, dtype=np.float64) * np.asarray(spacing, dtype=np.float64)[np.newaxis, :]
    hdr["sform_code"] = 1
    hdr["srow_x"] = [M[0, 0], M[0, 1], M[0, 2], origin[0]]
    hdr["srow_y"] = [M[1, 0], M[1, 1], M[1, 2], origin[1]]
    hdr["srow_z"] = [M[2, 0], M[2, 1], M[2, 2], origin[2]]
    hdr["magic"] = MAGIC_SINGLE
    return hdr


def write(path: str | Path, hdr: np.ndarray, data: np.ndarray) -> None:
    """Write header + 4 pad bytes + x-fastest payload."""
    with _open(path, "wb") as f:
        f.write(hdr.tobytes())
        f.write(b"\x00" * 4)
        f.write(np.asfortranarray(data).tobytes(order="F"))
