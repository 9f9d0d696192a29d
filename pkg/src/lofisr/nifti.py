"""Minimal NIfTI-1 reader and writer (.nii and .nii.gz).

Covers the subset this pipeline needs: single-file images, uint8 / int16 /
int32 / float32 data, sform orientation, scl_slope / scl_inter intensity
scaling.  The sform is required; qform-only files are rejected rather than
guessing at quaternion conventions.  Written files are byte-deterministic
(gzip mtime pinned to 0), with float32 data for intensity volumes and int32
for label volumes.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .volumes import LabelVolume, Volume

__all__ = ["read_nifti", "write_nifti"]

HEADER_SIZE = 348
VOX_OFFSET = 352

_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32}
_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4,
          np.dtype(np.int32): 8, np.dtype(np.float32): 16}
_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_nifti(path, as_labels: bool = False):
    """Read a NIfTI-1 file into a Volume (default) or LabelVolume.

    Intensity data is scaled by scl_slope / scl_inter when the header
    carries them.  Label volumes must use an integer datatype and no
    intensity scaling; their label table is synthesized from the values
    present in the file.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such file: {path}")
    raw = _read_bytes(path)
    if len(raw) < HEADER_SIZE:
        raise OSError(f"truncated file (header incomplete): {path}")

    for bo in ("<", ">"):
        if struct.unpack_from(bo + "i", raw, 0)[0] == HEADER_SIZE:
            break
    else:
        raise FormatError(f"not a NIfTI-1 file (bad sizeof_hdr): {path}")

    magic = raw[344:348]
    if magic not in (_MAGIC_SINGLE, _MAGIC_PAIR):
        raise FormatError(f"unrecognized magic bytes {magic!r} in {path}")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    ndim = dim[0]
    if ndim < 3 or any(d > 1 for d in dim[4:4 + max(0, ndim - 3)]):
        raise FormatError(f"only 3D images are supported, got dim={dim[:ndim + 1]}")
    dims = tuple(int(d) for d in dim[1:4])

    datatype = struct.unpack_from(bo + "h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise FormatError(f"unsupported datatype code {datatype} in {path}")
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(bo)

    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    spacing = tuple(abs(float(p)) for p in pixdim[1:4])

    vox_offset = int(struct.unpack_from(bo + "f", raw, 108)[0])
    scl_slope, scl_inter = struct.unpack_from(bo + "2f", raw, 112)

    sform_code = struct.unpack_from(bo + "h", raw, 254)[0]
    if sform_code <= 0:
        raise FormatError(f"sform is required (sform_code={sform_code}); "
                          f"qform-only files are not supported: {path}")
    srow = struct.unpack_from(bo + "12f", raw, 280)
    affine = np.eye(4, dtype=np.float64)
    affine[0, :] = srow[0:4]
    affine[1, :] = srow[4:8]
    affine[2, :] = srow[8:12]

    if magic == _MAGIC_PAIR:
        img = path.with_suffix(".img")
        if not img.exists():
            raise FormatError(f"header/image pair: missing data file {img}")
        raw = _read_bytes(img)
        vox_offset = 0
    nbytes = int(np.prod(dims)) * dtype.itemsize
    if len(raw) < vox_offset + nbytes:
        raise OSError(f"truncated file (expected {vox_offset + nbytes} bytes): {path}")
    data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)), offset=vox_offset)
    data = data.reshape(dims, order="F")

    scaled = scl_slope != 0.0 and (scl_slope, scl_inter) != (1.0, 0.0)
    if as_labels:
        if not np.issubdtype(dtype.base, np.integer):
            raise FormatError(f"label volume requires an integer datatype, got code {datatype}")
        if scaled:
            raise FormatError("label volume must not carry intensity scaling")
        table = {int(v): ("background" if v == 0 else f"label_{int(v)}")
                 for v in np.unique(data)}
        return LabelVolume(data.astype(np.int32), spacing, affine, table)

    values = data.astype(np.float64)
    if scaled:
        values = values * float(scl_slope) + float(scl_inter)
    return Volume(values, spacing, affine)


def _pack_header(dims, spacing, affine, datatype_code: int) -> bytearray:
    hdr = bytearray(VOX_OFFSET)  # header + 4-byte extension flag, all zero
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype_code)
    struct.pack_into("<h", hdr, 72, np.dtype(_DTYPES[datatype_code]).itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    struct.pack_into("<80s", hdr, 148, b"lofisr")
    struct.pack_into("<2h", hdr, 252, 0, 2)  # qform off, sform "aligned"
    struct.pack_into("<4f", hdr, 280, *np.asarray(affine[0], dtype=np.float32))
    struct.pack_into("<4f", hdr, 296, *np.asarray(affine[1], dtype=np.float32))
    struct.pack_into("<4f", hdr, 312, *np.asarray(affine[2], dtype=np.float32))
    struct.pack_into("<4s", hdr, 344, _MAGIC_SINGLE)
    return hdr


def write_nifti(v: Volume | LabelVolume, path) -> None:
    """Write a volume as NIfTI-1: float32 for Volume, int32 for LabelVolume.

    Output bytes are identical across runs for identical input; ``.gz``
    paths are gzip-compressed with a pinned timestamp.
    """
    path = Path(path)
    if isinstance(v, LabelVolume):
        data = v.data.astype("<i4")
        code = _CODES[np.dtype(np.int32)]
    else:
        data = v.data.astype("<f4")
        code = _CODES[np.dtype(np.float32)]
    buf = bytes(_pack_header(v.dims, v.spacing, v.affine, code)) + data.tobytes(order="F")
    if path.name.endswith(".gz"):
        buf = gzip.compress(buf, compresslevel=6, mtime=0)
    path.write_bytes(buf)
