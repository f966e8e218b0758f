"""NIfTI-1 reading and writing.

Volumes are held as 3D numpy arrays indexed ``[i, j, k]`` (on disk the x
index varies fastest, i.e. Fortran order).  Image intensities are stored as
float32 after applying the header scaling; labels as int32.
"""

from __future__ import annotations

import gzip
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagic, NonFiniteVoxels, NiftiError, TruncatedData,
                     UnsupportedDatatype, UnsupportedFormat)

log = logging.getLogger(__name__)

HEADER_SIZE = 348
NIFTI2_HEADER_SIZE = 540
SINGLE_FILE_OFFSET = 352

_HEADER_FIELDS = [
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
HEADER_DTYPE = np.dtype(_HEADER_FIELDS)
assert HEADER_DTYPE.itemsize == HEADER_SIZE

# datatype code -> (numpy type, bitpix)
DATATYPES = {
    2: (np.uint8, 8),
    4: (np.int16, 16),
    8: (np.int32, 32),
    16: (np.float32, 32),
    64: (np.float64, 64),
}
_CODE_OF = {np.dtype(t): code for code, (t, _) in DATATYPES.items()}

MAGIC_SINGLE = b"n+1"
MAGIC_PAIR = b"ni1"


@dataclass(frozen=True)
class NiftiHeader:
    """Decoded header fields that matter for reading voxels and geometry."""

    dim: tuple
    datatype: int
    bitpix: int
    pixdim: tuple
    vox_offset: float
    scl_slope: float
    scl_inter: float
    qform_code: int
    sform_code: int
    quatern: tuple
    qoffset: tuple
    srow: np.ndarray
    magic: bytes
    endian: str

    @property
    def shape(self):
        ndim = self.dim[0]
        return tuple(int(d) for d in self.dim[1:ndim + 1])

    def affine(self):
        """Voxel-to-world matrix: sform, then qform, then plain pixdim."""
        if self.sform_code > 0:
            aff = np.eye(4)
            aff[:3, :] = self.srow
            return aff
        if self.qform_code > 0:
            return _quaternion_affine(self.quatern, self.qoffset, self.pixdim)
        return np.diag([self.pixdim[1], self.pixdim[2], self.pixdim[3], 1.0])


def _quaternion_affine(quatern, qoffset, pixdim):
    b, c, d = (float(q) for q in quatern)
    a = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a) if a > 1e-7 else 0.0
    if a == 0.0:
        # renormalise so the rotation stays proper
        norm = np.sqrt(b * b + c * c + d * d)
        b, c, d = b / norm, c / norm, d / norm
    rot = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    qfac = -1.0 if pixdim[0] < 0 else 1.0
    zooms = np.array([pixdim[1], pixdim[2], pixdim[3] * qfac], dtype=float)
    aff = np.eye(4)
    aff[:3, :3] = rot * zooms
    aff[:3, 3] = qoffset
    return aff


@dataclass(frozen=True, eq=False)
class VolumeImage:
    """Scalar image on a voxel grid.

    ``field_mask`` is set by resampling: True where the sample point fell
    inside the source field of view.  ``qc`` collects warnings raised while
    producing the volume.
    """

    data: np.ndarray
    affine: np.ndarray
    spacing: tuple = None
    qc: tuple = ()
    field_mask: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {data.shape}")
        _freeze(self, data)

    @property
    def dims(self):
        return tuple(self.data.shape)


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Integer label map sharing the geometry conventions of VolumeImage."""

    data: np.ndarray
    affine: np.ndarray
    spacing: tuple = None
    qc: tuple = ()

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.ndim != 3:
            raise ValueError(f"label volume must be 3D, got shape {raw.shape}")
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise ValueError("label volume holds non-integer values")
        data = raw.astype(np.int32)
        if data.size and data.min() < 0:
            raise ValueError("label volume holds negative labels")
        _freeze(self, data)

    @property
    def dims(self):
        return tuple(self.data.shape)


def _freeze(obj, data):
    data = np.array(data, copy=True)
    data.setflags(write=False)
    affine = np.array(obj.affine, dtype=np.float64, copy=True).reshape(4, 4)
    if abs(np.linalg.det(affine)) < 1e-12:
        raise ValueError("affine is singular")
    affine.setflags(write=False)
    spacing = obj.spacing
    if spacing is None:
        spacing = tuple(float(s) for s in np.linalg.norm(affine[:3, :3], axis=0))
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or min(spacing) <= 0:
        raise ValueError(f"bad voxel spacing {spacing}")
    object.__setattr__(obj, "data", data)
    object.__setattr__(obj, "affine", affine)
    object.__setattr__(obj, "spacing", spacing)
    object.__setattr__(obj, "qc", tuple(obj.qc))
    mask = getattr(obj, "field_mask", None)
    if mask is not None:
        mask = np.array(mask, dtype=bool, copy=True)
        if mask.shape != data.shape:
            raise ValueError("field mask shape differs from data")
        mask.setflags(write=False)
        object.__setattr__(obj, "field_mask", mask)


def same_geometry(a, b, atol=1e-6):
    return a.dims == b.dims and np.allclose(a.affine, b.affine, rtol=0, atol=atol)


# -- reading -----------------------------------------------------------------

def _maybe_gunzip(raw):
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def parse_header(raw):
    """Decode the 348-byte header, detecting byte order from sizeof_hdr."""
    if len(raw) < HEADER_SIZE:
        raise TruncatedData(f"header needs {HEADER_SIZE} bytes, got {len(raw)}")
    endian = None
    for candidate in ("<", ">"):
        size = int(np.frombuffer(raw[:4], dtype=candidate + "i4")[0])
        if size == HEADER_SIZE:
            endian = candidate
            break
        if size == NIFTI2_HEADER_SIZE:
            raise UnsupportedFormat("NIfTI-2 files are not supported")
    if endian is None:
        raise BadMagic("sizeof_hdr is not 348 in either byte order")
    rec = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder(endian))[0]
    magic = bytes(rec["magic"])[:3]
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise BadMagic(f"unrecognised magic {bytes(rec['magic'])!r}")

    dim = tuple(int(d) for d in rec["dim"])
    if not 1 <= dim[0] <= 7:
        raise UnsupportedFormat(f"dim[0]={dim[0]} outside 1..7")
    code = int(rec["datatype"])
    if code not in DATATYPES:
        raise UnsupportedDatatype(f"datatype code {code}")
    bitpix = int(rec["bitpix"])
    if bitpix != DATATYPES[code][1]:
        raise NiftiError(f"bitpix {bitpix} inconsistent with datatype {code}")

    return NiftiHeader(
        dim=dim,
        datatype=code,
        bitpix=bitpix,
        pixdim=tuple(float(p) for p in rec["pixdim"]),
        vox_offset=float(rec["vox_offset"]),
        scl_slope=float(rec["scl_slope"]),
        scl_inter=float(rec["scl_inter"]),
        qform_code=int(rec["qform_code"]),
        sform_code=int(rec["sform_code"]),
        quatern=(float(rec["quatern_b"]), float(rec["quatern_c"]), float(rec["quatern_d"])),
        qoffset=(float(rec["qoffset_x"]), float(rec["qoffset_y"]), float(rec["qoffset_z"])),
        srow=np.array([rec["srow_x"], rec["srow_y"], rec["srow_z"]], dtype=np.float64),
        magic=magic,
        endian=endian,
    )


def _spatial_shape(hdr):
    shape = hdr.shape
    if any(d < 1 for d in shape):
        raise UnsupportedFormat(f"non-positive dimension in {shape}")
    if any(d != 1 for d in shape[3:]):
        raise UnsupportedFormat(f"only 3D volumes are supported, got {shape}")
    return (tuple(shape[:3]) + (1, 1, 1))[:3]


def raw_voxels(hdr, payload):
    """Unscaled voxel array from the data section (``payload`` starts at
    byte 0 of the data, i.e. after vox_offset)."""
    shape = _spatial_shape(hdr)
    npy, bitpix = DATATYPES[hdr.datatype]
    count = shape[0] * shape[1] * shape[2]
    need = count * bitpix // 8
    if len(payload) < need:
        raise TruncatedData(f"data section holds {len(payload)} bytes, need {need}")
    dtype = np.dtype(npy).newbyteorder(hdr.endian)
    flat = np.frombuffer(payload[:need], dtype=dtype, count=count)
    return flat.astype(dtype.newbyteorder("="), copy=False).reshape(shape, order="F")


def _scaling_active(hdr):
    return hdr.scl_slope != 0 and np.isfinite(hdr.scl_slope)


def parse_nifti(raw, kind="auto", strict=False, img=None):
    """Parse a NIfTI-1 byte stream into a VolumeImage or LabelVolume.

    ``raw`` may be gzip-compressed.  ``kind`` is ``"image"``, ``"labels"``
    or ``"auto"``; auto yields a LabelVolume for unscaled integer data.  For
    a ``ni1`` header/image pair, pass the image bytes as ``img``.

    Non-finite voxels raise NonFiniteVoxels when ``strict``; otherwise they
    are replaced with 0 and a QC warning is attached.
    """
    raw = _maybe_gunzip(bytes(raw))
    hdr = parse_header(raw)
    if hdr.magic == MAGIC_SINGLE:
        offset = int(hdr.vox_offset)
        if offset < SINGLE_FILE_OFFSET:
            offset = SINGLE_FILE_OFFSET
        payload = raw[offset:]
    else:
        if img is None:
            raise NiftiError("header is part of a .hdr/.img pair; image bytes required")
        payload = _maybe_gunzip(bytes(img))[int(hdr.vox_offset):]

    voxels = raw_voxels(hdr, payload)
    affine = hdr.affine()
    spacing = tuple(abs(p) for p in hdr.pixdim[1:4])
    if min(spacing) <= 0:
        spacing = None

    scaled = _scaling_active(hdr) and not (hdr.scl_slope == 1 and hdr.scl_inter == 0)
    is_int = np.dtype(DATATYPES[hdr.datatype][0]).kind in "iu"
    if kind == "auto":
        kind = "labels" if is_int and not scaled else "image"

    if kind == "labels":
        values = voxels
        if scaled:
            values = hdr.scl_slope * voxels.astype(np.float64) + hdr.scl_inter
        return LabelVolume(values, affine, spacing)
    if kind != "image":
        raise ValueError(f"unknown volume kind {kind!r}")

    if _scaling_active(hdr):
        values = (hdr.scl_slope * voxels.astype(np.float64) + hdr.scl_inter).astype(np.float32)
    else:
        values = voxels.astype(np.float32)
    qc = ()
    bad = ~np.isfinite(values)
    if bad.any():
        nbad = int(bad.sum())
        if strict:
            raise NonFiniteVoxels(f"{nbad} non-finite voxels")
        values = np.where(bad, np.float32(0), values)
        qc = (f"nonfinite_voxels_zeroed={nbad}",)
        log.warning("replaced %d non-finite voxels with 0", nbad)
    return VolumeImage(values, affine, spacing, qc=qc)


def read_nifti(path, kind="auto", strict=False):
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    img = None
    if path.endswith((".hdr", ".hdr.gz")):
        img_path = path.replace(".hdr", ".img")
        with open(img_path, "rb") as fh:
            img = fh.read()
    return parse_nifti(raw, kind=kind, strict=strict, img=img)


# -- writing -----------------------------------------------------------------

def _label_dtype(data):
    hi = int(data.max()) if data.size else 0
    if hi <= 255:
        return np.dtype(np.uint8)
    if hi <= 32767:
        return np.dtype(np.int16)
    return np.dtype(np.int32)


def build_header(shape, dtype, affine, spacing, description=b"", scl_slope=1.0, scl_inter=0.0):
    """Little-endian single-file header for a 3D volume."""
    dtype = np.dtype(dtype)
    code = _CODE_OF[dtype.newbyteorder("=")]
    hdr = np.zeros((), dtype=HEADER_DTYPE.newbyteorder("<"))
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, shape[0], shape[1], shape[2], 1, 1, 1, 1]
    hdr["datatype"] = code
    hdr["bitpix"] = DATATYPES[code][1]
    hdr["pixdim"] = [1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0]
    hdr["vox_offset"] = SINGLE_FILE_OFFSET
    hdr["scl_slope"] = scl_slope
    hdr["scl_inter"] = scl_inter
    hdr["xyzt_units"] = 2  # mm
    hdr["descrip"] = description[:79]
    hdr["sform_code"] = 2
    hdr["qform_code"] = 0
    hdr["srow_x"] = affine[0]
    hdr["srow_y"] = affine[1]
    hdr["srow_z"] = affine[2]
    hdr["magic"] = MAGIC_SINGLE + b"\x00"
    return hdr.tobytes()


def write_nifti(vol, gz=False, dtype=None):
    """Serialize a volume to single-file NIfTI-1 bytes.

    By default images are written as float32 and labels as the smallest of
    uint8/int16/int32 holding the maximum label.  ``dtype`` forces one of the
    supported on-disk types; values must be representable in it.  gzip
    output uses mtime 0 so identical volumes give identical bytes.
    """
    if dtype is not None:
        dtype = np.dtype(dtype)
        if dtype.newbyteorder("=") not in _CODE_OF:
            raise UnsupportedDatatype(f"cannot write {dtype}")
        if dtype.kind in "iu":
            info = np.iinfo(dtype)
            vals = np.asarray(vol.data)
            if vals.size and (vals.min() < info.min or vals.max() > info.max
                              or np.any(vals != np.round(vals))):
                raise ValueError(f"values do not fit {dtype}")
    elif isinstance(vol, LabelVolume):
        dtype = _label_dtype(vol.data)
    else:
        dtype = np.dtype(np.float32)
    data = np.asarray(vol.data).astype(dtype.newbyteorder("<"))
    header = build_header(data.shape, dtype, vol.affine, vol.spacing,
                          description=b"atnquant")
    body = header + b"\x00\x00\x00\x00" + data.tobytes(order="F")
    if gz:
        buf = io.BytesIO()
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0, filename="") as fh:
            fh.write(body)
        return buf.getvalue()
    return body


def save_nifti(vol, path):
    path = os.fspath(path)
    with open(path, "wb") as fh:
        fh.write(write_nifti(vol, gz=path.endswith(".gz")))
