"""Affine transforms and single-pass trilinear resampling.

Transforms are plain 4x4 numpy arrays in world millimetres.  A resampling
call takes one world-to-world map (source world -> target world), folds it
together with both voxel-to-world matrices into a single target-voxel ->
source-voxel matrix, and interpolates once.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularTransform
from .nifti_io import LabelVolume, VolumeImage

DET_EPS = 1e-12
# mapped coordinates this close to an integer are snapped onto it, so integer
# voxel shifts reproduce the source exactly
SNAP_EPS = 1e-9
SLAB = 8


def check_affine(m):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (4, 4):
        raise SingularTransform(f"transform must be 4x4, got {m.shape}")
    if not np.allclose(m[3], [0, 0, 0, 1], atol=1e-12):
        raise SingularTransform(f"last row must be (0,0,0,1), got {m[3]}")
    if abs(np.linalg.det(m)) <= DET_EPS:
        raise SingularTransform("transform is not invertible")
    return m


def compose(a, b):
    """Transform applying ``b`` first, then ``a``."""
    return check_affine(a) @ check_affine(b)


def invert(m):
    return np.linalg.inv(check_affine(m))


def translation(dx, dy, dz):
    m = np.eye(4)
    m[:3, 3] = dx, dy, dz
    return m


def rotation(axis, degrees):
    """Rotation about a world axis (0/"x", 1/"y", 2/"z") through the origin."""
    if isinstance(axis, str):
        axis = "xyz".index(axis.lower())
    t = np.deg2rad(degrees)
    c, s = np.cos(t), np.sin(t)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    m = np.eye(4)
    m[i, i] = c
    m[i, j] = -s
    m[j, i] = s
    m[j, j] = c
    return m


def load_transform(path):
    """Read a 4x4 row-major matrix from a whitespace-separated text file."""
    try:
        m = np.loadtxt(os.fspath(path), dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"{path}: not a numeric matrix ({exc})") from exc
    if m.shape != (4, 4):
        raise ConfigError(f"{path}: expected 4x4 matrix, got {m.shape}")
    return check_affine(m)


def save_transform(m, path):
    np.savetxt(os.fspath(path), check_affine(m), fmt="%.10g")


@dataclass(frozen=True)
class Grid:
    dims: tuple
    affine: np.ndarray

    @property
    def spacing(self):
        return tuple(float(s) for s in np.linalg.norm(self.affine[:3, :3], axis=0))

    @classmethod
    def of(cls, vol):
        return cls(tuple(vol.dims), np.asarray(vol.affine, dtype=np.float64))


MNI_DIMS = (181, 217, 181)
MNI_AFFINE = np.array([
    [1.0, 0.0, 0.0, -90.0],
    [0.0, 1.0, 0.0, -126.0],
    [0.0, 0.0, 1.0, -72.0],
    [0.0, 0.0, 0.0, 1.0],
])
MNI_GRID = Grid(MNI_DIMS, MNI_AFFINE)


def voxel_map(src_affine, world_transform, target_affine):
    """Target voxel index -> source voxel index, as one 4x4 matrix."""
    return (invert(src_affine) @ invert(world_transform)
            @ check_affine(target_affine))


def _snap(m):
    """Round map entries lying within SNAP_EPS of an integer, so that
    integer-voxel shifts and axis flips sample exactly on the grid."""
    near = np.rint(m)
    return np.where(np.abs(m - near) < SNAP_EPS, near, m)


def _axis_weights(coord, n):
    """Lower corner, step to the upper corner (0 on a 1-voxel axis) and
    fractional weight along one axis, for in-field coordinates."""
    i0 = np.minimum(np.floor(coord).astype(np.int64), max(n - 2, 0))
    frac = coord - i0 if n > 1 else np.zeros_like(coord)
    step = np.minimum(i0 + 1, n - 1) - i0
    return i0, step, frac


def _trilinear_slab(src, m, dims, k0, k1):
    ii = np.arange(dims[0], dtype=np.float64)[:, None, None]
    jj = np.arange(dims[1], dtype=np.float64)[None, :, None]
    kk = np.arange(k0, k1, dtype=np.float64)[None, None, :]
    pts = [m[r, 0] * ii + m[r, 1] * jj + (m[r, 2] * kk + m[r, 3]) for r in range(3)]
    inside = np.ones(pts[0].shape, dtype=bool)
    for p, n in zip(pts, src.shape):
        inside &= (p >= 0) & (p <= n - 1)

    out = np.zeros(inside.shape, dtype=np.float64)
    if not inside.any():
        return out, inside
    if inside.all():
        pts = [p.reshape(-1) for p in pts]
    else:
        pts = [p[inside] for p in pts]
    nx, ny, nz = src.shape
    x0, dx, fx = _axis_weights(pts[0], nx)
    y0, dy, fy = _axis_weights(pts[1], ny)
    z0, dz, fz = _axis_weights(pts[2], nz)
    flat = src.reshape(-1)
    # C-order strides of the source array
    base = (x0 * ny + y0) * nz + z0
    sx, sy, sz = dx * (ny * nz), dy * nz, dz

    def lerp_x(offset):
        a = np.take(flat, base + offset)
        return a + fx * (np.take(flat, base + offset + sx) - a)

    c00, c10, c01, c11 = lerp_x(0), lerp_x(sy), lerp_x(sz), lerp_x(sy + sz)
    c0 = c00 + fy * (c10 - c00)
    c1 = c01 + fy * (c11 - c01)
    out[inside] = (c0 + fz * (c1 - c0)).reshape(-1)
    return out, inside


def _trilinear_separable(src, m, dims):
    """Axis-aligned maps: interpolate one axis at a time.  Same operation
    order as ``_trilinear_slab`` (x, then y, then z), hence identical values."""
    out = src
    inside = np.ones(dims, dtype=bool)
    for axis in range(3):
        n = src.shape[axis]
        coord = m[axis, axis] * np.arange(dims[axis], dtype=np.float64) + m[axis, 3]
        ok = (coord >= 0) & (coord <= n - 1)
        i0, step, frac = _axis_weights(np.where(ok, coord, 0.0), n)
        shape = [1, 1, 1]
        shape[axis] = -1
        a = np.take(out, i0, axis=axis)
        out = a + frac.reshape(shape) * (np.take(out, i0 + step, axis=axis) - a)
        inside &= ok.reshape(shape)
    out = np.where(inside, out, 0.0)
    return out, inside


def resample_trilinear(src, world_transform=None, target=MNI_GRID, jobs=1):
    """Resample ``src`` onto ``target`` through ``world_transform``.

    ``world_transform`` maps source world coordinates to target world
    coordinates (identity when None); chain several maps with ``compose``
    first so the data is interpolated only once.  Sample points are voxel
    centres.  Points outside the source grid get 0; the returned volume's
    ``field_mask`` marks in-field voxels and its QC notes the out-of-field
    fraction.
    """
    if isinstance(target, (VolumeImage, LabelVolume)):
        target = Grid.of(target)
    if world_transform is None:
        world_transform = np.eye(4)
    m = _snap(voxel_map(src.affine, world_transform, target.affine))
    data = np.ascontiguousarray(src.data, dtype=np.float32)
    dims = tuple(target.dims)

    # shifts and zooms without rotation separate into three 1D passes
    if np.count_nonzero(m[:3, :3] - np.diag(np.diag(m[:3, :3]))) == 0:
        out, mask = _trilinear_separable(data, m, dims)
        return _finish(src, out, mask, target)

    out = np.empty(dims, dtype=np.float64)
    mask = np.empty(dims, dtype=bool)
    slabs = [(k, min(k + SLAB, dims[2])) for k in range(0, dims[2], SLAB)]

    def run(bounds):
        k0, k1 = bounds
        out[:, :, k0:k1], mask[:, :, k0:k1] = _trilinear_slab(data, m, dims, k0, k1)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, slabs))
    else:
        for s in slabs:
            run(s)

    return _finish(src, out, mask, target)


def _finish(src, out, mask, target):
    oof = 1.0 - float(mask.mean()) if mask.size else 0.0
    qc = tuple(src.qc) + (f"out_of_field_fraction={oof:.6f}",)
    return VolumeImage(out.astype(np.float32), target.affine, target.spacing,
                       qc=qc, field_mask=mask)


def out_of_field_fraction(vol):
    if vol.field_mask is None:
        return 0.0
    return 1.0 - float(vol.field_mask.mean())
