"""Block phantoms with known per-label uptake.

Noise is drawn from numpy's PCG64 generator (``numpy.random.default_rng``)
seeded with ``PhantomSpec.seed``: one standard-normal array per block, in
block order, each of the block's shape in C order, scaled by the block's
noise SD.  Blocks with zero SD draw nothing.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OverlappingBlocks
from .nifti_io import LabelVolume, VolumeImage


@dataclass(frozen=True)
class Block:
    label: int
    uptake: float
    extent: tuple  # ((x0, x1), (y0, y1), (z0, z1)), half-open voxel ranges
    noise_sd: float = 0.0

    def __post_init__(self):
        ext = tuple((int(a), int(b)) for a, b in self.extent)
        if len(ext) != 3 or any(b <= a for a, b in ext):
            raise ConfigError(f"block {self.label}: bad extent {self.extent}")
        if self.uptake < 0 or self.noise_sd < 0:
            raise ConfigError(f"block {self.label}: uptake and noise_sd must be >= 0")
        if int(self.label) <= 0:
            raise ConfigError("block labels must be positive (0 is background)")
        object.__setattr__(self, "extent", ext)

    @property
    def slices(self):
        return tuple(slice(a, b) for a, b in self.extent)

    @property
    def shape(self):
        return tuple(b - a for a, b in self.extent)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple
    spacing: tuple = (1.0, 1.0, 1.0)
    blocks: tuple = ()
    background: float = 0.0
    seed: int = 0
    affine: np.ndarray | None = None

    @classmethod
    def from_dict(cls, d):
        blocks = tuple(Block(b["label"], b["uptake"], b["extent"], b.get("noise_sd", 0.0))
                       for b in d.get("blocks", []))
        affine = d.get("affine")
        return cls(tuple(d["dims"]), tuple(d.get("spacing", (1.0, 1.0, 1.0))), blocks,
                   float(d.get("background", 0.0)), int(d.get("seed", 0)),
                   None if affine is None else np.asarray(affine, dtype=np.float64))

    def grid_affine(self):
        if self.affine is not None:
            return np.asarray(self.affine, dtype=np.float64)
        return np.diag(list(self.spacing) + [1.0])


@dataclass(frozen=True)
class GroundTruth:
    label: int
    voxels: int
    mean: float


def make_phantom(spec):
    """Build (image, labels, ground truth).  Ground-truth means are taken
    from the generated block arrays, not from the assembled volume."""
    dims = tuple(int(d) for d in spec.dims)
    occupied = np.zeros(dims, dtype=bool)
    for blk in spec.blocks:
        if any(b > n for (_, b), n in zip(blk.extent, dims)):
            raise ConfigError(f"block {blk.label} extends past the grid {dims}")
        if occupied[blk.slices].any():
            raise OverlappingBlocks(f"block {blk.label} overlaps an earlier block")
        occupied[blk.slices] = True

    rng = np.random.default_rng(spec.seed)
    image = np.full(dims, spec.background, dtype=np.float32)
    labels = np.zeros(dims, dtype=np.int32)
    sums, counts = {}, {}
    for blk in spec.blocks:
        values = np.full(blk.shape, blk.uptake, dtype=np.float64)
        if blk.noise_sd > 0:
            values = values + blk.noise_sd * rng.standard_normal(blk.shape)
        values = values.astype(np.float32)
        image[blk.slices] = values
        labels[blk.slices] = blk.label
        sums[blk.label] = sums.get(blk.label, 0.0) + float(values.astype(np.float64).sum())
        counts[blk.label] = counts.get(blk.label, 0) + values.size

    truth = [GroundTruth(l, counts[l], sums[l] / counts[l]) for l in sorted(counts)]
    bg = int((~occupied).sum())
    if bg:
        truth.insert(0, GroundTruth(0, bg, float(np.float32(spec.background))))
    affine = spec.grid_affine()
    return (VolumeImage(image, affine, spec.spacing),
            LabelVolume(labels, affine, spec.spacing),
            truth)


def truth_to_csv(truth):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "voxels", "mean"])
    for t in truth:
        w.writerow([t.label, t.voxels, repr(t.mean)])
    return buf.getvalue()


def load_spec(path):
    with open(path) as fh:
        return PhantomSpec.from_dict(json.load(fh))
