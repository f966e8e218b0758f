"""Region statistics and SUVR tables over label maps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyRegion, GeometryMismatch, ZeroReference
from .nifti_io import same_geometry

ZERO_REF_EPS = 1e-9
HEMISPHERES = ("left", "right", "midline", "bilateral")
CSV_COLUMNS = ["label_set", "name", "voxels", "volume_mm3", "mean", "sd", "suvr", "empty"]


@dataclass(frozen=True)
class RegionDefinition:
    name: str
    labels: frozenset
    hemisphere: str = "bilateral"
    partner: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(int(x) for x in self.labels))
        if not self.labels:
            raise ConfigError(f"region {self.name!r} has no labels")
        if self.hemisphere not in HEMISPHERES:
            raise ConfigError(f"region {self.name!r}: bad hemisphere {self.hemisphere!r}")


@dataclass(frozen=True)
class MaskDefinition:
    name: str
    target_labels: frozenset
    reference_labels: frozenset
    reference_name: str = ""

    def __post_init__(self):
        target = frozenset(int(x) for x in self.target_labels)
        ref = frozenset(int(x) for x in self.reference_labels)
        if not target or not ref:
            raise ConfigError(f"mask {self.name!r}: target and reference must be non-empty")
        if target & ref:
            raise ConfigError(f"mask {self.name!r}: target and reference overlap on {sorted(target & ref)}")
        object.__setattr__(self, "target_labels", target)
        object.__setattr__(self, "reference_labels", ref)

    def to_dict(self):
        return {
            "name": self.name,
            "target_labels": sorted(self.target_labels),
            "reference_name": self.reference_name,
            "reference_labels": sorted(self.reference_labels),
        }


@dataclass(frozen=True)
class RoiStats:
    mean: float
    sd: float
    voxel_count: int
    volume_mm3: float

    @property
    def single_voxel(self):
        return self.voxel_count == 1


def _check_geometry(vol, labels):
    if not same_geometry(vol, labels):
        raise GeometryMismatch(
            f"image grid {vol.dims} and label grid {labels.dims} differ "
            "(dims or affine); resample first")


def _selection(vol, labels, label_set, exclude_oof):
    sel = np.isin(labels.data, np.fromiter(label_set, dtype=np.int64))
    if exclude_oof and vol.field_mask is not None:
        sel &= vol.field_mask
    return sel


def roi_stats(vol, labels, label_set, exclude_oof=False):
    """Mean and sample SD of the voxels whose label is in ``label_set``."""
    _check_geometry(vol, labels)
    label_set = frozenset(int(x) for x in label_set)
    values = np.asarray(vol.data, dtype=np.float64)[_selection(vol, labels, label_set, exclude_oof)]
    n = values.size
    if n == 0:
        raise EmptyRegion(f"no voxels carry labels {sorted(label_set)}")
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    return RoiStats(mean, sd, n, n * float(np.prod(vol.spacing)))


def suvr(vol, labels, target, reference, exclude_oof=False):
    ref = roi_stats(vol, labels, reference, exclude_oof)
    if ref.mean <= ZERO_REF_EPS:
        raise ZeroReference(f"reference mean {ref.mean!r} is not positive")
    return roi_stats(vol, labels, target, exclude_oof).mean / ref.mean


class LabelMoments:
    """Per-label count, mean and centred sum of squares, computed once per
    volume so that many regions can be summarised without rescanning."""

    def __init__(self, vol, labels, exclude_oof=False):
        _check_geometry(vol, labels)
        lab = labels.data.ravel()
        val = np.asarray(vol.data, dtype=np.float64).ravel()
        if exclude_oof and vol.field_mask is not None:
            keep = vol.field_mask.ravel()
            lab, val = lab[keep], val[keep]
        size = int(lab.max()) + 1 if lab.size else 1
        self.count = np.bincount(lab, minlength=size).astype(np.int64)
        sums = np.bincount(lab, weights=val, minlength=size)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.mean = np.where(self.count > 0, sums / np.maximum(self.count, 1), 0.0)
        dev = val - self.mean[lab]
        self.m2 = np.bincount(lab, weights=dev * dev, minlength=size)
        self.voxel_volume = float(np.prod(vol.spacing))

    def stats(self, label_set):
        idx = np.array([l for l in label_set if 0 <= l < self.count.size], dtype=np.int64)
        n = int(self.count[idx].sum()) if idx.size else 0
        if n == 0:
            raise EmptyRegion(f"no voxels carry labels {sorted(label_set)}")
        cnt = self.count[idx].astype(np.float64)
        mean = float((cnt * self.mean[idx]).sum() / n)
        # pooled centred sum of squares across the parts
        m2 = float(self.m2[idx].sum() + (cnt * (self.mean[idx] - mean) ** 2).sum())
        sd = math.sqrt(m2 / (n - 1)) if n > 1 else 0.0
        return RoiStats(mean, sd, n, n * self.voxel_volume)


@dataclass(frozen=True)
class SuvrRow:
    region: RegionDefinition
    stats: RoiStats | None
    suvr: float | None

    @property
    def empty(self):
        return self.stats is None

    def to_dict(self):
        s = self.stats
        return {
            "name": self.region.name,
            "labels": sorted(self.region.labels),
            "voxels": s.voxel_count if s else 0,
            "volume_mm3": s.volume_mm3 if s else 0.0,
            "mean": s.mean if s else None,
            "sd": s.sd if s else None,
            "suvr": self.suvr,
            "empty": s is None,
        }


def regional_suvr_table(vol, labels, regions, reference, exclude_oof=False, moments=None):
    """One SuvrRow per region, in input order.  Regions without voxels give
    an empty row instead of an error."""
    if not regions:
        raise ConfigError("no regions given")
    moments = moments or LabelMoments(vol, labels, exclude_oof)
    ref = moments.stats(frozenset(reference))
    if ref.mean <= ZERO_REF_EPS:
        raise ZeroReference(f"reference mean {ref.mean!r} is not positive")
    rows = []
    for region in regions:
        try:
            st = moments.stats(region.labels)
        except EmptyRegion:
            rows.append(SuvrRow(region, None, None))
            continue
        rows.append(SuvrRow(region, st, st.mean / ref.mean))
    return rows


def table_to_csv(rows):
    """CSV text for SuvrRow objects or their ``to_dict`` form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        if isinstance(r, SuvrRow):
            r = r.to_dict()
        empty = r["empty"]
        w.writerow([
            "+".join(str(l) for l in r["labels"]), r["name"], r["voxels"],
            repr(float(r["volume_mm3"])),
            "" if empty else repr(float(r["mean"])),
            "" if empty else repr(float(r["sd"])),
            "" if empty else repr(float(r["suvr"])),
            "true" if empty else "false",
        ])
    return buf.getvalue()


# -- definition files --------------------------------------------------------

def load_regions(path):
    with open(path) as fh:
        doc = json.load(fh)
    regions = [RegionDefinition(r["name"], r["labels"], r.get("hemisphere", "bilateral"),
                                r.get("partner")) for r in doc["regions"]]
    names = {r.name: r for r in regions}
    for r in regions:
        if r.partner is None:
            continue
        other = names.get(r.partner)
        if other is None or other.partner != r.name:
            raise ConfigError(f"region {r.name!r}: partner {r.partner!r} is not reciprocal")
    return regions


def load_masks(path):
    with open(path) as fh:
        doc = json.load(fh)
    return {m["name"]: MaskDefinition(m["name"], m["target_labels"], m["reference_labels"],
                                      m.get("reference_name", ""))
            for m in doc["masks"]}
