"""Single-subject quantification: align PET to the label grid, compute
composite and regional SUVr, convert to CL / CTRz, score HAVAs, stage and
write the report."""

from __future__ import annotations

import csv
import json
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .data import data_path
from .errors import (AtnquantError, ConfigError, GeometryMismatch, ScaleMismatch,
                     ZeroReference)
from .geometry import Grid, load_transform, out_of_field_fraction, resample_trilinear
from .nifti_io import read_nifti, same_geometry
from .report import AmyloidResult, SubjectResult, TauResult, emit_report
from .roiquant import LabelMoments, load_masks, load_regions, regional_suvr_table
from .scales import (AMYLOID_TRACERS, TAU_TRACERS, Registry, Tracer, as_tracer,
                     default_registry, suvr_to_centaur, suvr_to_centaurz,
                     suvr_to_centiloid)
from .staging import (HAVAS_STRUCTURES, AmyloidScheme, HavasModel,
                      StagingThresholds, havas_probability)

AMYLOID_MASK = "centiloid"
TAU_MASK = "centaur"


@dataclass(frozen=True)
class RunConfig:
    subject: str = "subject"
    amyloid_pet: str | None = None
    tau_pet: str | None = None
    labels: str | None = None
    xfm_amyloid: str | None = None
    xfm_tau: str | None = None
    assume_registered: bool = False
    amyloid_tracer: str | None = None
    tau_tracer: str | None = None
    volumes: str | None = None
    havas_model: str | None = None
    age: float | None = None
    sex: str | None = None
    masks: str | None = None
    regions: str | None = None
    registry: str | None = None
    amyloid_scheme: str = "amypad"
    out: str | None = None
    strict: bool = False
    exclude_oof: bool = False
    threads: int = 1
    formats: tuple = ("json", "csv", "text")

    def validate(self):
        if not (self.amyloid_pet or self.tau_pet or self.volumes):
            raise ConfigError("need --amyloid-pet, --tau-pet or --volumes")
        if (self.amyloid_pet or self.tau_pet) and not self.labels:
            raise ConfigError("--labels is required with PET input")
        if self.amyloid_pet:
            if not self.amyloid_tracer:
                raise ConfigError("--amyloid-tracer is required with --amyloid-pet")
            if as_tracer(self.amyloid_tracer) not in AMYLOID_TRACERS:
                raise ScaleMismatch(f"--amyloid-tracer {self.amyloid_tracer} is not an amyloid tracer")
        if self.tau_pet:
            if not self.tau_tracer:
                raise ConfigError("--tau-tracer is required with --tau-pet")
            if as_tracer(self.tau_tracer) not in TAU_TRACERS:
                raise ScaleMismatch(f"--tau-tracer {self.tau_tracer} is not a tau tracer")
        if self.volumes:
            if self.age is None:
                raise ConfigError("--age is required with --volumes")
            if not self.havas_model:
                raise ConfigError("--havas-model is required with --volumes (use 'demo' for the synthetic model)")
        AmyloidScheme(self.amyloid_scheme)


@contextmanager
def _context(flag, path):
    """Re-raise package errors with the offending flag and file attached."""
    try:
        yield
    except AtnquantError as exc:
        if getattr(exc, "has_context", False):
            raise
        new = type(exc)(f"{flag} {path}: {exc}")
        new.has_context = True
        raise new from exc


def load_aligned_pet(path, xfm, labels, cfg, flag, xfm_flag):
    """Read a PET volume and bring it onto the label grid with at most one
    interpolation."""
    with _context(flag, path):
        pet = read_nifti(path, kind="image", strict=cfg.strict)
    grid = Grid.of(labels)
    if xfm:
        with _context(xfm_flag, xfm):
            transform = load_transform(xfm)
        return resample_trilinear(pet, transform, grid, jobs=cfg.threads)
    if same_geometry(pet, labels):
        return pet
    if cfg.assume_registered:
        return resample_trilinear(pet, None, grid, jobs=cfg.threads)
    raise GeometryMismatch(
        f"{flag} {path}: grid {pet.dims} does not match labels {labels.dims}; "
        "supply a transform or --assume-registered")


def known_labels(path=None):
    with open(path or data_path("labels.json")) as fh:
        return {int(r["label"]) for r in json.load(fh)["labels"]}


def read_volumes_table(path):
    """structure,volume_mm3 rows (an ``icv`` row is required).  Rows named
    ``left_<s>`` / ``right_<s>`` are summed into ``<s>``."""
    totals = {}
    with _context("--volumes", path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or not {"structure", "volume_mm3"} <= set(reader.fieldnames):
                raise ConfigError("volumes table needs columns structure,volume_mm3")
            for row in reader:
                name = row["structure"].strip().lower()
                try:
                    vol = float(row["volume_mm3"])
                except ValueError as exc:
                    raise ConfigError(f"bad volume for {name}: {row['volume_mm3']!r}") from exc
                for side in ("left_", "right_"):
                    if name.startswith(side):
                        name = name[len(side):]
                totals[name] = totals.get(name, 0.0) + vol
        if "icv" not in totals or not totals["icv"] > 0:
            raise ConfigError("volumes table lacks a positive icv row")
    return totals


def _modality(vol, labels, mask, regions, cfg, prefix, qc):
    moments = LabelMoments(vol, labels, cfg.exclude_oof)
    target = moments.stats(mask.target_labels)
    ref = moments.stats(mask.reference_labels)
    if ref.mean <= 1e-9:
        raise ZeroReference(f"{prefix} reference region mean {ref.mean!r} is not positive")
    composite = target.mean / ref.mean
    rows = regional_suvr_table(vol, labels, regions, mask.reference_labels,
                               cfg.exclude_oof, moments=moments)
    qc[f"{prefix}_out_of_field_fraction"] = out_of_field_fraction(vol)
    qc[f"{prefix}_empty_regions"] = [r.region.name for r in rows if r.empty]
    qc[f"{prefix}_single_voxel_regions"] = [r.region.name for r in rows
                                            if r.stats is not None and r.stats.single_voxel]
    warnings = [w for w in vol.qc if not w.startswith("out_of_field_fraction")]
    if warnings:
        qc[f"{prefix}_warnings"] = warnings
    return composite, tuple(r.to_dict() for r in rows)


def run_quantify(cfg):
    """Run one subject and write its report into ``cfg.out`` (if set)."""
    cfg.validate()
    registry = Registry.load(cfg.registry) if cfg.registry else default_registry()
    thresholds = StagingThresholds(amyloid_scheme=cfg.amyloid_scheme)
    qc = {}

    amyloid = tau = None
    regional_amyloid = regional_tau = None
    if cfg.amyloid_pet or cfg.tau_pet:
        with _context("--labels", cfg.labels):
            labels = read_nifti(cfg.labels, kind="labels")
        present = set(np.unique(labels.data).tolist()) - {0}
        unknown = sorted(present - known_labels())
        qc["unknown_labels"] = unknown
        regions = load_regions(cfg.regions or data_path("gm_regions.json"))
        masks = load_masks(cfg.masks or data_path("masks.json"))
        for needed in (AMYLOID_MASK, TAU_MASK):
            if needed not in masks:
                raise ConfigError(f"mask file lacks a {needed!r} mask")

        if cfg.amyloid_pet:
            vol = load_aligned_pet(cfg.amyloid_pet, cfg.xfm_amyloid, labels, cfg,
                                   "--amyloid-pet", "--xfm-amyloid")
            mask = masks[AMYLOID_MASK]
            composite, regional_amyloid = _modality(vol, labels, mask, regions, cfg, "amyloid", qc)
            tracer = as_tracer(cfg.amyloid_tracer)
            amyloid = AmyloidResult(tracer.value, composite,
                                    suvr_to_centiloid(tracer, composite, registry),
                                    mask.name, mask.reference_name)
        if cfg.tau_pet:
            vol = load_aligned_pet(cfg.tau_pet, cfg.xfm_tau, labels, cfg,
                                   "--tau-pet", "--xfm-tau")
            mask = masks[TAU_MASK]
            composite, regional_tau = _modality(vol, labels, mask, regions, cfg, "tau", qc)
            tracer = as_tracer(cfg.tau_tracer)
            ctr = suvr_to_centaur(composite) if tracer is Tracer.FTP else None
            tau = TauResult(tracer.value, composite, suvr_to_centaurz(tracer, composite, registry),
                            ctr, mask.name, mask.reference_name)

    havas = None
    volumes = None
    if cfg.volumes:
        totals = read_volumes_table(cfg.volumes)
        icv = totals["icv"]
        volumes = tuple({"structure": k, "volume_mm3": v,
                         "icv_percent": None if k == "icv" else 100.0 * v / icv}
                        for k, v in sorted(totals.items()))
        model_path = None if cfg.havas_model == "demo" else cfg.havas_model
        with _context("--havas-model", cfg.havas_model):
            model = HavasModel.load(model_path)
        normalized = {s: 100.0 * totals[s] / icv for s in HAVAS_STRUCTURES if s in totals}
        havas = havas_probability(normalized, float(cfg.age), model)
        if not model.clinical:
            qc["havas_model"] = f"{model.name or 'unnamed'} (non-clinical)"

    result = SubjectResult(
        subject=cfg.subject, age=cfg.age, sex=cfg.sex, amyloid=amyloid, tau=tau,
        havas=havas, thresholds=thresholds, regional_amyloid=regional_amyloid,
        regional_tau=regional_tau, volumes=volumes, qc=qc)
    if cfg.out:
        emit_report(result, cfg.out, cfg.formats)
    return result
