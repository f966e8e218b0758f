"""Select discriminative structures by Cohen's d and close the selection
under left/right symmetry."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import data_path
from .errors import ConfigError, EmptySelection, MissingPartner, ZeroPooledSd
from .roiquant import MaskDefinition
from .stats import cohens_d

DEFAULT_THRESHOLD = 5.0
WHOLE_CEREBELLUM = (38, 39, 40, 41, 71, 72, 73)


@dataclass(frozen=True)
class GroupSuvrTable:
    """Subjects x structures SUVr matrix; columns follow ``labels``."""

    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = tuple(int(l) for l in self.labels)
        if values.ndim != 2 or values.shape[1] != len(labels):
            raise ConfigError(f"table shape {values.shape} does not match {len(labels)} structures")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    def column(self, label):
        return self.values[:, self.labels.index(label)]

    @classmethod
    def from_csv(cls, path):
        """Rows are subjects; a leading ``subject`` column is ignored, every
        other header is a structure label number."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], [r for r in rows[1:] if r]
        start = 1 if header and not header[0].strip().lstrip("-").isdigit() else 0
        try:
            labels = [int(h) for h in header[start:]]
            values = [[float(v) for v in r[start:]] for r in body]
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls(tuple(labels), np.array(values, dtype=np.float64).reshape(len(values), len(labels)))


class RankedStructure(NamedTuple):
    label: int
    d: float


def rank_structures(a, b):
    """Per-structure Cohen's d of group ``b`` against ``a``, largest first,
    ties by label.  Structures with zero pooled SD get d = NaN and sort last
    (returned in ``flagged`` order too)."""
    if list(a.labels) != list(b.labels):
        raise ConfigError("groups list different structures")
    ranked, flagged = [], []
    for label in a.labels:
        try:
            ranked.append(RankedStructure(label, cohens_d(a.column(label), b.column(label))))
        except ZeroPooledSd:
            flagged.append(RankedStructure(label, math.nan))
    ranked.sort(key=lambda r: (-r.d, r.label))
    flagged.sort(key=lambda r: r.label)
    return ranked + flagged


def derive_mask(ranked, threshold=DEFAULT_THRESHOLD, partners=None, name="derived",
                reference_labels=WHOLE_CEREBELLUM, reference_name="whole cerebellum"):
    """Keep structures with d > threshold, then add each kept structure's
    contralateral partner."""
    if partners is None:
        partners = load_partners()
    selected = {int(label) for label, d in ranked if d > threshold}
    if not selected:
        raise EmptySelection(f"no structure has d > {threshold}")
    closed = set(selected)
    for label in selected:
        if label not in partners:
            raise MissingPartner(f"label {label} has no partner entry")
        closed.add(int(partners[label]))
    return MaskDefinition(name, frozenset(sorted(closed)), frozenset(reference_labels),
                          reference_name)


def load_partners(path=None):
    """Label -> contralateral label; midline labels map to themselves."""
    with open(path or data_path("labels.json")) as fh:
        doc = json.load(fh)
    if "labels" in doc:
        partners = {int(r["label"]): int(r["partner"]) for r in doc["labels"]}
    else:
        partners = {int(k): int(v) for k, v in doc["partners"].items()}
    for k, v in partners.items():
        if partners.get(v) != k:
            raise ConfigError(f"partner map is not symmetric at {k} -> {v}")
    return partners


def load_d_values(path=None):
    with open(path or data_path("centiloid_cohens_d.json")) as fh:
        doc = json.load(fh)
    return [RankedStructure(int(s["label"]), float(s["d"])) for s in doc["structures"]]
