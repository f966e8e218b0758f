"""A/T2/N status classification and the age-aware HAVAs probability."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

from .data import data_path
from .errors import AgeOutOfRange, ConfigError, MissingStructure, OutOfRange

HAVAS_STRUCTURES = ("hippocampus", "amygdala", "inferior_lateral_ventricle")


class AmyloidScheme(str, Enum):
    AMYPAD = "amypad"
    BINARY = "binary"


class AmyloidStatus(str, Enum):
    NEG = "A-"
    INTER = "Ainter"
    POS = "A+"


class TauStatus(str, Enum):
    NEG = "T₂-"
    POS = "T₂+"


class NeuroStatus(str, Enum):
    NEG = "N-"
    POS = "N+"


@dataclass(frozen=True)
class StagingThresholds:
    amyloid_scheme: AmyloidScheme = AmyloidScheme.AMYPAD
    amypad_lo: float = 10.0
    amypad_hi: float = 30.0
    binary_cut: float = 24.1
    tau_cut: float = 2.0
    n_cut: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "amyloid_scheme", AmyloidScheme(self.amyloid_scheme))
        cuts = (self.amypad_lo, self.amypad_hi, self.binary_cut, self.tau_cut, self.n_cut)
        if not all(math.isfinite(c) for c in cuts):
            raise ConfigError("staging thresholds must be finite")
        if not self.amypad_lo < self.amypad_hi:
            raise ConfigError("amypad_lo must be below amypad_hi")

    def to_dict(self):
        return {"amyloid_scheme": self.amyloid_scheme.value, "amypad_lo": self.amypad_lo,
                "amypad_hi": self.amypad_hi, "binary_cut": self.binary_cut,
                "tau_cut": self.tau_cut, "n_cut": self.n_cut}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


DEFAULT_THRESHOLDS = StagingThresholds()


def amyloid_status(cl, scheme=AmyloidScheme.AMYPAD, thresholds=DEFAULT_THRESHOLDS):
    scheme = AmyloidScheme(scheme)
    if scheme is AmyloidScheme.BINARY:
        return AmyloidStatus.POS if cl >= thresholds.binary_cut else AmyloidStatus.NEG
    if cl < thresholds.amypad_lo:
        return AmyloidStatus.NEG
    if cl < thresholds.amypad_hi:
        return AmyloidStatus.INTER
    return AmyloidStatus.POS


def tau_status(ctrz, thresholds=DEFAULT_THRESHOLDS):
    return TauStatus.NEG if ctrz < thresholds.tau_cut else TauStatus.POS


def neurodegeneration_status(p, thresholds=DEFAULT_THRESHOLDS):
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"HAVAs probability {p} outside [0, 1]")
    return NeuroStatus.NEG if p < thresholds.n_cut else NeuroStatus.POS


@dataclass(frozen=True)
class AtnProfile:
    """Statuses and the raw values they came from.  A missing modality is
    None on both sides."""

    amyloid: AmyloidStatus | None
    tau: TauStatus | None
    neuro: NeuroStatus | None
    cl: float | None
    ctrz: float | None
    havas: float | None

    def label(self):
        parts = [s.value for s in (self.amyloid, self.tau, self.neuro) if s is not None]
        return "/".join(parts)


def atn_profile(cl, ctrz, havas_p, thresholds=DEFAULT_THRESHOLDS):
    for name, v in (("CL", cl), ("CTRz", ctrz), ("HAVAs", havas_p)):
        if v is not None and not math.isfinite(v):
            raise OutOfRange(f"{name} value {v} is not finite")
    return AtnProfile(
        amyloid=None if cl is None else amyloid_status(cl, thresholds.amyloid_scheme, thresholds),
        tau=None if ctrz is None else tau_status(ctrz, thresholds),
        neuro=None if havas_p is None else neurodegeneration_status(havas_p, thresholds),
        cl=cl, ctrz=ctrz, havas=havas_p)


# -- HAVAs -------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    mean: float
    sd: float


@dataclass(frozen=True)
class AgeBin:
    age: float
    normal: Gaussian
    ad: Gaussian


@dataclass(frozen=True)
class HavasModel:
    """Normal-ageing and AD distributions of the composite score at anchor
    ages; parameters between anchors are linearly interpolated."""

    bins: tuple
    weights: dict
    name: str = ""
    clinical: bool = False

    def __post_init__(self):
        bins = tuple(sorted(self.bins, key=lambda b: b.age))
        if not bins:
            raise ConfigError("HAVAs model has no age bins")
        if len({b.age for b in bins}) != len(bins):
            raise ConfigError("HAVAs model has duplicate ages")
        for b in bins:
            if not (b.normal.sd > 0 and b.ad.sd > 0):
                raise ConfigError(f"HAVAs model: non-positive sd at age {b.age}")
        unknown = set(self.weights) - set(HAVAS_STRUCTURES)
        if unknown:
            raise ConfigError(f"HAVAs model: unknown structures {sorted(unknown)}")
        object.__setattr__(self, "bins", bins)

    @property
    def age_range(self):
        return self.bins[0].age, self.bins[-1].age

    @classmethod
    def from_dict(cls, d):
        bins = [AgeBin(float(b["age"]), Gaussian(**b["normal"]), Gaussian(**b["ad"]))
                for b in d["bins"]]
        weights = d.get("weights") or {"hippocampus": 1 / 3, "amygdala": 1 / 3,
                                       "inferior_lateral_ventricle": -1 / 3}
        return cls(tuple(bins), dict(weights), d.get("name", ""), bool(d.get("clinical", False)))

    @classmethod
    def load(cls, path=None):
        with open(path or data_path("havas_demo_model.json")) as fh:
            return cls.from_dict(json.load(fh))

    def at_age(self, age):
        lo, hi = self.age_range
        if not lo <= age <= hi:
            raise AgeOutOfRange(f"age {age} outside model range [{lo}, {hi}]")
        for left, right in zip(self.bins, self.bins[1:]):
            if left.age <= age <= right.age:
                t = (age - left.age) / (right.age - left.age)
                return _lerp(left.normal, right.normal, t), _lerp(left.ad, right.ad, t)
        return self.bins[0].normal, self.bins[0].ad

    def composite(self, volumes):
        total = 0.0
        for name, w in self.weights.items():
            if w == 0:
                continue
            if name not in volumes or volumes[name] is None:
                raise MissingStructure(f"volume for {name} is missing")
            v = float(volumes[name])
            if not v > 0:
                raise OutOfRange(f"volume for {name} must be positive, got {v}")
            total += w * v
        return total


def _lerp(a, b, t):
    return Gaussian(a.mean + t * (b.mean - a.mean), a.sd + t * (b.sd - a.sd))


def _log_normal_pdf(x, g):
    z = (x - g.mean) / g.sd
    return -0.5 * z * z - math.log(g.sd)


def havas_probability(volumes, age, model):
    """Posterior probability of the AD model given the composite score,
    with equal priors."""
    c = model.composite(volumes)
    normal, ad = model.at_age(age)
    delta = _log_normal_pdf(c, normal) - _log_normal_pdf(c, ad)
    if delta > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(delta))
