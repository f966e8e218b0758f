"""Tracer-harmonised scales: Centiloid (CL), CenTauR (CTR) and CenTauRz
(CTRz), and the calibration fits that produce them."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import stats
from .data import data_path
from .errors import (ConfigError, DegenerateAnchors, DegenerateFit,
                     RegistryInconsistent, ScaleMismatch, UnknownTracer)


class Tracer(str, Enum):
    PiB = "PiB"
    FBP = "FBP"
    FBB = "FBB"
    FTM = "FTM"
    NAV = "NAV"
    FTP = "FTP"
    RO = "RO"
    MK = "MK"
    GTP = "GTP"
    PBB3 = "PBB3"
    PI = "PI"


class Scale(str, Enum):
    CL = "CL"
    CTR = "CTR"
    CTRz = "CTRz"


AMYLOID_TRACERS = frozenset({Tracer.PiB, Tracer.FBP, Tracer.FBB, Tracer.FTM, Tracer.NAV})
TAU_TRACERS = frozenset(Tracer) - AMYLOID_TRACERS

# PiB young-control and typical-AD mean SUVr of the Level-1 calibration
PIB_YCN_MEAN = 0.9659
PIB_AD_MEAN = 1.8972
# FTP SUVr = CTR_SUVR_SLOPE * CTR + CTR_SUVR_INTERCEPT
CTR_SUVR_SLOPE = 0.7646
CTR_SUVR_INTERCEPT = 0.2222

REGISTRY_TOL = 1e-3


def as_tracer(tracer):
    if isinstance(tracer, Tracer):
        return tracer
    for t in Tracer:
        if str(tracer).lower() == t.value.lower():
            return t
    raise UnknownTracer(f"unknown tracer {tracer!r}; known: {[t.value for t in Tracer]}")


@dataclass(frozen=True)
class CalibrationLine:
    """value = slope * suvr + intercept on ``scale`` for ``tracer``."""

    tracer: Tracer
    scale: Scale
    slope: float
    intercept: float
    r2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tracer", as_tracer(self.tracer))
        object.__setattr__(self, "scale", Scale(self.scale))
        if not self.slope > 0:
            raise ConfigError(f"{self.tracer.value}/{self.scale.value}: slope must be positive")

    def apply(self, suvr):
        return self.slope * suvr + self.intercept

    def invert(self, value):
        return (value - self.intercept) / self.slope

    @property
    def suvr_slope(self):
        """Slope of the forward relation suvr = suvr_slope * value + suvr_intercept."""
        return 1.0 / self.slope

    @property
    def suvr_intercept(self):
        return -self.intercept / self.slope

    def to_dict(self):
        return {"tracer": self.tracer.value, "scale": self.scale.value,
                "slope": self.slope, "intercept": self.intercept, "r2": self.r2}


@dataclass(frozen=True)
class Level1Anchors:
    mean_ycn_suvr: float
    mean_ad_suvr: float

    def __post_init__(self):
        if not self.mean_ad_suvr > self.mean_ycn_suvr:
            raise DegenerateAnchors(
                f"AD mean {self.mean_ad_suvr} must exceed young-control mean {self.mean_ycn_suvr}")


@dataclass(frozen=True)
class CriteriaReport:
    slope: float
    intercept: float
    r2: float
    failures: tuple = ()

    @property
    def passed(self):
        return not self.failures

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "pass": self.passed, "failures": list(self.failures)}


class Registry:
    """Read-only lookup of calibration lines keyed by (tracer, scale)."""

    def __init__(self, lines):
        self.printed = {}
        self._lines = {}
        for line in lines:
            key = (line.tracer, line.scale)
            if key in self._lines:
                raise ConfigError(f"duplicate registry entry {key[0].value}/{key[1].value}")
            self._lines[key] = line

    @classmethod
    def load(cls, path=None, verify=True):
        """Read a registry file.  An entry may give ``anchors`` instead of
        slope/intercept, in which case the line is the exact Level-1 line
        through them and an optional ``printed`` slope/intercept is kept
        for the consistency check."""
        path = path or data_path("calibration_registry.json")
        with open(path) as fh:
            doc = json.load(fh)
        lines, printed = [], {}
        for d in doc["lines"]:
            if "anchors" in d:
                a = d["anchors"]
                _, line = fit_level1([a["mean_ycn_suvr"]], [a["mean_ad_suvr"]], d["tracer"])
                lines.append(line)
                if "printed" in d:
                    printed[(line.tracer, line.scale)] = (d["printed"]["slope"],
                                                          d["printed"]["intercept"])
            else:
                lines.append(CalibrationLine(d["tracer"], d["scale"], d["slope"],
                                             d["intercept"], d.get("r2")))
        reg = cls(lines)
        reg.printed = printed
        if verify:
            reg.verify()
        return reg

    def get(self, tracer, scale):
        tracer = as_tracer(tracer)
        try:
            return self._lines[(tracer, Scale(scale))]
        except KeyError:
            raise UnknownTracer(f"no {Scale(scale).value} line for {tracer.value}") from None

    def lines(self):
        return list(self._lines.values())

    def verify(self):
        """The PiB line, and its printed rounding if present, must agree with
        the line implied by the published Level-1 anchors to 1e-3."""
        key = (Tracer.PiB, Scale.CL)
        if key not in self._lines:
            return
        _, expected = fit_level1([PIB_YCN_MEAN], [PIB_AD_MEAN])
        got = self._lines[key]
        candidates = [(got.slope, got.intercept)]
        if key in self.printed:
            candidates.append(self.printed[key])
        for slope, intercept in candidates:
            if (abs(slope - expected.slope) > REGISTRY_TOL
                    or abs(intercept - expected.intercept) > REGISTRY_TOL):
                raise RegistryInconsistent(
                    f"PiB line ({slope}, {intercept}) disagrees with anchors "
                    f"({expected.slope:.4f}, {expected.intercept:.4f})")


@lru_cache(maxsize=None)
def _cached_registry(path):
    return Registry.load(path)


def default_registry():
    """The shipped registry, or the one under ATNQUANT_DATA when set."""
    return _cached_registry(str(data_path("calibration_registry.json")))


def _registry_line(tracer, scale, registry, allowed, kind):
    tracer = as_tracer(tracer)
    if tracer not in allowed:
        raise ScaleMismatch(f"{tracer.value} is not an {kind} tracer")
    return (registry or default_registry()).get(tracer, scale)


def suvr_to_centiloid(tracer, suvr, registry=None):
    return _registry_line(tracer, Scale.CL, registry, AMYLOID_TRACERS, "amyloid").apply(suvr)


def suvr_to_centaurz(tracer, suvr, registry=None):
    return _registry_line(tracer, Scale.CTRz, registry, TAU_TRACERS, "tau").apply(suvr)


def suvr_to_centaur(suvr):
    """FTP SUVr to CenTauR units."""
    return (suvr - CTR_SUVR_INTERCEPT) / CTR_SUVR_SLOPE


def fit_level1(ycn_suvr, ad_suvr, tracer=Tracer.PiB):
    """Anchor a pipeline to CL: young-control mean -> 0, AD mean -> 100."""
    ycn = np.asarray(ycn_suvr, dtype=np.float64)
    ad = np.asarray(ad_suvr, dtype=np.float64)
    if ycn.size == 0 or ad.size == 0:
        raise ValueError("both groups must be non-empty")
    m_ycn, m_ad = float(ycn.mean()), float(ad.mean())
    if abs(m_ad - m_ycn) <= 1e-9:
        raise DegenerateAnchors("group means coincide")
    anchors = Level1Anchors(m_ycn, m_ad)
    slope = 100.0 / (m_ad - m_ycn)
    return anchors, CalibrationLine(tracer, Scale.CL, slope, -slope * m_ycn)


def fit_level2(pib_suvr, tracer_suvr, level1, tracer):
    """Map a second tracer onto CL through paired PiB scans.

    Regresses tracer SUVr on PiB SUVr, inverts the fit to predict a
    PiB-equivalent SUVr, and pushes that through the Level-1 line.
    Returns (line, r2 of the tracer-on-PiB regression).
    """
    pib, trc = stats.as_pairs(pib_suvr, tracer_suvr, 3)
    fit = stats.linear_fit(pib, trc)
    if fit.slope <= 0:
        raise DegenerateFit(f"tracer/PiB regression slope {fit.slope} is not positive")
    slope = level1.slope / fit.slope
    intercept = level1.intercept - level1.slope * fit.intercept / fit.slope
    return CalibrationLine(tracer, Scale.CL, slope, intercept, r2=fit.r2), fit.r2


CRITERIA_SLOPE = (0.98, 1.02)
CRITERIA_INTERCEPT = (-2.0, 2.0)
CRITERIA_R2 = 0.98


def check_centiloid_criteria(replicated_cl, published_cl):
    """Regress replicated on published CL and test the acceptance gates:
    slope in [0.98, 1.02], intercept in [-2, 2] (inclusive), R^2 > 0.98."""
    rep, pub = stats.as_pairs(replicated_cl, published_cl, 3)
    fit = stats.linear_fit(pub, rep)
    failures = []
    if not CRITERIA_SLOPE[0] <= fit.slope <= CRITERIA_SLOPE[1]:
        failures.append("slope")
    if not CRITERIA_INTERCEPT[0] <= fit.intercept <= CRITERIA_INTERCEPT[1]:
        failures.append("intercept")
    if not fit.r2 > CRITERIA_R2:
        failures.append("r2")
    return CriteriaReport(fit.slope, fit.intercept, fit.r2, tuple(failures))


def fit_centaur_level1(published_ctr, local_suvr):
    """Fit local FTP SUVr = a * published CTR + b and return CTR = (suvr - b) / a."""
    ctr, local = stats.as_pairs(published_ctr, local_suvr, 3)
    fit = stats.linear_fit(ctr, local)
    if fit.slope <= 0:
        raise DegenerateFit(f"SUVr/CTR regression slope {fit.slope} is not positive")
    return CalibrationLine(Tracer.FTP, Scale.CTR, 1.0 / fit.slope,
                           -fit.intercept / fit.slope, r2=fit.r2)
