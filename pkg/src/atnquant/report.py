"""Subject results and their JSON / CSV / text renderings."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

from .errors import IncompleteResult
from .roiquant import table_to_csv
from .staging import AmyloidScheme, StagingThresholds, atn_profile

SCHEMA = "atnquant/1"
FORMATS = ("json", "csv", "text")


@dataclass(frozen=True)
class AmyloidResult:
    tracer: str
    composite_suvr: float
    centiloid: float
    mask: str = "centiloid"
    reference: str = "whole cerebellum"


@dataclass(frozen=True)
class TauResult:
    tracer: str
    composite_suvr: float
    ctrz: float
    ctr: float | None = None
    mask: str = "centaur"
    reference: str = "cerebellar gray matter"


@dataclass(frozen=True)
class SubjectResult:
    subject: str
    age: float | None = None
    sex: str | None = None
    amyloid: AmyloidResult | None = None
    tau: TauResult | None = None
    havas: float | None = None
    thresholds: StagingThresholds = field(default_factory=StagingThresholds)
    regional_amyloid: tuple | None = None
    regional_tau: tuple | None = None
    volumes: tuple | None = None
    qc: dict = field(default_factory=dict)

    @property
    def profile(self):
        return atn_profile(self.amyloid.centiloid if self.amyloid else None,
                           self.tau.ctrz if self.tau else None,
                           self.havas, self.thresholds)

    def to_dict(self):
        p = self.profile
        return {
            "schema": SCHEMA,
            "subject": self.subject,
            "age": self.age,
            "sex": self.sex,
            "amyloid": None if self.amyloid is None else {
                "tracer": self.amyloid.tracer,
                "composite_suvr": self.amyloid.composite_suvr,
                "centiloid": self.amyloid.centiloid,
                "status": p.amyloid.value,
                "mask": self.amyloid.mask,
                "reference": self.amyloid.reference,
            },
            "tau": None if self.tau is None else {
                "tracer": self.tau.tracer,
                "composite_suvr": self.tau.composite_suvr,
                "ctr": self.tau.ctr,
                "ctrz": self.tau.ctrz,
                "status": p.tau.value,
                "mask": self.tau.mask,
                "reference": self.tau.reference,
            },
            "neurodegeneration": None if self.havas is None else {
                "havas": self.havas,
                "status": p.neuro.value,
            },
            "atn": p.label(),
            "thresholds": self.thresholds.to_dict(),
            "regional_amyloid": _list_or_none(self.regional_amyloid),
            "regional_tau": _list_or_none(self.regional_tau),
            "volumes": _list_or_none(self.volumes),
            "qc": self.qc,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCHEMA:
            raise IncompleteResult(f"unsupported schema {d.get('schema')!r}")
        am, tau, nd = d.get("amyloid"), d.get("tau"), d.get("neurodegeneration")
        return cls(
            subject=d["subject"],
            age=d.get("age"),
            sex=d.get("sex"),
            amyloid=None if am is None else AmyloidResult(
                am["tracer"], am["composite_suvr"], am["centiloid"], am["mask"], am["reference"]),
            tau=None if tau is None else TauResult(
                tau["tracer"], tau["composite_suvr"], tau["ctrz"], tau.get("ctr"),
                tau["mask"], tau["reference"]),
            havas=None if nd is None else nd["havas"],
            thresholds=StagingThresholds.from_dict(d["thresholds"]),
            regional_amyloid=_tuple_or_none(d.get("regional_amyloid")),
            regional_tau=_tuple_or_none(d.get("regional_tau")),
            volumes=_tuple_or_none(d.get("volumes")),
            qc=dict(d.get("qc") or {}),
        )


def _list_or_none(rows):
    return None if rows is None else [dict(r) for r in rows]


def _tuple_or_none(rows):
    return None if rows is None else tuple(dict(r) for r in rows)


def validate(result):
    if not result.subject:
        raise IncompleteResult("subject id is empty")
    if result.amyloid is None and result.tau is None and result.havas is None:
        raise IncompleteResult("no biomarker available")
    if result.amyloid is not None and result.regional_amyloid is None:
        raise IncompleteResult("amyloid result without regional table")
    if result.tau is not None and result.regional_tau is None:
        raise IncompleteResult("tau result without regional table")


# -- renderers ---------------------------------------------------------------

def render_json(result):
    return json.dumps(result.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def biomarker_lines(result):
    return profile_lines(result.profile)


def profile_lines(p):
    """The A / T2 / N summary lines, values to two decimals."""
    lines = []
    if p.amyloid is not None:
        lines.append(f"{p.amyloid.value} Centiloid = {p.cl:.2f}")
    if p.tau is not None:
        lines.append(f"{p.tau.value} CenTauRz = {p.ctrz:.2f}")
    if p.neuro is not None:
        lines.append(f"{p.neuro.value} HAVAs = {p.havas:.2f}")
    return lines


def render_text(result):
    t = result.thresholds
    out = [f"Subject: {result.subject}"]
    if result.sex is not None:
        out.append(f"Sex: {result.sex}")
    if result.age is not None:
        out.append(f"Age: {result.age:.1f}")
    if result.amyloid is not None:
        out.append(f"Amyloid PET: {result.amyloid.tracer}")
    if result.tau is not None:
        out.append(f"Tau PET: {result.tau.tracer}")
    axes = [a for a, present in (("A", result.amyloid), ("T₂", result.tau), ("N", result.havas))
            if present is not None]
    out += ["", " / ".join(axes) + " Biomarkers"]
    out += biomarker_lines(result)
    out.append("")
    if result.amyloid is not None:
        if t.amyloid_scheme is AmyloidScheme.AMYPAD:
            out.append(f"Amyloid (A): AMYPAD scheme, CL < {t.amypad_lo:g} is A-, "
                       f"{t.amypad_lo:g} <= CL < {t.amypad_hi:g} is Ainter, CL >= {t.amypad_hi:g} is A+")
        else:
            out.append(f"Amyloid (A): binary cut, CL >= {t.binary_cut:g} is A+, otherwise A-")
        out.append(f"  composite SUVr {result.amyloid.composite_suvr:.4f} "
                   f"({result.amyloid.mask} / {result.amyloid.reference})")
    if result.tau is not None:
        out.append(f"Tau (T₂): CenTauRz < {t.tau_cut:g} is T₂-, otherwise T₂+")
        line = (f"  composite SUVr {result.tau.composite_suvr:.4f} "
                f"({result.tau.mask} / {result.tau.reference})")
        if result.tau.ctr is not None:
            line += f", CenTauR = {result.tau.ctr:.2f}"
        out.append(line)
    if result.havas is not None:
        out.append(f"Neurodegeneration (N): HAVAs < {t.n_cut:g} is N-, otherwise N+")
    if result.qc:
        out += ["", "QC:"]
        out += [f"  {k}: {_qc_value(v)}" for k, v in sorted(result.qc.items())]
    return "\n".join(out) + "\n"


def _qc_value(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v) if v else "none"
    return str(v)


def volumes_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["structure", "volume_mm3", "icv_percent"])
    for r in rows:
        pct = r.get("icv_percent")
        w.writerow([r["structure"], repr(float(r["volume_mm3"])),
                    "" if pct is None else repr(float(pct))])
    return buf.getvalue()


def render_files(result, formats=FORMATS):
    """Map of output file name -> text content."""
    validate(result)
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    files = {}
    if "json" in formats:
        files["summary.json"] = render_json(result)
    if "text" in formats:
        files["report.txt"] = render_text(result)
    if "csv" in formats:
        if result.regional_amyloid is not None:
            files["regional_amyloid.csv"] = table_to_csv(result.regional_amyloid)
        if result.regional_tau is not None:
            files["regional_tau.csv"] = table_to_csv(result.regional_tau)
        if result.volumes is not None:
            files["volumes.csv"] = volumes_csv(result.volumes)
    return files


def emit_report(result, out_dir, formats=FORMATS):
    """Write the report files into ``out_dir``; returns the written paths."""
    files = render_files(result, formats)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name in sorted(files):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(files[name])
        paths.append(path)
    return paths


def load_result(path):
    with open(path, encoding="utf-8") as fh:
        return SubjectResult.from_dict(json.load(fh))
