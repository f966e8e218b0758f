"""Command-line entry point.

    atnquant quantify     one subject, or a manifest of subjects
    atnquant calibrate    Level-1 / Level-2 Centiloid or CenTauR fits
    atnquant derive-mask  Cohen's d structure selection
    atnquant concordance  agreement statistics between two measurements
    atnquant phantom      synthetic PET + label volumes
    atnquant stage        A/T2/N statuses from raw values
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from . import maskderive, phantom, report, scales, staging, stats
from .errors import AtnquantError, ConfigError
from .nifti_io import save_nifti
from .pipeline import RunConfig, read_volumes_table, run_quantify

log = logging.getLogger("atnquant")

EXIT_BATCH_FAILURES = 3


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [r for r in reader]
        return reader.fieldnames or [], rows


def _floats(rows, col, path):
    try:
        return np.array([float(r[col]) for r in rows], dtype=np.float64)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: column {col!r}: {exc}") from exc


# -- quantify ------------------------------------------------------------------

_MANIFEST_KEYS = {f.name for f in fields(RunConfig)} - {"out", "threads", "formats"}


def _config_from_args(args):
    return RunConfig(
        subject=args.subject, amyloid_pet=args.amyloid_pet, tau_pet=args.tau_pet,
        labels=args.labels, xfm_amyloid=args.xfm_amyloid, xfm_tau=args.xfm_tau,
        assume_registered=args.assume_registered, amyloid_tracer=args.amyloid_tracer,
        tau_tracer=args.tau_tracer, volumes=args.volumes, havas_model=args.havas_model,
        age=args.age, sex=args.sex, masks=args.masks, regions=args.regions,
        registry=args.registry, amyloid_scheme=args.amyloid_scheme, out=args.out,
        strict=args.strict, exclude_oof=args.exclude_oof, threads=args.threads)


def _manifest_configs(path, base):
    """One RunConfig per manifest row; blank cells fall back to the command
    line values, outputs go to <out>/<subject>/."""
    header, rows = _read_csv(path)
    unknown = set(header) - _MANIFEST_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown manifest columns {sorted(unknown)}")
    base_dir = os.path.dirname(os.path.abspath(path))
    configs = []
    seen = set()
    for row in rows:
        values = {k: v for k, v in row.items() if v not in (None, "")}
        subject = values.get("subject")
        if not subject:
            raise ConfigError(f"{path}: row without subject")
        if subject in seen:
            raise ConfigError(f"{path}: duplicate subject {subject!r}")
        seen.add(subject)
        for key in ("amyloid_pet", "tau_pet", "labels", "xfm_amyloid", "xfm_tau", "volumes"):
            if key in values and not os.path.isabs(values[key]):
                values[key] = os.path.join(base_dir, values[key])
        if "age" in values:
            values["age"] = float(values["age"])
        for flag in ("assume_registered", "strict", "exclude_oof"):
            if flag in values:
                values[flag] = values[flag].strip().lower() in ("1", "true", "yes")
        merged = {f.name: getattr(base, f.name) for f in fields(RunConfig)}
        merged.update(values)
        merged["out"] = os.path.join(base.out, subject)
        configs.append(RunConfig(**merged))
    return configs


def _run_one(cfg):
    try:
        result = run_quantify(cfg)
    except (AtnquantError, OSError) as exc:
        return cfg.subject, None, f"{type(exc).__name__}: {exc}"
    p = result.profile
    return cfg.subject, {"cl": p.cl, "ctrz": p.ctrz, "havas": p.havas, "atn": p.label()}, ""


def cmd_quantify(args):
    if not args.out:
        raise ConfigError("--out is required")
    base = _config_from_args(args)
    if not args.manifest:
        result = run_quantify(base)
        for line in report.biomarker_lines(result):
            print(line)
        return 0

    configs = _manifest_configs(args.manifest, base)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_one, configs))
    else:
        outcomes = [_run_one(c) for c in configs]

    os.makedirs(args.out, exist_ok=True)
    failures = 0
    with open(os.path.join(args.out, "batch_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "status", "cl", "ctrz", "havas", "atn", "error"])
        for subject, values, error in outcomes:
            if values is None:
                failures += 1
                w.writerow([subject, "error", "", "", "", "", error])
                print(f"{subject}: {error}", file=sys.stderr)
                continue
            w.writerow([subject, "ok"] + ["" if values[k] is None else repr(values[k])
                                          for k in ("cl", "ctrz", "havas")] + [values["atn"], ""])
    return EXIT_BATCH_FAILURES if failures else 0


# -- calibrate -----------------------------------------------------------------

YCN_GROUPS = {"ycn", "yc", "young", "young_cn"}
AD_GROUPS = {"ad", "dementia", "ad+"}


def cmd_calibrate(args):
    header, rows = _read_csv(args.table)
    path = args.table
    mode = args.mode
    if mode == "auto":
        mode = "level2" if "tracer_suvr" in header else "level1"
    out = {"mode": mode, "anchors": None, "criteria": None}

    if mode == "centaur":
        ctr = _floats(rows, "published_ctr", path)
        local = _floats(rows, "ftp_suvr", path)
        line = scales.fit_centaur_level1(ctr, local)
        out.update(line=line.to_dict(), regression_r2=line.r2,
                   suvr_slope=line.suvr_slope, suvr_intercept=line.suvr_intercept)
        _dump(out, args.out)
        return 0

    pib = _floats(rows, "pib_suvr", path)
    if mode == "level1":
        groups = [r.get("group", "").strip().lower() for r in rows]
        ycn = pib[[g in YCN_GROUPS for g in groups]]
        ad = pib[[g in AD_GROUPS for g in groups]]
        if ycn.size == 0 or ad.size == 0:
            raise ConfigError(f"{path}: need rows in a young-control group {sorted(YCN_GROUPS)} "
                              f"and an AD group {sorted(AD_GROUPS)}")
        anchors, line = scales.fit_level1(ycn, ad)
        out.update(line=line.to_dict(), regression_r2=None,
                   anchors={"mean_ycn_suvr": anchors.mean_ycn_suvr,
                            "mean_ad_suvr": anchors.mean_ad_suvr})
        if "published_cl" in header:
            report_ = scales.check_centiloid_criteria(line.apply(pib),
                                                      _floats(rows, "published_cl", path))
            out["criteria"] = report_.to_dict()
    elif mode == "level2":
        if not args.tracer:
            raise ConfigError("--tracer is required for level2 calibration")
        tracer = scales.as_tracer(args.tracer)
        if tracer not in scales.AMYLOID_TRACERS or tracer is scales.Tracer.PiB:
            raise ConfigError(f"--tracer {tracer.value}: level2 needs a non-PiB amyloid tracer")
        registry = scales.Registry.load(args.registry) if args.registry else scales.default_registry()
        level1 = registry.get(scales.Tracer.PiB, scales.Scale.CL)
        trc = _floats(rows, "tracer_suvr", path)
        line, r2 = scales.fit_level2(pib, trc, level1, tracer)
        out.update(line=line.to_dict(), regression_r2=r2)
        published = (_floats(rows, "published_cl", path) if "published_cl" in header
                     else level1.apply(pib))
        out["criteria"] = scales.check_centiloid_criteria(line.apply(trc), published).to_dict()
    else:
        raise ConfigError(f"unknown mode {mode}")
    _dump(out, args.out)
    return 0


# -- derive-mask ---------------------------------------------------------------

def cmd_derive_mask(args):
    partners = maskderive.load_partners(args.partners)
    if args.d_values:
        ranked = maskderive.load_d_values(args.d_values)
    else:
        if not (args.group_a and args.group_b):
            raise ConfigError("give two group SUVr tables or --d-values")
        ranked = maskderive.rank_structures(maskderive.GroupSuvrTable.from_csv(args.group_a),
                                            maskderive.GroupSuvrTable.from_csv(args.group_b))
    mask = maskderive.derive_mask(ranked, args.threshold, partners, name=args.name)
    doc = mask.to_dict()
    doc["threshold"] = args.threshold
    doc["ranking"] = [{"label": r.label, "d": None if np.isnan(r.d) else r.d,
                       "flagged": bool(np.isnan(r.d))} for r in ranked]
    _dump(doc, args.out)
    return 0


# -- concordance ---------------------------------------------------------------

def concordance(x, y, groups=None):
    fit = stats.linear_fit(x, y)
    ba = stats.bland_altman(x, y)
    out = {
        "n": int(len(x)),
        "linear_fit": {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                       "r2_defined": fit.r2_defined},
        "icc": stats.icc(x, y),
        "bland_altman": {"bias": ba.bias, "loa_low": ba.loa_low, "loa_high": ba.loa_high},
        "cohens_d": stats.cohens_d(x, y),
        "anova": None,
    }
    if groups is not None:
        keys = sorted(set(groups))
        by_group = [[v for v, g in zip(y, groups) if g == k] for k in keys]
        f, p = stats.anova_oneway(by_group)
        out["anova"] = {"groups": keys, "f": f, "p": p}
    return out


def cmd_concordance(args):
    header, rows = _read_csv(args.table)
    numeric = [h for h in header if h != args.group and _is_numeric(rows, h)]
    xcol = args.x or (numeric[0] if numeric else None)
    ycol = args.y or (numeric[1] if len(numeric) > 1 else None)
    if not xcol or not ycol:
        raise ConfigError(f"{args.table}: need two numeric columns (use --x/--y)")
    x = _floats(rows, xcol, args.table)
    y = _floats(rows, ycol, args.table)
    groups = [r[args.group] for r in rows] if args.group else None
    doc = concordance(x, y, groups)
    doc.update(x=xcol, y=ycol)
    _dump(doc, args.out)
    return 0


def _is_numeric(rows, col):
    try:
        [float(r[col]) for r in rows]
    except (TypeError, ValueError):
        return False
    return bool(rows)


# -- phantom -------------------------------------------------------------------

def cmd_phantom(args):
    spec = phantom.load_spec(args.spec)
    image, labels, truth = phantom.make_phantom(spec)
    os.makedirs(args.out, exist_ok=True)
    save_nifti(image, os.path.join(args.out, "pet.nii.gz"))
    save_nifti(labels, os.path.join(args.out, "labels.nii.gz"))
    with open(os.path.join(args.out, "ground_truth.csv"), "w", newline="") as fh:
        fh.write(phantom.truth_to_csv(truth))
    return 0


# -- stage ---------------------------------------------------------------------

def cmd_stage(args):
    thresholds = staging.StagingThresholds(amyloid_scheme=args.amyloid_scheme)
    cl, ctrz, havas = args.cl, args.ctrz, args.havas
    if cl is None and args.amyloid_suvr is not None:
        cl = scales.suvr_to_centiloid(args.amyloid_tracer or "", args.amyloid_suvr)
    if ctrz is None and args.tau_suvr is not None:
        ctrz = scales.suvr_to_centaurz(args.tau_tracer or "", args.tau_suvr)
    if havas is None and args.volumes:
        if args.age is None or not args.havas_model:
            raise ConfigError("--volumes needs --age and --havas-model")
        totals = read_volumes_table(args.volumes)
        model = staging.HavasModel.load(None if args.havas_model == "demo" else args.havas_model)
        norm = {s: 100.0 * totals[s] / totals["icv"]
                for s in staging.HAVAS_STRUCTURES if s in totals}
        havas = staging.havas_probability(norm, args.age, model)
    if cl is None and ctrz is None and havas is None:
        raise ConfigError("nothing to stage: give --cl, --ctrz and/or --havas")
    p = staging.atn_profile(cl, ctrz, havas, thresholds)
    if args.json:
        _dump({"cl": p.cl, "ctrz": p.ctrz, "havas": p.havas,
               "amyloid": p.amyloid.value if p.amyloid else None,
               "tau": p.tau.value if p.tau else None,
               "neuro": p.neuro.value if p.neuro else None, "atn": p.label()})
    else:
        for line in report.profile_lines(p):
            print(line)
    return 0


# -- parser --------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="atnquant", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantify", help="SUVr, CL/CTRz, HAVAs and A/T2/N for one subject or a manifest")
    q.add_argument("--subject", default="subject")
    q.add_argument("--amyloid-pet")
    q.add_argument("--tau-pet")
    q.add_argument("--labels")
    q.add_argument("--xfm-amyloid", help="4x4 world transform, amyloid PET -> label space")
    q.add_argument("--xfm-tau", help="4x4 world transform, tau PET -> label space")
    q.add_argument("--assume-registered", action="store_true",
                   help="PET already shares world space with the labels")
    q.add_argument("--amyloid-tracer", choices=sorted(t.value for t in scales.AMYLOID_TRACERS))
    q.add_argument("--tau-tracer", choices=sorted(t.value for t in scales.TAU_TRACERS))
    q.add_argument("--volumes", help="CSV structure,volume_mm3 including an icv row")
    q.add_argument("--havas-model", help="HAVAs model JSON, or 'demo' for the synthetic one")
    q.add_argument("--age", type=float)
    q.add_argument("--sex")
    q.add_argument("--masks")
    q.add_argument("--regions")
    q.add_argument("--registry")
    q.add_argument("--amyloid-scheme", choices=["amypad", "binary"], default="amypad")
    q.add_argument("--out")
    q.add_argument("--strict", action="store_true", help="fail on non-finite voxels")
    q.add_argument("--exclude-oof", action="store_true",
                   help="drop out-of-field voxels from region means")
    q.add_argument("--manifest", help="CSV with one subject per row (batch mode)")
    q.add_argument("--jobs", type=int, default=1, help="parallel subjects in batch mode")
    q.add_argument("--threads", type=int, default=1, help="threads for resampling")
    q.set_defaults(func=cmd_quantify)

    c = sub.add_parser("calibrate", help="fit calibration lines and check Centiloid criteria")
    c.add_argument("table", help="CSV subject,group,pib_suvr[,tracer_suvr][,published_cl]")
    c.add_argument("--mode", choices=["auto", "level1", "level2", "centaur"], default="auto")
    c.add_argument("--tracer")
    c.add_argument("--registry")
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    d = sub.add_parser("derive-mask", help="select structures by Cohen's d")
    d.add_argument("group_a", nargs="?", help="reference group SUVr CSV")
    d.add_argument("group_b", nargs="?", help="patient group SUVr CSV")
    d.add_argument("--d-values", help="precomputed d-value JSON instead of group tables")
    d.add_argument("--partners", help="label dictionary / partner map JSON")
    d.add_argument("--threshold", type=float, default=maskderive.DEFAULT_THRESHOLD)
    d.add_argument("--name", default="derived")
    d.add_argument("--out")
    d.set_defaults(func=cmd_derive_mask)

    a = sub.add_parser("concordance", help="fit, ICC, Bland-Altman, Cohen's d, ANOVA")
    a.add_argument("table")
    a.add_argument("--x")
    a.add_argument("--y")
    a.add_argument("--group", help="column grouping y for one-way ANOVA")
    a.add_argument("--out")
    a.set_defaults(func=cmd_concordance)

    p = sub.add_parser("phantom", help="write a synthetic PET/label pair")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    s = sub.add_parser("stage", help="A/T2/N statuses from CL, CTRz and HAVAs")
    s.add_argument("--cl", type=float)
    s.add_argument("--ctrz", type=float)
    s.add_argument("--havas", type=float)
    s.add_argument("--amyloid-tracer")
    s.add_argument("--amyloid-suvr", type=float)
    s.add_argument("--tau-tracer")
    s.add_argument("--tau-suvr", type=float)
    s.add_argument("--volumes")
    s.add_argument("--age", type=float)
    s.add_argument("--havas-model")
    s.add_argument("--amyloid-scheme", choices=["amypad", "binary"], default="amypad")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_stage)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AtnquantError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
