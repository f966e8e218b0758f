import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from atnquant.errors import (DegenerateAnchors, RegistryInconsistent, ScaleMismatch,
                             UnknownTracer)
from atnquant.scales import (AMYLOID_TRACERS, TAU_TRACERS, Registry, Scale, Tracer,
                             check_centiloid_criteria, default_registry,
                             fit_centaur_level1, fit_level1, fit_level2,
                             suvr_to_centaur, suvr_to_centaurz, suvr_to_centiloid)

# slope, intercept as printed in the calibration tables
AMYLOID_ROWS = {"FBP": (194.8721, -191.8315), "FBB": (165.2828, -158.0409),
                "FTM": (141.1563, -128.3451), "NAV": (104.8498, -102.6445)}
TAU_ROWS = {"FTP": (16.9370, -19.1334), "RO": (17.2116, -20.0144),
            "MK": (12.2417, -12.7801), "GTP": (12.5556, -13.8899),
            "PBB3": (15.4067, -14.6334), "PI": (10.1753, -11.5909)}


def test_pib_anchors():
    assert abs(suvr_to_centiloid("PiB", 0.9659)) < 1e-6
    assert abs(suvr_to_centiloid("PiB", 1.8972) - 100) < 1e-6


def test_printed_rows_shipped_verbatim():
    reg = default_registry()
    for name, (m, b) in AMYLOID_ROWS.items():
        line = reg.get(name, Scale.CL)
        assert (line.slope, line.intercept) == (m, b)
    for name, (m, b) in TAU_ROWS.items():
        line = reg.get(name, Scale.CTRz)
        assert (line.slope, line.intercept) == (m, b)
    assert reg.printed[(Tracer.PiB, Scale.CL)] == (107.3768, -103.7152)


def test_conversion_examples():
    assert suvr_to_centiloid("FBB", 1.0) == pytest.approx(7.2419, abs=1e-9)
    assert suvr_to_centaurz("FTP", 1.0) == pytest.approx(-2.1964, abs=1e-9)
    assert suvr_to_centaurz("FTP", 1.2477) == pytest.approx(1.9989, abs=1e-4)
    assert suvr_to_centaurz("PI", 1.0) == pytest.approx(-1.4156, abs=1e-9)


def test_centaur_examples():
    assert suvr_to_centaur(0.2222) == 0.0
    assert suvr_to_centaur(0.9868) == pytest.approx(1.0, abs=1e-12)
    assert suvr_to_centaur(1.7514) == pytest.approx(2.0, abs=1e-12)


def test_wrong_scale_and_unknown_tracer():
    with pytest.raises(ScaleMismatch):
        suvr_to_centiloid("FTP", 1.2)
    with pytest.raises(ScaleMismatch):
        suvr_to_centaurz("PiB", 1.2)
    with pytest.raises(UnknownTracer):
        suvr_to_centiloid("XYZ", 1.2)
    assert suvr_to_centiloid("fbb", 1.0) == suvr_to_centiloid(Tracer.FBB, 1.0)


@given(st.sampled_from(sorted(AMYLOID_TRACERS | TAU_TRACERS)), st.floats(0.2, 4.0))
def test_lines_invert(tracer, suvr):
    scale = Scale.CL if tracer in AMYLOID_TRACERS else Scale.CTRz
    line = default_registry().get(tracer, scale)
    assert line.invert(line.apply(suvr)) == pytest.approx(suvr, abs=1e-12)
    assert line.suvr_slope * line.apply(suvr) + line.suvr_intercept == pytest.approx(suvr, abs=1e-12)


def test_fit_level1_examples():
    _, line = fit_level1([0.9659] * 3, [1.8972] * 4)
    assert line.slope == pytest.approx(107.3768, abs=1e-4)
    assert line.intercept == pytest.approx(-103.7152, abs=1e-4)
    _, line = fit_level1([1, 1], [2, 2])
    assert (line.slope, line.intercept) == (100.0, -100.0)
    anchors, line = fit_level1([0.9, 1.0], [1.8, 2.0])
    assert (anchors.mean_ycn_suvr, anchors.mean_ad_suvr) == pytest.approx((0.95, 1.9))
    assert line.slope == pytest.approx(105.2632, abs=1e-4)
    with pytest.raises(DegenerateAnchors):
        fit_level1([1.0], [1.0])


def test_fit_level2_identity_and_r2():
    _, l1 = fit_level1([0.9659], [1.8972])
    pib = np.linspace(0.9, 2.6, 25)
    line, r2 = fit_level2(pib, pib, l1, "FBB")
    assert line.slope == pytest.approx(l1.slope, rel=1e-12)
    assert line.intercept == pytest.approx(l1.intercept, rel=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_level2_recovers_fbp_with_full_precision_generator():
    # generator constants inverted from the printed FBP row to 7 digits
    _, l1 = fit_level1([0.9659], [1.8972])
    pib = np.linspace(0.9, 2.6, 40)
    line, _ = fit_level2(pib, 0.551012 * pib + 0.452175, l1, "FBP")
    assert line.slope == pytest.approx(194.8721, abs=1e-3)
    assert line.intercept == pytest.approx(-191.8315, abs=1e-3)


def _cl_data(slope, intercept, r2, n=60, seed=0):
    """Replicated CL with an exact OLS slope/intercept/R^2 against published CL."""
    rng = np.random.default_rng(seed)
    x = np.linspace(-20, 120, n)
    e = rng.normal(size=n)
    xc = x - x.mean()
    e = e - e.mean() - (e @ xc) / (xc @ xc) * xc
    sst_fit = slope ** 2 * (xc @ xc)
    e *= np.sqrt(sst_fit * (1 - r2) / r2 / (e @ e))
    return x, slope * x + intercept + e


def test_criteria_gate():
    rep = check_centiloid_criteria(*reversed(_cl_data(0.99, 0.57, 0.99)))
    assert rep.passed
    assert rep.slope == pytest.approx(0.99) and rep.r2 == pytest.approx(0.99)
    rep = check_centiloid_criteria(*reversed(_cl_data(0.97, 0.0, 0.999)))
    assert rep.failures == ("slope",)
    rep = check_centiloid_criteria(*reversed(_cl_data(1.0, 2.5, 0.999)))
    assert rep.failures == ("intercept",)
    rep = check_centiloid_criteria(*reversed(_cl_data(1.0, 0.0, 0.97)))
    assert rep.failures == ("r2",)


def test_criteria_boundaries_inclusive():
    x = np.linspace(0, 100, 11)
    assert check_centiloid_criteria(1.02 * x - 2.0, x).passed
    assert check_centiloid_criteria(0.98 * x + 2.0, x).passed


def test_fit_centaur_level1():
    ctr = np.linspace(-1, 8, 30)
    line = fit_centaur_level1(ctr, 0.7646 * ctr + 0.2222)
    assert line.suvr_slope == pytest.approx(0.7646, abs=1e-9)
    assert line.suvr_intercept == pytest.approx(0.2222, abs=1e-9)
    assert line.r2 == pytest.approx(1.0)
    ident = fit_centaur_level1(ctr, ctr)
    assert ident.slope == pytest.approx(1.0) and ident.intercept == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(line.apply(0.7646 * ctr + 0.2222), ctr, atol=1e-9)


def test_registry_rejects_inconsistent_pib(tmp_path):
    doc = {"lines": [{"tracer": "PiB", "scale": "CL", "slope": 100.0, "intercept": -100.0}]}
    p = tmp_path / "reg.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(RegistryInconsistent):
        Registry.load(p)
    assert Registry.load(p, verify=False).get("PiB", "CL").slope == 100.0
