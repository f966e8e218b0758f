import numpy as np
import pytest

from atnquant.geometry import MNI_AFFINE, MNI_DIMS
from atnquant.nifti_io import LabelVolume, VolumeImage, save_nifti
from atnquant.roiquant import load_masks
from atnquant.data import data_path


def mni_phantom(target_uptake=1.8, ref_uptake=0.9, tau_target=None, tau_ref=None):
    """Label map on the MNI grid where every centiloid/centaur target label and
    the cerebellum labels occupy their own slab of voxels."""
    masks = load_masks(data_path("masks.json"))
    cl, ctr = masks["centiloid"], masks["centaur"]
    labels = np.zeros(MNI_DIMS, dtype=np.int32)
    ordered = sorted(cl.target_labels | ctr.target_labels | cl.reference_labels)
    # 3-voxel thick x-slabs in the centre of the field, far from the edges
    for i, lab in enumerate(ordered):
        x0 = 20 + 3 * i
        labels[x0:x0 + 3, 60:120, 60:120] = lab
    amy = np.zeros(MNI_DIMS, dtype=np.float32)
    amy[np.isin(labels, list(cl.target_labels))] = target_uptake
    amy[np.isin(labels, list(cl.reference_labels))] = ref_uptake
    out = [VolumeImage(amy, MNI_AFFINE), LabelVolume(labels, MNI_AFFINE)]
    if tau_target is not None:
        tau = np.zeros(MNI_DIMS, dtype=np.float32)
        tau[np.isin(labels, list(ctr.target_labels))] = tau_target
        tau[np.isin(labels, list(ctr.reference_labels))] = tau_ref
        # whole-cerebellum extras (WM) are not part of the tau reference
        out.append(VolumeImage(tau, MNI_AFFINE))
    return out


@pytest.fixture(scope="session")
def mni_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("mni")
    amy, labels, tau = mni_phantom(1.8, 0.9, tau_target=2.0, tau_ref=1.0)
    save_nifti(amy, d / "amy.nii.gz")
    save_nifti(labels, d / "labels.nii.gz")
    save_nifti(tau, d / "tau.nii.gz")
    (d / "volumes.csv").write_text(
        "structure,volume_mm3\nicv,1500000\nleft_hippocampus,1700\nright_hippocampus,1800\n"
        "left_amygdala,850\nright_amygdala,900\nleft_inferior_lateral_ventricle,600\n"
        "right_inferior_lateral_ventricle,650\n")
    return d


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
