import gzip

import numpy as np
import pytest

from atnquant.errors import (BadMagic, NonFiniteVoxels, TruncatedData,
                             UnsupportedDatatype, UnsupportedFormat)
from atnquant.nifti_io import (HEADER_DTYPE, HEADER_SIZE, SINGLE_FILE_OFFSET,
                               LabelVolume, VolumeImage, build_header, parse_nifti,
                               read_nifti, save_nifti, write_nifti)


def _file(data, dtype, slope=1.0, inter=0.0, affine=None, endian="<"):
    """Hand-assemble a single-file NIfTI-1 image."""
    affine = np.eye(4) if affine is None else affine
    hdr = np.frombuffer(build_header(data.shape, dtype, affine, (1.0, 1.0, 1.0),
                                     scl_slope=slope, scl_inter=inter),
                        dtype=HEADER_DTYPE.newbyteorder("<")).copy()
    body = np.asarray(data).astype(np.dtype(dtype).newbyteorder(endian)).tobytes(order="F")
    if endian == ">":
        hdr = hdr.astype(HEADER_DTYPE.newbyteorder(">"))
    return hdr.tobytes() + b"\0" * (SINGLE_FILE_OFFSET - HEADER_SIZE) + body


def test_zero_slope_means_raw_values():
    data = np.arange(64, dtype=np.float32).reshape(4, 4, 4)
    vol = parse_nifti(_file(data, np.float32, slope=0.0, inter=5.0))
    np.testing.assert_array_equal(vol.data, data)


def test_scaling_applied_to_int16():
    data = np.full((2, 2, 2), 3, dtype=np.int16)
    vol = parse_nifti(_file(data, np.int16, slope=2.0, inter=1.0))
    assert isinstance(vol, VolumeImage)
    assert np.all(vol.data == 7.0)


def test_round_trip_is_bit_identical():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(5, 6, 7)).astype(np.float32)
    aff = np.array([[2, 0, 0, -10], [0, 2, 0, 4], [0, 0, 2.5, 8], [0, 0, 0, 1]], float)
    vol = parse_nifti(write_nifti(VolumeImage(data, aff)))
    again = parse_nifti(write_nifti(vol))
    assert again.data.tobytes() == data.tobytes()
    np.testing.assert_array_equal(again.affine, aff)


def test_single_voxel_zero():
    vol = parse_nifti(write_nifti(VolumeImage(np.zeros((1, 1, 1)), np.eye(4))))
    assert vol.data.shape == (1, 1, 1) and vol.data[0, 0, 0] == 0


def test_mni_sized_data_section():
    raw = write_nifti(VolumeImage(np.zeros((181, 217, 181), np.float32), np.eye(4)))
    assert len(raw) - SINGLE_FILE_OFFSET == 181 * 217 * 181 * 4


def test_labels_round_trip_exact():
    data = np.zeros((3, 3, 3), dtype=np.int32)
    data[0], data[1] = 100, 101
    lab = parse_nifti(write_nifti(LabelVolume(data, np.eye(4))))
    assert isinstance(lab, LabelVolume)
    assert set(np.unique(lab.data)) == {0, 100, 101}
    np.testing.assert_array_equal(lab.data, data)


def test_x_index_is_fastest_on_disk():
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    raw = write_nifti(VolumeImage(data, np.eye(4)))
    body = np.frombuffer(raw[SINGLE_FILE_OFFSET:], dtype="<f4")
    assert body[1] == data[1, 0, 0]
    assert body[2] == data[0, 1, 0]


def test_big_endian_twin_reads_identically():
    data = np.arange(27, dtype=np.int16).reshape(3, 3, 3)
    little = parse_nifti(_file(data, np.int16, endian="<"), kind="image")
    big = parse_nifti(_file(data, np.int16, endian=">"), kind="image")
    np.testing.assert_array_equal(little.data, big.data)
    np.testing.assert_array_equal(little.affine, big.affine)


def test_gzip_autodetect_and_deterministic():
    vol = VolumeImage(np.ones((2, 2, 2)), np.eye(4))
    a, b = write_nifti(vol, gz=True), write_nifti(vol, gz=True)
    assert a == b and a[:2] == b"\x1f\x8b"
    np.testing.assert_array_equal(parse_nifti(a).data, vol.data)
    assert gzip.decompress(a) == write_nifti(vol)


def test_save_and_read_by_suffix(tmp_path):
    vol = VolumeImage(np.ones((2, 3, 4)), np.diag([2, 2, 2, 1.0]))
    save_nifti(vol, tmp_path / "v.nii.gz")
    got = read_nifti(tmp_path / "v.nii.gz")
    assert got.spacing == (2.0, 2.0, 2.0)
    np.testing.assert_array_equal(got.data, vol.data)


def test_bad_magic():
    raw = bytearray(write_nifti(VolumeImage(np.zeros((1, 1, 1)), np.eye(4))))
    raw[344:347] = b"xyz"
    with pytest.raises(BadMagic):
        parse_nifti(bytes(raw))


def test_nifti2_rejected():
    raw = bytearray(540 + 8)
    raw[:4] = np.int32(540).tobytes()
    with pytest.raises(UnsupportedFormat):
        parse_nifti(bytes(raw))


def test_unsupported_datatype():
    raw = bytearray(write_nifti(VolumeImage(np.zeros((1, 1, 1)), np.eye(4))))
    off = HEADER_DTYPE.fields["datatype"][1]
    raw[off:off + 2] = np.int16(32).tobytes()  # complex64
    with pytest.raises(UnsupportedDatatype):
        parse_nifti(bytes(raw))


def test_truncated_data():
    raw = write_nifti(VolumeImage(np.zeros((4, 4, 4)), np.eye(4)))
    with pytest.raises(TruncatedData):
        parse_nifti(raw[:-10])
    with pytest.raises(TruncatedData):
        parse_nifti(raw[:100])


def test_nan_policy():
    data = np.ones((2, 2, 2), np.float32)
    data[0, 0, 0] = np.nan
    raw = _file(data, np.float32)
    with pytest.raises(NonFiniteVoxels):
        parse_nifti(raw, strict=True)
    vol = parse_nifti(raw)
    assert vol.data[0, 0, 0] == 0
    assert "nonfinite_voxels_zeroed=1" in vol.qc


def test_four_d_rejected():
    raw = bytearray(write_nifti(VolumeImage(np.zeros((2, 2, 2)), np.eye(4))))
    off = HEADER_DTYPE.fields["dim"][1]
    raw[off:off + 16] = np.array([4, 2, 2, 1, 2, 1, 1, 1], "<i2").tobytes()
    with pytest.raises(UnsupportedFormat):
        parse_nifti(bytes(raw))


def test_qform_fallback():
    raw = bytearray(write_nifti(VolumeImage(np.zeros((2, 2, 2)), np.eye(4))))
    hdr = np.frombuffer(bytes(raw[:HEADER_SIZE]), dtype=HEADER_DTYPE.newbyteorder("<")).copy()
    hdr["sform_code"] = 0
    hdr["qform_code"] = 1
    hdr["pixdim"] = [1, 2, 3, 4, 0, 0, 0, 0]
    # 180 degrees about z: b=c=0, d=1
    hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"] = 0, 0, 1
    hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"] = 5, 6, 7
    vol = parse_nifti(hdr.tobytes() + bytes(raw[HEADER_SIZE:]))
    expect = np.array([[-2, 0, 0, 5], [0, -3, 0, 6], [0, 0, 4, 7], [0, 0, 0, 1]], float)
    np.testing.assert_allclose(vol.affine, expect, atol=1e-12)


def test_forced_dtype_must_fit():
    with pytest.raises(ValueError):
        write_nifti(LabelVolume(np.full((1, 1, 1), 300), np.eye(4)), dtype=np.uint8)


def test_matches_nibabel(tmp_path):
    nib = pytest.importorskip("nibabel")
    rng = np.random.default_rng(7)
    data = rng.normal(size=(6, 5, 4)).astype(np.float32)
    aff = np.array([[0, -2, 0, 30], [1.5, 0, 0, -20], [0, 0, 3, 11], [0, 0, 0, 1]], float)
    save_nifti(VolumeImage(data, aff), tmp_path / "a.nii")
    img = nib.load(str(tmp_path / "a.nii"))
    np.testing.assert_array_equal(np.asarray(img.dataobj), data)
    np.testing.assert_allclose(img.affine, aff, atol=1e-6)

    # and the other way round, with scaling
    raw = (rng.integers(-500, 500, size=(4, 5, 6))).astype(np.int16)
    out = nib.Nifti1Image(raw, aff)
    out.header.set_slope_inter(0.5, -3.0)
    nib.save(out, str(tmp_path / "b.nii.gz"))
    got = read_nifti(tmp_path / "b.nii.gz")
    np.testing.assert_allclose(got.data, raw * 0.5 - 3.0, rtol=0, atol=1e-6)
    np.testing.assert_allclose(got.affine, aff, atol=1e-6)
