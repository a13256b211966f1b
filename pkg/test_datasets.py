#!/usr/bin/env python3
"""
Tests for dataset ingestion, reformatting and synthetic data generation
"""

import struct

import numpy as np
import pytest
from PIL import Image

from resources.datasets import (
    ImageBatch,
    from_features,
    load_csv_features,
    load_dataset,
    load_idx,
    load_image_folder,
    reformat,
    save_idx,
    to_features,
)
from resources.synthetic import MixtureComponent, OutlierSpec, synth_gaussian_mixture, synth_outliers
from utils.errors import DataFormatError, DimensionMismatchError, ParameterError


def idx_bytes(magic, dims, payload):
    return struct.pack(f">I{len(dims)}I", magic, *dims) + bytes(payload)


def write_bytes(tmp_path, name, data):
    path = tmp_path / name
    path.write_bytes(data)
    return path


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def test_idx_images(tmp_path):
    data = bytes([0, 0, 8, 3]) + struct.pack(">III", 2, 2, 2) + bytes(range(8))
    batch = load_idx(write_bytes(tmp_path, "imgs.idx", data))
    assert isinstance(batch, ImageBatch)
    assert batch.pixels.shape == (2, 1, 2, 2)
    assert batch.pixels[1, 0].tolist() == [[4, 5], [6, 7]]


def test_idx_labels(tmp_path):
    labels = load_idx(write_bytes(tmp_path, "labels.idx", idx_bytes(2049, [5], [3, 1, 4, 1, 5])))
    assert labels.tolist() == [3, 1, 4, 1, 5]


@pytest.mark.parametrize("data, offset", [
    (b"\x00\x00", 2),
    (idx_bytes(1234, [1], [0]), 0),
    (struct.pack(">II", 2051, 2), 8),
    (idx_bytes(2051, [65536, 65536, 65536], []), 12),
    (idx_bytes(2049, [0], []), 4),
    (idx_bytes(2051, [2, 2, 2], range(5)), 21),
    (idx_bytes(2051, [2, 2, 2], range(9)), 24),
])
def test_idx_errors_report_offsets(tmp_path, data, offset):
    with pytest.raises(DataFormatError) as info:
        load_idx(write_bytes(tmp_path, "bad.idx", data))
    assert info.value.offset == offset


def test_idx_save_and_load(tmp_path, rng):
    batch = ImageBatch(rng.integers(0, 256, size=(4, 1, 3, 5), dtype=np.uint8))
    loaded = load_idx(save_idx(batch, tmp_path / "out.idx"))
    np.testing.assert_array_equal(loaded.pixels, batch.pixels)
    labels = load_idx(save_idx(np.array([0, 9, 255]), tmp_path / "labels.idx"))
    assert labels.tolist() == [0, 9, 255]


def test_image_batch_validation():
    with pytest.raises(ParameterError):
        ImageBatch(np.zeros((2, 2, 4, 4), dtype=np.uint8))
    with pytest.raises(ParameterError):
        ImageBatch(np.zeros((2, 1, 4, 4), dtype=np.float64))
    with pytest.raises(ParameterError):
        ImageBatch(np.zeros((1, 4, 4), dtype=np.uint8))


# ---------------------------------------------------------------------------
# CSV features
# ---------------------------------------------------------------------------

def test_csv_with_header_and_comments(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("# seed: 3\nf0,f1\n0.5,1\n\n2,-3e-2\n")
    np.testing.assert_array_equal(load_csv_features(path), [[0.5, 1.0], [2.0, -0.03]])


def test_csv_without_header(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("1,2,3\n4,5,6\n")
    assert load_csv_features(path).shape == (2, 3)


@pytest.mark.parametrize("body, line", [
    ("a,b\n1,2\n3,x\n", 3),
    ("1,2\n3,4,5\n", 2),
    ("1,2\nnan,4\n", 2),
])
def test_csv_errors_report_lines(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataFormatError) as info:
        load_csv_features(path)
    assert info.value.line == line


def test_csv_without_rows(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("f0,f1\n")
    with pytest.raises(DataFormatError, match="no data rows"):
        load_csv_features(path)


def test_csv_quoted_cells(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text('"f0","f1, scaled"\n"0.5",1\n')
    np.testing.assert_array_equal(load_csv_features(path), [[0.5, 1.0]])


def test_csv_invalid_utf8_reports_byte_offset(tmp_path):
    path = tmp_path / "bin.csv"
    path.write_bytes(b"1,2\n3,\xff\n")
    with pytest.raises(DataFormatError, match="UTF-8") as info:
        load_csv_features(path)
    assert info.value.offset == 6


# ---------------------------------------------------------------------------
# Features and reformatting
# ---------------------------------------------------------------------------

def test_to_features_extremes():
    white = ImageBatch(np.full((1, 1, 2, 2), 255, dtype=np.uint8))
    black = ImageBatch(np.zeros((1, 3, 2, 2), dtype=np.uint8))
    np.testing.assert_array_equal(to_features(white), np.ones((1, 4)))
    np.testing.assert_array_equal(to_features(black), np.zeros((1, 12)))


def test_features_round_trip_pixels(rng):
    batch = ImageBatch(rng.integers(0, 256, size=(6, 3, 4, 4), dtype=np.uint8))
    back = from_features(to_features(batch), 3, 4, 4)
    np.testing.assert_array_equal(back.pixels, batch.pixels)
    with pytest.raises(DimensionMismatchError):
        from_features(to_features(batch), 1, 4, 4)


def test_constant_image_stays_constant():
    batch = ImageBatch(np.full((2, 3, 32, 32), 77, dtype=np.uint8))
    for order in ("channels_first", "resize_first"):
        out = reformat(batch, 1, 28, 28, order=order)
        assert out.shape == (1, 28, 28)
        assert np.all(out.pixels == 77)
    assert to_features(reformat(batch, 1, 28, 28)).shape == (2, 784)


def test_luma_conversion():
    px = np.zeros((1, 3, 1, 2), dtype=np.uint8)
    px[0, :, 0, 0] = 255
    px[0, 0, 0, 1] = 255
    gray = reformat(ImageBatch(px), 1, 1, 2).pixels
    assert gray[0, 0, 0].tolist() == [255, 76]


def test_gray_to_rgb_replicates():
    gray = ImageBatch(np.arange(16, dtype=np.uint8).reshape(1, 1, 4, 4))
    rgb = reformat(gray, 3, 4, 4)
    assert rgb.shape == (3, 4, 4)
    for c in range(3):
        np.testing.assert_array_equal(rgb.pixels[0, c], gray.pixels[0, 0])


def test_bilinear_resize_keeps_corners():
    px = np.array([[[[0, 100], [200, 255]]]], dtype=np.uint8)
    up = reformat(ImageBatch(px), 1, 3, 3).pixels[0, 0]
    assert up[0, 0] == 0 and up[0, 2] == 100 and up[2, 0] == 200 and up[2, 2] == 255
    assert up[0, 1] == 50


def test_reformat_rejects_bad_targets():
    batch = ImageBatch(np.zeros((1, 1, 2, 2), dtype=np.uint8))
    with pytest.raises(ParameterError):
        reformat(batch, 2, 2, 2)
    with pytest.raises(ParameterError):
        reformat(batch, 1, 0, 2)
    with pytest.raises(ParameterError):
        reformat(batch, 1, 2, 2, order="sideways")


# ---------------------------------------------------------------------------
# Image folders and dispatch
# ---------------------------------------------------------------------------

def test_image_folder(tmp_path, rng):
    arrays = [rng.integers(0, 256, size=(4, 5), dtype=np.uint8) for _ in range(3)]
    for i, a in enumerate(arrays):
        Image.fromarray(a, mode="L").save(tmp_path / f"img_{i}.png")
    (tmp_path / "notes.txt").write_text("not an image")
    batch = load_image_folder(tmp_path)
    assert batch.pixels.shape == (3, 1, 4, 5)
    for i, a in enumerate(arrays):
        np.testing.assert_array_equal(batch.pixels[i, 0], a)


def test_image_folder_rgba_becomes_rgb(tmp_path):
    Image.new("RGBA", (3, 2), (10, 20, 30, 255)).save(tmp_path / "a.png")
    batch = load_image_folder(tmp_path)
    assert batch.shape == (3, 2, 3)
    assert batch.pixels[0, :, 0, 0].tolist() == [10, 20, 30]


def test_image_folder_rejects_mixed_sizes(tmp_path):
    Image.new("L", (3, 3)).save(tmp_path / "a.png")
    Image.new("L", (4, 3)).save(tmp_path / "b.png")
    with pytest.raises(DataFormatError):
        load_image_folder(tmp_path)


def test_load_dataset_dispatch(tmp_path):
    csv = tmp_path / "x.csv"
    csv.write_text("1,2\n3,4\n")
    assert load_dataset(csv).shape == (2, 2)

    idx = write_bytes(tmp_path, "x.idx", idx_bytes(2051, [2, 2, 2], [255] * 8))
    np.testing.assert_array_equal(load_dataset(idx), np.ones((2, 4)))

    folder = tmp_path / "imgs"
    folder.mkdir()
    Image.new("L", (2, 2), 0).save(folder / "a.png")
    np.testing.assert_array_equal(load_dataset(folder), np.zeros((1, 4)))

    with pytest.raises(DataFormatError):
        load_dataset(tmp_path / "missing.csv")


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def test_mixture_is_seeded_and_ordered():
    components = [MixtureComponent([0.0, 0.0], 0.1, 50), MixtureComponent([5.0, 5.0], [0.1, 0.2], 30)]
    a = synth_gaussian_mixture(components, seed=1)
    b = synth_gaussian_mixture(components, seed=1)
    c = synth_gaussian_mixture(components, seed=2)
    assert a.shape == (80, 2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(np.abs(a[:50]) < 1.0)
    assert np.all(np.abs(a[50:] - 5.0) < 2.0)


def test_mixture_mean_within_five_standard_errors():
    mean = np.array([0.3, 0.7, 0.5])
    deviation = np.array([0.1, 0.05, 0.2])
    draws = synth_gaussian_mixture([MixtureComponent(mean, deviation, 10_000)], seed=7)
    standard_error = deviation / np.sqrt(10_000)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 5 * standard_error)


def test_mixture_component_validation():
    with pytest.raises(ParameterError):
        MixtureComponent([0.0], 0.0, 5)
    with pytest.raises(ParameterError):
        MixtureComponent([0.0], 1.0, 0)
    with pytest.raises(DimensionMismatchError):
        MixtureComponent([0.0, 0.0], [1.0, 1.0, 1.0], 5)
    with pytest.raises(DimensionMismatchError):
        synth_gaussian_mixture([MixtureComponent([0.0], 1.0, 2), MixtureComponent([0.0, 0.0], 1.0, 2)])


@pytest.mark.parametrize("kind", ["uniform_noise", "gaussian_noise"])
def test_noise_outliers(kind):
    rows = synth_outliers(OutlierSpec(kind, 200, seed=3), 16)
    assert rows.shape == (200, 16)
    assert rows.min() >= 0.0 and rows.max() <= 1.0
    np.testing.assert_array_equal(rows, synth_outliers(OutlierSpec(kind, 200, seed=3), 16))


def test_outlier_spec_validation():
    with pytest.raises(ParameterError):
        OutlierSpec("salt_and_pepper", 5)
    with pytest.raises(ParameterError):
        OutlierSpec("uniform_noise", 0)
    with pytest.raises(ParameterError):
        OutlierSpec("external_dataset", 5)


def test_external_csv_outliers(tmp_path, rng):
    source = rng.uniform(size=(10, 4))
    path = tmp_path / "ext.csv"
    path.write_text("\n".join(",".join(repr(v) for v in row) for row in source) + "\n")
    rows = synth_outliers(OutlierSpec("external_dataset", 3, seed=5, source=str(path)), 4)
    assert rows.shape == (3, 4)
    assert all(any(np.array_equal(r, s) for s in source) for r in rows)
    with pytest.raises(ParameterError, match="count"):
        synth_outliers(OutlierSpec("external_dataset", 11, source=str(path)), 4)
    with pytest.raises(DimensionMismatchError):
        synth_outliers(OutlierSpec("external_dataset", 3, source=str(path)), 5)


def test_external_image_outliers_are_reformatted(tmp_path, rng):
    batch = ImageBatch(rng.integers(0, 256, size=(5, 1, 6, 6), dtype=np.uint8))
    path = save_idx(batch, tmp_path / "digits.idx")
    rows = synth_outliers(OutlierSpec("external_dataset", 4, source=str(path)), (3, 8, 8))
    assert rows.shape == (4, 192)
    with pytest.raises(ParameterError):
        synth_outliers(OutlierSpec("external_dataset", 4, source=str(path)), 64)
