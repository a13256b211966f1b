#!/usr/bin/env python3
"""
Dataset ingestion and reformatting

Sources: IDX binaries (MNIST layout), numeric feature CSVs and folders of
8-bit grayscale/RGB images. Images are held as uint8 arrays shaped
(count, channels, height, width) and become [0,1] feature rows via
to_features.
"""

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from utils.errors import DataFormatError, DimensionMismatchError, ParameterError
from utils.files import atomic_write_bytes, iter_csv_rows
from utils.linalg import as_feature_matrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
# 2**40 pixels is far past any real IDX file; larger headers are corrupt
IDX_MAX_ITEMS = 1 << 40

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".pgm", ".ppm"}
REFORMAT_ORDERS = ("channels_first", "resize_first")

# ITU-R BT.601 luma
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImageBatch:
    """uint8 pixels, sample-major then channel-major then row-major"""
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 4:
            raise ParameterError("pixels", f"expected (count, channels, height, width), got shape {px.shape}")
        if px.shape[1] not in (1, 3):
            raise ParameterError("channels", f"must be 1 or 3, got {px.shape[1]}")
        if min(px.shape) < 1:
            raise ParameterError("pixels", f"every dimension must be positive, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise ParameterError("pixels", f"expected uint8 pixels, got {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[2]

    @property
    def width(self) -> int:
        return self.pixels.shape[3]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.channels, self.height, self.width


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def load_idx(path: PathLike) -> Union[ImageBatch, np.ndarray]:
    """
    Parse an IDX file: 2051 yields an ImageBatch with one channel, 2049 a
    uint8 label vector. Every error reports the byte offset it was found at.
    """
    path = str(path)
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise DataFormatError(path, f"truncated header: {len(data)} bytes", offset=len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IDX_IMAGE_MAGIC:
        ndim = 3
    elif magic == IDX_LABEL_MAGIC:
        ndim = 1
    else:
        raise DataFormatError(path, f"bad magic {magic}, expected {IDX_IMAGE_MAGIC} or {IDX_LABEL_MAGIC}", offset=0)

    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise DataFormatError(path, f"truncated dimension header: need {header_len} bytes", offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    total = 1
    for i, d in enumerate(dims):
        total *= d
        if total > IDX_MAX_ITEMS:
            raise DataFormatError(path, f"dimension overflow: sizes {dims} exceed {IDX_MAX_ITEMS} items",
                                  offset=4 + 4 * i)
    if total == 0:
        raise DataFormatError(path, f"empty payload: sizes {dims}", offset=4)

    end = header_len + total
    if len(data) < end:
        raise DataFormatError(path, f"truncated payload: sizes {dims} need {total} bytes, "
                                    f"found {len(data) - header_len}", offset=len(data))
    if len(data) > end:
        raise DataFormatError(path, f"{len(data) - end} trailing bytes after payload", offset=end)

    payload = np.frombuffer(data, dtype=np.uint8, count=total, offset=header_len)
    if ndim == 1:
        logger.info("Loaded %d labels from %s", total, path)
        return payload.copy()
    count, rows, cols = dims
    logger.info("Loaded %d images of %dx%d from %s", count, rows, cols, path)
    return ImageBatch(payload.reshape(count, 1, rows, cols).copy())


def dump_idx(obj: Union[ImageBatch, np.ndarray]) -> bytes:
    if isinstance(obj, ImageBatch):
        if obj.channels != 1:
            raise ParameterError("channels", "IDX image files hold single-channel images")
        header = struct.pack(">IIII", IDX_IMAGE_MAGIC, obj.count, obj.height, obj.width)
        return header + np.ascontiguousarray(obj.pixels).tobytes()
    labels = np.asarray(obj)
    if labels.ndim != 1 or labels.size < 1:
        raise ParameterError("labels", f"expected a non-empty label vector, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() > 255:
        raise ParameterError("labels", "labels must fit in one unsigned byte")
    return struct.pack(">II", IDX_LABEL_MAGIC, labels.size) + labels.astype(np.uint8).tobytes()


def save_idx(obj: Union[ImageBatch, np.ndarray], path: PathLike) -> Path:
    return atomic_write_bytes(path, dump_idx(obj))


# ---------------------------------------------------------------------------
# CSV features
# ---------------------------------------------------------------------------

def _parse_row(cells: List[str]) -> List[float]:
    return [float(c) for c in cells]


def load_csv_features(path: PathLike) -> np.ndarray:
    """Rectangular numeric CSV; a non-numeric first line is a header"""
    rows: List[List[float]] = []
    width = None
    first = True
    for lineno, cells in iter_csv_rows(path):
        try:
            values = _parse_row(cells)
        except ValueError:
            if first:
                first = False
                continue
            bad = next(c for c in cells if not _is_number(c))
            raise DataFormatError(path, f"non-numeric cell {bad!r}", line=lineno)
        first = False
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DataFormatError(path, f"ragged row: expected {width} cells, got {len(values)}", line=lineno)
        if not all(np.isfinite(values)):
            raise DataFormatError(path, "non-finite value", line=lineno)
        rows.append(values)
    if not rows:
        raise DataFormatError(path, "no data rows")
    return np.array(rows, dtype=np.float64)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Image folders
# ---------------------------------------------------------------------------

def load_image_folder(path: PathLike) -> ImageBatch:
    """One image per file, sorted by name; all must share size and channel count"""
    from PIL import Image

    folder = Path(path)
    if not folder.is_dir():
        raise DataFormatError(str(folder), "not a directory")
    files = sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise DataFormatError(str(folder), "no image files found")

    arrays = []
    expected = None
    for p in files:
        try:
            with Image.open(p) as img:
                if img.mode in ("1", "LA"):
                    img = img.convert("L")
                elif img.mode in ("P", "RGBA", "CMYK"):
                    img = img.convert("RGB")
                if img.mode not in ("L", "RGB"):
                    raise DataFormatError(str(p), f"unsupported image mode {img.mode}")
                arr = np.asarray(img, dtype=np.uint8)
        except OSError as e:
            raise DataFormatError(str(p), f"unreadable image: {e}")
        arr = arr[np.newaxis] if arr.ndim == 2 else np.transpose(arr, (2, 0, 1))
        if expected is None:
            expected = arr.shape
        elif arr.shape != expected:
            raise DataFormatError(str(p), f"image shape {arr.shape} differs from {expected}")
        arrays.append(arr)
    logger.info("Loaded %d images of shape %s from %s", len(arrays), expected, folder)
    return ImageBatch(np.stack(arrays))


# ---------------------------------------------------------------------------
# Features and reformatting
# ---------------------------------------------------------------------------

def to_features(b: ImageBatch) -> np.ndarray:
    return b.pixels.reshape(b.count, -1).astype(np.float64) / 255.0


def _round_to_pixels(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def from_features(matrix, channels: int, height: int, width: int) -> ImageBatch:
    m = as_feature_matrix(matrix, "features")
    if m.shape[1] != channels * height * width:
        raise DimensionMismatchError("features", (m.shape[1],), (channels, height, width))
    return ImageBatch(_round_to_pixels(m * 255.0).reshape(m.shape[0], channels, height, width))


def _convert_channels(px: np.ndarray, target: int) -> np.ndarray:
    source = px.shape[1]
    if source == target:
        return px
    if source == 3:
        return np.einsum("nchw,c->nhw", px, LUMA_WEIGHTS)[:, np.newaxis]
    return np.repeat(px, 3, axis=1)


def _axis_samples(src: int, dst: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Corner-aligned sample positions: lower index, upper index, fraction"""
    if dst == 1:
        pos = np.array([(src - 1) / 2.0])
    else:
        pos = np.linspace(0.0, src - 1, dst)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def _resize(px: np.ndarray, height: int, width: int) -> np.ndarray:
    if px.shape[2:] == (height, width):
        return px
    lo, hi, fy = _axis_samples(px.shape[2], height)
    rows = px[:, :, lo, :] * (1.0 - fy)[:, np.newaxis] + px[:, :, hi, :] * fy[:, np.newaxis]
    lo, hi, fx = _axis_samples(px.shape[3], width)
    return rows[..., lo] * (1.0 - fx) + rows[..., hi] * fx


def reformat(b: ImageBatch, target_channels: int, target_h: int, target_w: int,
             order: str = "channels_first") -> ImageBatch:
    """
    Convert channels (BT.601 luma for RGB to gray, replication for gray to
    RGB) and resize bilinearly with corner-aligned sampling. Intermediate
    values stay in floating point; pixels are rounded half up once at the end.
    """
    if target_channels not in (1, 3):
        raise ParameterError("target_channels", f"must be 1 or 3, got {target_channels}")
    if target_h < 1 or target_w < 1:
        raise ParameterError("target_size", f"must be positive, got {target_h}x{target_w}")
    if order not in REFORMAT_ORDERS:
        raise ParameterError("order", f"must be one of {REFORMAT_ORDERS}, got {order!r}")

    px = b.pixels.astype(np.float64)
    if order == "channels_first":
        px = _resize(_convert_channels(px, target_channels), target_h, target_w)
    else:
        px = _convert_channels(_resize(px, target_h, target_w), target_channels)
    return ImageBatch(_round_to_pixels(px))


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def load_images(path: PathLike) -> ImageBatch:
    """Image-shaped source: a folder of images or an IDX image file"""
    if os.path.isdir(path):
        return load_image_folder(path)
    loaded = load_idx(path)
    if not isinstance(loaded, ImageBatch):
        raise DataFormatError(str(path), "expected an image file, found IDX labels")
    return loaded


def load_dataset(path: PathLike) -> np.ndarray:
    """Feature matrix from a .csv file, an image folder or an IDX image file"""
    if not os.path.exists(path):
        raise DataFormatError(str(path), "no such file or directory")
    if str(path).lower().endswith(".csv"):
        m = load_csv_features(path)
        logger.info("Loaded %d x %d features from %s", m.shape[0], m.shape[1], path)
        return m
    return to_features(load_images(path))
