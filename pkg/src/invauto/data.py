"""Dataset ingestion, synthetic domain pairs, and checkpoint persistence.

Interchange formats are deliberately minimal and bit-exact: IDX (big-endian),
binary PGM (P5) / PPM (P6), and the in-house checkpoint container.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ContractError, FormatError


@dataclass
class Dataset:
    items: np.ndarray          # (N, ...) float array, all items one shape
    split: str = "train"
    normalization: str = "[-1,1]"


# -- IDX ------------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def load_idx(path, value_range=(0.0, 1.0), split: str = "train") -> Dataset:
    """Parse a big-endian IDX file of u8 images (or labels) into a Dataset."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated IDX dimension table")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = int(np.prod(dims))
    payload = raw[header_len:]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, "
                          f"dims require {expected}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(dims).astype(np.float64)
    if magic == IDX_LABELS_MAGIC:
        return Dataset(data, split, "labels")
    lo, hi = value_range
    scaled = data / 255.0 * (hi - lo) + lo
    return Dataset(scaled, split, f"[{lo:g},{hi:g}]")


# -- netpbm images ----------------------------------------------------------------


def _read_pnm_header(raw: bytes, path):
    if raw[:2] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported magic {raw[:2]!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        fields.append(int(raw[start:pos]))
    return raw[:2], fields[0], fields[1], fields[2], pos + 1


def load_pnm(path) -> np.ndarray:
    """Decode a binary PGM/PPM file to a (C, H, W) array in [-1, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, width, height, maxval, offset = _read_pnm_header(raw, path)
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported")
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    payload = raw[offset:]
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(payload[:expected], dtype=np.uint8)
    img = pixels.reshape(height, width, channels).transpose(2, 0, 1)
    return img.astype(np.float64) / 255.0 * 2.0 - 1.0


def save_image(tensor: np.ndarray, path) -> None:
    """Write a (C, H, W) array in [-1, 1] as PGM (C=1) or PPM (C=3),
    clamping out-of-range values."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise FormatError(f"expected (1|3, H, W) image, got shape {arr.shape}")
    pixels = np.clip((arr + 1.0) / 2.0 * 255.0, 0, 255)
    pixels = np.round(pixels).astype(np.uint8).transpose(1, 2, 0)
    magic = b"P5" if arr.shape[0] == 1 else b"P6"
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{arr.shape[2]} {arr.shape[1]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def load_image_folder(path, split: str = "train") -> Dataset:
    """Load every .pgm/.ppm file under a folder, sorted by name."""
    names = sorted(n for n in os.listdir(path)
                   if n.lower().endswith((".pgm", ".ppm")))
    if not names:
        raise FormatError(f"{path}: no PGM/PPM files found")
    images = [load_pnm(os.path.join(path, n)) for n in names]
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise FormatError(f"{path}: inconsistent image shapes {sorted(shapes)}")
    return Dataset(np.stack(images), split, "[-1,1]")


def load_digits_dataset(value_range=(-1.0, 1.0), test_fraction: float = 0.2,
                        seed: int = 0):
    """The bundled scikit-learn 8x8 handwritten digits, split train/test.

    Serves as the desk-scale stand-in when no MNIST IDX files are available.
    """
    from sklearn.datasets import load_digits
    images = load_digits().images / 16.0
    lo, hi = value_range
    images = images[:, None, :, :] * (hi - lo) + lo
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(images))
    n_test = int(len(images) * test_fraction)
    norm = f"[{lo:g},{hi:g}]"
    return (Dataset(images[order[n_test:]], "train", norm),
            Dataset(images[order[:n_test]], "test", norm))


# -- synthetic domain pairs ---------------------------------------------------------

SYNTHETIC_KINDS = ("invert", "hue-shift", "affine-brightness")


def _random_blobs(rng: np.random.Generator, n: int, channels: int, size: int) -> np.ndarray:
    """Smooth images from a few random Gaussian bumps, normalized to [-1, 1].

    Bump amplitudes are strictly positive so the source domain is sign-skewed:
    transformed domains (negation, channel rolls) then differ from it in
    distribution, which is what makes unpaired translation learnable."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    imgs = np.zeros((n, channels, size, size))
    for i in range(n):
        for c in range(channels):
            for _ in range(4):
                cx, cy = rng.uniform(0, 1, 2)
                s = rng.uniform(0.08, 0.3)
                a = rng.uniform(0.2, 1.0)
                imgs[i, c] += a * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
    peak = np.abs(imgs).max(axis=(1, 2, 3), keepdims=True)
    return imgs / np.maximum(peak, 1e-8)


def make_synthetic_domains(kind: str, n: int, size: int, seed: int,
                           channels: int = 3):
    """Generate a deterministic (A, B, ground-truth pairs) triple.

    The returned datasets are shuffled independently so training sees
    unpaired samples; the aligned arrays are kept for paired evaluation.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ContractError(f"unknown synthetic kind {kind!r}")
    rng = np.random.default_rng(seed)
    a = _random_blobs(rng, n, channels, size)
    if kind == "invert":
        b = -a
    elif kind == "hue-shift":
        if channels < 2:
            raise ContractError("hue-shift needs at least 2 channels")
        b = np.roll(a, 1, axis=1)
    else:
        b = np.clip(0.6 * a + 0.3, -1.0, 1.0)
    ds_a = Dataset(a[rng.permutation(n)], "train")
    ds_b = Dataset(b[rng.permutation(n)], "train")
    return ds_a, ds_b, (a, b)


# -- checkpoints ----------------------------------------------------------------------

CHECKPOINT_MAGIC = b"IVAE"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {0: np.float32, 1: np.float64}
_CODE_OF_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def named_tensor_table(model) -> dict:
    """Model parameters keyed by name; tied parameters appear once under
    their first (encoder-side) name."""
    table = {}
    seen = set()
    for name, p in model.named_parameters():
        if id(p) in seen:
            continue
        seen.add(id(p))
        table[name] = p.data
    return table


def write_checkpoint_table(table: dict, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(table)))
        for name, arr in table.items():
            arr = np.ascontiguousarray(arr)
            code = _CODE_OF_DTYPE.get(arr.dtype)
            if code is None:
                raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
            blob = name.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_checkpoint_table(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, count = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 12
    table = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack("<I", raw[pos:pos + 4])
            pos += 4
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            code, rank = struct.unpack("<BB", raw[pos:pos + 2])
            pos += 2
            dims = struct.unpack(f"<{rank}Q", raw[pos:pos + 8 * rank])
            pos += 8 * rank
            dtype = np.dtype(_DTYPE_CODES[code]).newbyteorder("<")
            nbytes = int(np.prod(dims)) * dtype.itemsize
            if pos + nbytes > len(raw):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            table[name] = np.frombuffer(raw[pos:pos + nbytes], dtype=dtype) \
                .reshape(dims).astype(_DTYPE_CODES[code])
            pos += nbytes
    except (struct.error, KeyError) as exc:
        raise CheckpointError(f"{path}: malformed record ({exc})") from exc
    return table


def save_checkpoint(model, path, extra: dict = None) -> None:
    table = named_tensor_table(model)
    if extra:
        table.update(extra)
    write_checkpoint_table(table, path)


def load_checkpoint(path, model):
    """Load parameter values into a model of matching construction.

    Tied layers keep sharing the single stored copy: the stored array is
    written into the one Parameter buffer both roles reference.
    Returns (model, leftover) where leftover holds non-parameter records
    (e.g. optimizer state).
    """
    table = read_checkpoint_table(path)
    names = named_tensor_table(model)
    leftover = {}
    for name, arr in table.items():
        if name not in names:
            # optimizer/bookkeeping records ride along under reserved prefixes
            if name.startswith(("adam.", "meta.")):
                leftover[name] = arr
                continue
            raise CheckpointError(f"{name}: no such parameter in the model")
        target = names[name]
        if tuple(arr.shape) != tuple(target.shape):
            raise CheckpointError(
                f"{name}: stored shape {arr.shape} != model shape {target.shape}")
        target[...] = arr
    missing = set(names) - set(table)
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {sorted(missing)}")
    return model, leftover
