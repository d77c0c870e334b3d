"""Dataset parsers, image I/O, synthetic domains, checkpoints."""

import struct

import numpy as np
import pytest

from invauto.configs import build_model
from invauto.data import (
    Dataset,
    load_digits_dataset,
    load_idx,
    load_image_folder,
    load_pnm,
    load_checkpoint,
    make_synthetic_domains,
    named_tensor_table,
    read_checkpoint_table,
    save_checkpoint,
    save_image,
    write_checkpoint_table,
)
from invauto.errors import CheckpointError, ContractError, FormatError
from invauto.optim import Adam


def write_idx_images(path, arr):
    # IDX3: magic 0x00000803, dims, then raw bytes
    n, h, w = arr.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, h, w))
        f.write(arr.astype(np.uint8).tobytes())


def test_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, (5, 4, 3), dtype=np.uint8)
    p = tmp_path / "imgs.idx"
    write_idx_images(p, raw)
    ds = load_idx(p, value_range=(0.0, 1.0))
    assert ds.items.shape == (5, 4, 3)
    assert np.allclose(ds.items * 255.0, raw, atol=0.5)
    assert ds.items.min() >= 0.0 and ds.items.max() <= 1.0


def test_idx_value_range_scaling(tmp_path):
    raw = np.array([[[0, 255]]], dtype=np.uint8)
    p = tmp_path / "two.idx"
    write_idx_images(p, raw)
    ds = load_idx(p, value_range=(-1.0, 1.0))
    assert np.isclose(ds.items.min(), -1.0)
    assert np.isclose(ds.items.max(), 1.0)


def test_idx_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(struct.pack(">IIII", 0xdead, 1, 2, 2) + b"\x00" * 4)
    with pytest.raises(FormatError):
        load_idx(p)


def test_idx_truncated_rejected(tmp_path):
    p = tmp_path / "short.idx"
    p.write_bytes(struct.pack(">IIII", 0x803, 2, 4, 4) + b"\x00" * 10)
    with pytest.raises(FormatError):
        load_idx(p)


def test_pnm_roundtrip_grayscale(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.uniform(-1, 1, (1, 6, 5)).astype(np.float32)
    p = tmp_path / "g.pgm"
    save_image(img, p)
    back = load_pnm(p)
    assert back.shape == (1, 6, 5)
    # 8-bit quantization bound on [-1, 1]
    assert np.abs(back - img).max() <= 2.0 / 255.0 + 1e-6


def test_pnm_roundtrip_color(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.uniform(-1, 1, (3, 4, 7)).astype(np.float32)
    p = tmp_path / "c.ppm"
    save_image(img, p)
    back = load_pnm(p)
    assert back.shape == (3, 4, 7)
    assert np.abs(back - img).max() <= 2.0 / 255.0 + 1e-6


def test_pnm_comment_handling(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x7f\xff\x40")
    img = load_pnm(p)
    assert img.shape == (1, 2, 2)


def test_pnm_bad_magic(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P7\n1 1\n255\n\x00")
    with pytest.raises(FormatError):
        load_pnm(p)


def test_load_image_folder_sorted(tmp_path):
    for name, val in (("b.pgm", 0.5), ("a.pgm", -0.5)):
        save_image(np.full((1, 3, 3), val, dtype=np.float32), tmp_path / name)
    ds = load_image_folder(tmp_path)
    assert ds.items.shape == (2, 1, 3, 3)
    # sorted by filename: a.pgm first
    assert ds.items[0].mean() < ds.items[1].mean()


def test_digits_dataset_split_and_range():
    train, test = load_digits_dataset()
    assert train.items.shape[1:] == (1, 8, 8)
    assert test.items.shape[1:] == (1, 8, 8)
    n = len(train.items) + len(test.items)
    assert abs(len(test.items) / n - 0.2) < 0.01
    assert train.items.min() >= -1.0 and train.items.max() <= 1.0
    # deterministic split
    train2, _ = load_digits_dataset()
    assert np.array_equal(train.items, train2.items)


def test_synthetic_invert_domains_ground_truth():
    ds_a, ds_b, pairs = make_synthetic_domains("invert", 10, 8, seed=0)
    a_ref, b_ref = pairs
    assert np.allclose(b_ref, -a_ref)
    assert ds_a.items.shape == (10, 3, 8, 8)


def test_synthetic_hue_shift_rolls_channels():
    _, _, pairs = make_synthetic_domains("hue-shift", 4, 8, seed=1)
    a_ref, b_ref = pairs
    assert np.allclose(b_ref, np.roll(a_ref, 1, axis=1))


def test_synthetic_unknown_kind():
    with pytest.raises(ContractError):
        make_synthetic_domains("nope", 4, 8, seed=0)


def test_checkpoint_save_load_save_byte_identical(tmp_path):
    m = build_model("invauto", "mlp", (64,), seed=0)
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(m, p1)
    m2 = build_model("invauto", "mlp", (64,), seed=5)
    load_checkpoint(p1, m2)
    save_checkpoint(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_restores_values_and_tying(tmp_path):
    m = build_model("invauto", "mlp", (64,), seed=0)
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    m2 = build_model("invauto", "mlp", (64,), seed=7)
    load_checkpoint(p, m2)
    for (n1, p1), (n2, p2) in zip(m.named_parameters(), m2.named_parameters()):
        assert n1 == n2
        assert np.array_equal(p1.data, p2.data)
    # loading must write into the shared storage, not replace it
    assert m2.diag_network.decoder.named_parameters() == []


def test_checkpoint_unknown_name_rejected(tmp_path):
    m = build_model("invauto", "mlp", (64,), seed=0)
    table = named_tensor_table(m)
    table["bogus.weight"] = np.zeros(3, dtype=np.float32)
    p = tmp_path / "x.ckpt"
    write_checkpoint_table(table, p)
    with pytest.raises(CheckpointError):
        load_checkpoint(p, build_model("invauto", "mlp", (64,), seed=0))


def test_checkpoint_reserved_prefixes_pass_through(tmp_path):
    m = build_model("invauto", "mlp", (64,), seed=0)
    opt = Adam(m.parameters())
    for param in opt.params:
        param.grad = np.zeros_like(param.data)
    opt.step()
    p = tmp_path / "s.ckpt"
    save_checkpoint(m, p, extra=dict(opt.state_tensors()))
    m2 = build_model("invauto", "mlp", (64,), seed=1)
    _, leftover = load_checkpoint(p, m2)
    assert any(k.startswith("adam.") for k in leftover)


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    m = build_model("invauto", "mlp", (64,), seed=0)
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    other = build_model("invauto", "mlp", (32,), seed=0)
    with pytest.raises(CheckpointError):
        load_checkpoint(p, other)


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "junk.ckpt"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        read_checkpoint_table(p)


def test_checkpoint_truncation(tmp_path):
    m = build_model("invauto", "mlp", (64,), seed=0)
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:len(raw) // 2])
    with pytest.raises(CheckpointError):
        read_checkpoint_table(p)


def test_checkpoint_float64_tensors(tmp_path):
    table = {"meta.x": np.arange(4, dtype=np.float64)}
    p = tmp_path / "f64.ckpt"
    write_checkpoint_table(table, p)
    back = read_checkpoint_table(p)
    assert back["meta.x"].dtype == np.float64
    assert np.array_equal(back["meta.x"], table["meta.x"])


def test_dataset_dataclass_fields():
    ds = Dataset(items=np.zeros((1, 1, 2, 2)), split="train",
                 normalization="[-1,1]")
    assert ds.split == "train"
    assert ds.normalization == "[-1,1]"
