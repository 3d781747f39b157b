import itertools
import struct

import numpy as np
import pytest

from smoothcert.datasets import (
    LabeledDataset,
    class_templates,
    gen_synthetic,
    load_idx,
    load_split,
    save_split,
)
from smoothcert.numerics import FormatError


def write_idx(tmp_path, pixels, labels, rows, cols, img_magic=0x803, lab_magic=0x801, n_img=None, n_lab=None):
    n = len(labels)
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx"
    img.write_bytes(struct.pack(">IIII", img_magic, n if n_img is None else n_img, rows, cols) + bytes(pixels))
    lab.write_bytes(struct.pack(">II", lab_magic, n if n_lab is None else n_lab) + bytes(labels))
    return img, lab


def test_zero_jitter_reproduces_templates():
    ds = gen_synthetic(5, num_classes=6, side=10, seed=3, jitter=0.0)
    templates = class_templates(6, 10)
    for x, y in zip(ds.inputs, ds.labels):
        np.testing.assert_array_equal(x, templates[y])


def test_same_seed_same_data():
    a, b = gen_synthetic(7, 4, 9, seed=11), gen_synthetic(7, 4, 9, seed=11)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.inputs, gen_synthetic(7, 4, 9, seed=12).inputs)


def test_inputs_in_range_and_every_class_present():
    for side in (8, 12, 16):
        ds = gen_synthetic(3, 8, side, seed=side, jitter=0.5)
        assert np.abs(ds.inputs).max() <= 1.0
        assert ds.covers_all_classes() and ds.dim == side * side


def test_templates_are_pairwise_distinct_for_all_sizes():
    for side in range(8, 17):
        t = class_templates(8, side)
        gaps = [np.linalg.norm(t[i] - t[j]) for i, j in itertools.combinations(range(8), 2)]
        assert min(gaps) > 5.0


def test_nearest_template_classifier_is_perfect():
    ds = gen_synthetic(50, 2, 12, seed=0)
    t = class_templates(2, 12)
    # margin: template gap exceeds 10x the expected jitter norm 0.1 * sqrt(d)
    assert np.linalg.norm(t[0] - t[1]) > 10 * 0.1 * np.sqrt(ds.dim)
    d2 = ((ds.inputs[:, None, :] - t[None]) ** 2).sum(-1)
    assert np.mean(d2.argmin(1) == ds.labels) == 1.0


def test_argument_ranges():
    for kw in (dict(num_classes=1), dict(num_classes=9), dict(side=7), dict(side=17)):
        with pytest.raises(ValueError):
            gen_synthetic(2, **{"num_classes": 2, "side": 8, **kw})


def test_idx_pixel_mapping(tmp_path):
    img, lab = write_idx(tmp_path, [0, 255, 127, 128], [3], 2, 2)
    ds = load_idx(img, lab)
    np.testing.assert_allclose(ds.inputs[0], [-1.0, 1.0, 127 / 127.5 - 1, 128 / 127.5 - 1], rtol=0, atol=1e-15)
    assert ds.inputs[0][2] == pytest.approx(-0.00392156862745098)
    assert ds.labels.tolist() == [3] and ds.side == 2


def test_idx_max_items(tmp_path):
    n = 60
    img, lab = write_idx(tmp_path, np.arange(n * 4) % 256, np.arange(n) % 10, 2, 2)
    assert len(load_idx(img, lab, max_items=10)) == 10
    assert len(load_idx(img, lab)) == n


@pytest.mark.parametrize("kw,field", [
    (dict(img_magic=0x801), "images: magic"),
    (dict(lab_magic=0x803), "labels: magic"),
    (dict(n_lab=2), "item count"),
    (dict(n_img=5, n_lab=5), "images: pixel payload"),
])
def test_idx_format_errors(tmp_path, kw, field):
    img, lab = write_idx(tmp_path, [0, 1, 2, 3], [1], 2, 2, **kw)
    with pytest.raises(FormatError, match=field):
        load_idx(img, lab)


def test_idx_truncated_header(tmp_path):
    (tmp_path / "i").write_bytes(b"\x00\x00\x08")
    (tmp_path / "l").write_bytes(struct.pack(">II", 0x801, 0))
    with pytest.raises(FormatError, match="truncated header"):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_split_file_round_trip(tmp_path):
    ds = gen_synthetic(4, 3, 8, seed=1)
    path = tmp_path / "d.scd"
    save_split(ds, path)
    raw = path.read_bytes()
    assert raw[:4] == b"SCD1" and struct.unpack_from("<III", raw, 4) == (12, 64, 3)
    back = load_split(path)
    np.testing.assert_array_equal(back.inputs, ds.inputs)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.num_classes == 3 and back.side == 8
    path.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        load_split(path)


def test_dataset_invariants_enforced():
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[2.0]]), [0], 2)
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((1, 2)), [2], 2)
