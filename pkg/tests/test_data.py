import gzip
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import MNIST_DIR
from encfree.data import (Dataset, SimConfig, SimDataset, export_csv, load_dataset, load_idx, read_csv_matrix,
                          regulatory_expression, sample_adjacency, save_dataset, simulate, subsample, write_idx)
from encfree.errors import ConfigError, ConsistencyError, FormatError, LengthError, SizeError, VersionError
from encfree.numkit import Rng


def idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)


# simulator

def test_identity_graph_gives_x_equal_z():
    Z = Rng(0).gamma(2.0, 1.0, (50, 4))
    assert np.array_equal(regulatory_expression(Z, np.eye(4), np.eye(4)), Z)


def test_hand_evaluated_case():
    x = regulatory_expression(np.array([[1.0, 2.0]]), np.ones((2, 2)), np.array([[1.0, -1.0], [0.5, 0.5]]))
    assert x.tolist() == [[0.0, 1.5]]


def test_connectivity_concentration():
    A = sample_adjacency(Rng(0), 1000, 100, 0.1)
    assert abs(A.mean() - 0.1) <= 0.01
    assert set(np.unique(A)) <= {0.0, 1.0}


@given(st.integers(0, 2**31), st.floats(0.02, 0.3))
def test_adjacency_has_no_empty_rows_or_columns(seed, conn):
    A = sample_adjacency(Rng(seed), 40, 10, conn)
    assert A.sum(axis=1).min() >= 1 and A.sum(axis=0).min() >= 1


def test_impossible_connectivity_is_a_config_error():
    with pytest.raises(ConfigError):
        sample_adjacency(Rng(0), 200, 50, 1e-9)


def test_simulate_properties():
    cfg = SimConfig(n=60, m=6, N_train=30, N_test=20, connectivity=0.2, noise_sd=0.2, seed=3)
    tr, te = simulate(cfg)
    assert isinstance(tr, SimDataset)
    assert tr.X.shape == (30, 60) and te.Z_true.shape == (20, 6)
    assert tr.X.min() >= 0 and te.X.min() >= 0
    assert np.array_equal(tr.A, te.A) and np.array_equal(tr.W, te.W)
    assert tr.Z_true.min() > 0
    assert tr.W.min() >= -1 and tr.W.max() <= 1
    tr2, te2 = simulate(cfg)
    for a, b in ((tr, tr2), (te, te2)):
        assert np.array_equal(a.X, b.X) and np.array_equal(a.Z_true, b.Z_true)


def test_noise_free_simulation_is_exactly_the_formula():
    tr, _ = simulate(SimConfig(n=30, m=3, N_train=10, N_test=1, connectivity=0.5, noise_sd=0.0))
    assert np.array_equal(tr.X, regulatory_expression(tr.Z_true, tr.A, tr.W))


@pytest.mark.parametrize("kw", [dict(connectivity=0.0), dict(connectivity=1.5), dict(m=10, n=10),
                                dict(noise_sd=-1.0), dict(gamma_shape=0.0), dict(weight_range=(1, -1))])
def test_invalid_sim_config(kw):
    with pytest.raises(ConfigError):
        simulate(SimConfig(**{**dict(n=20, m=4), **kw}))


# IDX

def test_idx_crafted_fixture(tmp_path):
    p = tmp_path / "img"
    p.write_bytes(idx_bytes(0x803, (1, 2, 2), [0, 255, 128, 64]))
    ds = load_idx(p)
    np.testing.assert_array_equal(ds.X, [[0.0, 1.0, 128 / 255, 64 / 255]])
    assert ds.item_shape == (1, 2, 2)


def test_idx_gzip_and_labels(tmp_path):
    img, lab = tmp_path / "i.gz", tmp_path / "l.gz"
    with gzip.open(img, "wb") as f:
        f.write(idx_bytes(0x803, (2, 1, 3), range(6)))
    with gzip.open(lab, "wb") as f:
        f.write(idx_bytes(0x801, (2,), [7, 3]))
    ds = load_idx(img, lab)
    assert ds.labels.tolist() == [7, 3]
    assert ds.X.shape == (2, 3)


def test_idx_errors(tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(idx_bytes(0, (1, 2, 2), [0] * 4))
    with pytest.raises(FormatError):
        load_idx(bad)
    short = tmp_path / "short"
    short.write_bytes(idx_bytes(0x803, (2, 2, 2), [0] * 5))
    with pytest.raises(LengthError):
        load_idx(short)
    img, lab = tmp_path / "i", tmp_path / "l"
    img.write_bytes(idx_bytes(0x803, (2, 1, 1), [0, 0]))
    lab.write_bytes(idx_bytes(0x801, (3,), [0, 0, 0]))
    with pytest.raises(ConsistencyError):
        load_idx(img, lab)


def test_idx_empty_set(tmp_path):
    p = tmp_path / "empty"
    p.write_bytes(idx_bytes(0x803, (0, 28, 28), []))
    ds = load_idx(p)
    assert len(ds) == 0 and ds.X.shape == (0, 784)


def test_write_idx_roundtrip(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, (3, 4, 5)).astype(np.uint8)
    write_idx(tmp_path / "a.gz", images=imgs)
    write_idx(tmp_path / "b", labels=np.array([1, 2, 3]))
    ds = load_idx(tmp_path / "a.gz", tmp_path / "b")
    assert np.array_equal((ds.X * 255).round().reshape(3, 4, 5), imgs)


def test_bundled_mnist_subset_is_balanced():
    ds = load_idx(f"{MNIST_DIR}/images-idx3-ubyte.gz", f"{MNIST_DIR}/labels-idx1-ubyte.gz")
    assert len(ds) == 5000
    assert np.bincount(ds.labels).tolist() == [500] * 10
    assert 0.0 <= ds.X.min() and ds.X.max() <= 1.0


# subsetting

def test_subsample_identity_and_determinism():
    ds = Dataset(np.arange(20.0).reshape(10, 2))
    assert np.array_equal(subsample(ds, 10, 0).sample_ids, ds.sample_ids)
    a, b = subsample(ds, 4, 5), subsample(ds, 4, 5)
    assert np.array_equal(a.sample_ids, b.sample_ids)
    assert np.all(np.diff(a.sample_ids) > 0)
    with pytest.raises(SizeError):
        subsample(ds, 11, 0)


def test_balanced_subsample_from_imbalanced_labels():
    labels = np.repeat(np.arange(10), [60 + 10 * k for k in range(10)])
    ds = Dataset(np.zeros((labels.size, 1)), labels=labels)
    sub = subsample(ds, 50, 1, balanced=True)
    assert np.bincount(sub.labels).tolist() == [50] * 10
    with pytest.raises(SizeError):
        subsample(ds, 61, 1, balanced=True)


def test_disjoint_split_via_exclusion():
    ds = Dataset(np.zeros((30, 1)), labels=np.arange(30) % 3)
    tr = subsample(ds, 5, 0, balanced=True)
    te = subsample(ds, 15, 0, exclude_ids=tr.sample_ids, stream=1)
    assert not set(tr.sample_ids) & set(te.sample_ids)


def test_subset_keeps_original_ids_and_rows():
    ds = Dataset(np.arange(10.0)[:, None], sample_ids=np.arange(100, 110))
    sub = subsample(ds, 3, 2)
    assert np.array_equal(sub.X[:, 0] + 100, sub.sample_ids)


def test_duplicate_ids_rejected():
    with pytest.raises(ConsistencyError):
        Dataset(np.zeros((2, 1)), sample_ids=[1, 1])


# container round trips

def test_sim_dataset_roundtrip_bit_identical(tmp_path):
    tr, _ = simulate(SimConfig(n=20, m=3, N_train=7, N_test=2, connectivity=0.4))
    save_dataset(tr, tmp_path / "d.bin")
    back = load_dataset(tmp_path / "d.bin")
    assert isinstance(back, SimDataset)
    for name in ("X", "Z_true", "A", "W", "sample_ids"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))


def test_corrupted_header_byte_is_format_error(tmp_path):
    tr, _ = simulate(SimConfig(n=20, m=3, N_train=4, N_test=1, connectivity=0.4))
    p = tmp_path / "d.bin"
    save_dataset(tr, p)
    blob = bytearray(p.read_bytes())
    blob[40] ^= 0xFF
    p.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        load_dataset(p)


def test_version_mismatch(tmp_path):
    p = tmp_path / "d.bin"
    save_dataset(Dataset(np.ones((2, 2))), p)
    blob = bytearray(p.read_bytes())
    blob[12:16] = struct.pack("<I", 99)
    p.write_bytes(bytes(blob))
    with pytest.raises(VersionError):
        load_dataset(p)


def test_csv_export_matches_binary_to_full_precision(tmp_path):
    tr, _ = simulate(SimConfig(n=15, m=3, N_train=6, N_test=1, connectivity=0.5, noise_sd=0.3))
    export_csv(tr, tmp_path / "d.csv")
    save_dataset(tr, tmp_path / "d.bin")
    back = load_dataset(tmp_path / "d.bin")
    header, table = read_csv_matrix(tmp_path / "d.csv")
    assert header[0] == "sample_id" and header[1] == "x_0" and header[-1] == "z_2"
    assert np.array_equal(table[:, 1:16], back.X)
    assert np.array_equal(table[:, 16:], back.Z_true)
