"""Datasets: the sparse regulatory-network simulator, MNIST IDX reading,
subsetting, and the on-disk dataset container."""
import csv
import gzip
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .container import read_container, write_container
from .errors import ConfigError, ConsistencyError, FormatError, LengthError, ParameterError, SizeError
from .numkit import Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Samples in rows of ``X``; every other field is optional.

    ``sample_ids`` are stable across subsetting: a subset keeps the ids of the
    rows it took. ``item_shape`` is the per-sample shape models should see
    (e.g. ``(1, 28, 28)`` for images stored flat).
    """

    X: np.ndarray
    labels: np.ndarray = None
    Z_true: np.ndarray = None
    A: np.ndarray = None
    W: np.ndarray = None
    sample_ids: np.ndarray = None
    value_range: tuple = None
    item_shape: tuple = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        n = self.X.shape[0]
        if self.sample_ids is None:
            self.sample_ids = np.arange(n, dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.sample_ids.shape != (n,) or np.unique(self.sample_ids).size != n:
            raise ConsistencyError("sample_ids must be unique, one per row")
        for name in ("labels", "Z_true"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ConsistencyError(f"{name} has {len(v)} rows, X has {n}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.item_shape is None:
            self.item_shape = tuple(self.X.shape[1:])
        self.item_shape = tuple(int(s) for s in self.item_shape)
        if self.value_range is None and n:
            self.value_range = (float(self.X.min()), float(self.X.max()))

    def __len__(self):
        return self.X.shape[0]

    def inputs(self):
        """X reshaped to ``(N,) + item_shape``."""
        return self.X.reshape((len(self),) + self.item_shape)

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)

        def pick(a):
            return None if a is None else a[rows]

        return type(self)(self.X[rows], pick(self.labels), pick(self.Z_true), self.A, self.W,
                       self.sample_ids[rows], self.value_range, self.item_shape)


class SimDataset(Dataset):
    """A simulated split: X plus the latent factors and graph that produced it."""


@dataclass
class SimConfig:
    n: int = 1000
    m: int = 100
    N_train: int = 100
    N_test: int = 100
    connectivity: float = 0.1
    noise_sd: float = 0.2
    gamma_shape: float = 2.0
    gamma_scale: float = 1.0
    weight_range: tuple = (-1.0, 1.0)
    seed: int = 0

    def validate(self):
        if not 0 < self.connectivity <= 1:
            raise ConfigError(f"connectivity must lie in (0, 1], got {self.connectivity}")
        if not 1 <= self.m < self.n:
            raise ConfigError(f"need 1 <= m < n, got m={self.m}, n={self.n}")
        if self.N_train < 0 or self.N_test < 0:
            raise ConfigError("sample counts must be >= 0")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            raise ConfigError("gamma parameters must be > 0")
        lo, hi = self.weight_range
        if lo > hi:
            raise ConfigError("weight_range must be (lo, hi) with lo <= hi")
        return self

    def to_dict(self):
        d = asdict(self)
        d["weight_range"] = list(self.weight_range)
        return d


def regulatory_expression(Z, A, W, noise=None):
    """x_i = relu(sum_j a_ij w_ij z_j + eps_i) for every row of ``Z``."""
    pre = np.asarray(Z, dtype=np.float64) @ (np.asarray(A) * np.asarray(W)).T
    if noise is not None:
        pre = pre + noise
    return np.maximum(pre, 0.0)


def sample_adjacency(rng, n, m, connectivity, max_attempts=100):
    """Bernoulli adjacency with no empty row or column.

    Empty rows/columns are redrawn individually, keeping the expected density.
    """
    A = rng.bernoulli(connectivity, (n, m))
    for _ in range(max_attempts):
        rows = np.flatnonzero(A.sum(axis=1) == 0)
        cols = np.flatnonzero(A.sum(axis=0) == 0)
        if rows.size == 0 and cols.size == 0:
            return A
        if rows.size:
            A[rows] = rng.bernoulli(connectivity, (rows.size, m))
        if cols.size:
            A[:, cols] = rng.bernoulli(connectivity, (n, cols.size))
    raise ConfigError(f"could not draw an adjacency without empty rows/columns in {max_attempts} "
                      f"attempts (connectivity {connectivity} too low)")


def simulate(cfg):
    """Draw (train, test) splits sharing one graph (A, W)."""
    cfg.validate()
    rng = Rng(cfg.seed)
    graph = rng.child(0)
    A = sample_adjacency(graph, cfg.n, cfg.m, cfg.connectivity)
    W = graph.uniform(cfg.weight_range[0], cfg.weight_range[1], (cfg.n, cfg.m))

    def split(key, N):
        r = rng.child(key)
        Z = r.gamma(cfg.gamma_shape, cfg.gamma_scale, (N, cfg.m))
        eps = r.normal(0.0, cfg.noise_sd, (N, cfg.n))
        return SimDataset(regulatory_expression(Z, A, W, eps), Z_true=Z, A=A, W=W)

    return split(1, cfg.N_train), split(2, cfg.N_test)


def _open_maybe_gzip(path):
    with open(path, "rb") as f:
        head = f.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def _read_idx(path, expected_magic, ndim):
    with _open_maybe_gzip(path) as f:
        blob = f.read()
    if len(blob) < 4:
        raise LengthError(f"{path}: missing IDX magic")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    hdr = 4 + 4 * ndim
    if len(blob) < hdr:
        raise LengthError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", blob[4:hdr])
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) - hdr < count:
        raise LengthError(f"{path}: payload has {len(blob) - hdr} bytes, header promises {count}")
    return np.frombuffer(blob, dtype=np.uint8, count=count, offset=hdr).reshape(dims)


def load_idx(images_path, labels_path=None):
    """Read an IDX image file (and optional label file); gzip is detected automatically.

    Pixels are scaled to [0, 1]; X is stored flat with ``item_shape=(1, rows, cols)``.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    n, rows, cols = images.shape
    labels = None
    if labels_path is not None:
        labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
        if labels.shape[0] != n:
            raise ConsistencyError(f"{n} images but {labels.shape[0]} labels")
    X = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(X, labels=labels, value_range=(0.0, 1.0), item_shape=(1, rows, cols))


def write_idx(path, images=None, labels=None, compress=None):
    """Write uint8 ``images`` (N, rows, cols) or ``labels`` (N,) in IDX format."""
    if (images is None) == (labels is None):
        raise ParameterError("write exactly one of images or labels")
    if images is not None:
        a = np.asarray(images, dtype=np.uint8)
        head = struct.pack(">I3I", IDX_IMAGES_MAGIC, *a.shape)
    else:
        a = np.asarray(labels, dtype=np.uint8)
        head = struct.pack(">II", IDX_LABELS_MAGIC, a.shape[0])
    blob = head + a.tobytes()
    if compress is None:
        compress = str(path).endswith(".gz")
    if compress:
        with gzip.GzipFile(path, "wb", mtime=0) as f:
            f.write(blob)
    else:
        with open(path, "wb") as f:
            f.write(blob)


def subsample(ds, size, seed, balanced=False, exclude_ids=None, stream=None):
    """Seeded sampling without replacement; the result keeps the original row order.

    With ``balanced=True``, ``size`` is the number of samples per label.
    ``exclude_ids`` removes sample ids from the pool first (for disjoint splits).
    ``stream`` selects an independent child stream of ``seed``.
    """
    rng = Rng(seed) if stream is None else Rng(seed).child(stream)
    pool = np.arange(len(ds))
    if exclude_ids is not None:
        pool = pool[~np.isin(ds.sample_ids, np.asarray(exclude_ids))]
    if balanced:
        if ds.labels is None:
            raise ParameterError("balanced subsampling needs labels")
        picked = []
        for label in np.unique(ds.labels[pool]):
            cand = pool[ds.labels[pool] == label]
            if cand.size < size:
                raise SizeError(f"label {label} has {cand.size} samples, {size} requested")
            picked.append(rng.child(int(label)).choice(cand, size, replace=False))
        rows = np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)
    else:
        if size > pool.size:
            raise SizeError(f"{size} samples requested, {pool.size} available")
        rows = rng.choice(pool, size, replace=False)
    return ds.take(np.sort(rows))


def save_dataset(ds, path):
    arrays = {"X": ds.X, "sample_ids": ds.sample_ids}
    for name in ("labels", "Z_true", "A", "W"):
        v = getattr(ds, name)
        if v is not None:
            arrays[name] = v
    meta = {
        "type": type(ds).__name__,
        "dims": list(ds.X.shape),
        "flags": {name: getattr(ds, name) is not None for name in ("labels", "Z_true", "A", "W")},
        "value_range": None if ds.value_range is None else list(ds.value_range),
        "item_shape": list(ds.item_shape),
    }
    write_container(path, b"DSET", meta, arrays)


def load_dataset(path):
    meta, arrays = read_container(path, b"DSET")
    flags = meta.get("flags", {})
    for name, present in flags.items():
        if present and name not in arrays:
            raise FormatError(f"{path}: header flags {name} but the payload lacks it")
    cls = SimDataset if meta.get("type") == "SimDataset" else Dataset
    vr = meta.get("value_range")
    return cls(arrays["X"], labels=arrays.get("labels"), Z_true=arrays.get("Z_true"), A=arrays.get("A"),
               W=arrays.get("W"), sample_ids=arrays["sample_ids"], value_range=None if vr is None else tuple(vr),
               item_shape=tuple(meta["item_shape"]))


def export_csv(ds, path):
    """One row per sample id: ``sample_id[, label], x_0..x_{n-1}[, z_0..z_{m-1}]``."""
    cols = ["sample_id"]
    parts = [ds.sample_ids[:, None].astype(np.float64)]
    if ds.labels is not None:
        cols.append("label")
        parts.append(ds.labels[:, None].astype(np.float64))
    cols += [f"x_{i}" for i in range(ds.X.shape[1])]
    parts.append(ds.X)
    if ds.Z_true is not None:
        cols += [f"z_{j}" for j in range(ds.Z_true.shape[1])]
        parts.append(ds.Z_true)
    table = np.hstack(parts) if parts else np.empty((0, 0))
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for i, row in enumerate(table):
            lead = 2 if ds.labels is not None else 1
            w.writerow([str(int(v)) for v in row[:lead]] + [repr(float(v)) for v in row[lead:]])


def read_csv_matrix(path):
    """Read a CSV written by :func:`export_csv` back to (header, float matrix)."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
