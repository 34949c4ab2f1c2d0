"""
Preparing the bundled MNIST subset
==================================

The acceptance suite needs MNIST but no network access at test time, so a
5000-image subset (500 per digit) ships in ``data/mnist5k`` as gzipped IDX
files. This script rebuilds them from the ``mnist_5k.csv.gz`` table that
comes with the mlxtend package (784 pixel columns, then the label).

Usage::

    python demos/00_prepare_mnist5k.py [path/to/mnist_5k.csv.gz]

Without an argument it downloads the mlxtend wheel with pip and reads the
table out of it.
"""
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

import numpy as np

from encfree.data import load_idx, write_idx

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "mnist5k"
MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_csv():
    tmp = pathlib.Path(tempfile.mkdtemp())
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "mlxtend==0.24.0", "-d", str(tmp)],
                   check=True)
    wheel = next(tmp.glob("mlxtend-*.whl"))
    with zipfile.ZipFile(wheel) as z:
        return io.BytesIO(z.read(MEMBER))


src = sys.argv[1] if len(sys.argv) > 1 else fetch_csv()
table = np.loadtxt(src, delimiter=",", dtype=np.int64)
print("table", table.shape)

# pixels are 0..255 integers, the last column is the digit
images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
labels = table[:, -1].astype(np.uint8)
print("per digit", np.bincount(labels))

OUT.mkdir(parents=True, exist_ok=True)
write_idx(OUT / "images-idx3-ubyte.gz", images=images)
write_idx(OUT / "labels-idx1-ubyte.gz", labels=labels)

# read back through the library's parser as a check
ds = load_idx(OUT / "images-idx3-ubyte.gz", OUT / "labels-idx1-ubyte.gz")
assert np.array_equal((ds.X * 255).round().astype(np.uint8).reshape(images.shape), images)
print("wrote", len(ds), "images to", OUT)
