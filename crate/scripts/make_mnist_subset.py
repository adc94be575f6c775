"""Build a small MNIST subset in IDX format from the 5k-digit sample bundled with mlxtend.

Usage: pip download --no-deps mlxtend -d /tmp/mlx && python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist-subset
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

PER_CLASS = 100


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    data = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    pixels, labels = data[:, :-1].astype(np.uint8), data[:, -1].astype(np.uint8)

    rng = np.random.default_rng(20220607)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = rng.permutation(np.flatnonzero(labels == digit))
        train_idx.extend(idx[:PER_CLASS])
        test_idx.extend(idx[PER_CLASS : 2 * PER_CLASS])
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)

    write_idx_images(out / "train-images-idx3-ubyte", pixels[train_idx])
    write_idx_labels(out / "train-labels-idx1-ubyte", labels[train_idx])
    write_idx_images(out / "t10k-images-idx3-ubyte", pixels[test_idx])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", labels[test_idx])


if __name__ == "__main__":
    main()
