#!/usr/bin/env python3
"""Write the 5000-sample MNIST subset bundled with mlxtend as IDX files.

The rows are grouped by class in the source file; a seeded stratified split puts
400 images per class into the training split and 100 per class into the test split.
Usage: make_mnist_idx.py [out_dir]
"""
import glob
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np


def fetch_csv():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "mlxtend==0.24.0",
                        "--no-deps", "-q", "-d", tmp], check=True)
        wheel = glob.glob(os.path.join(tmp, "*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            return z.read("mlxtend/data/data/mnist_5k.csv.gz")


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, images.shape[0], 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist")
    os.makedirs(out, exist_ok=True)
    raw = gzip.decompress(fetch_csv())
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images, labels = table[:, :-1], table[:, -1]
    assert images.shape[1] == 784
    rng = np.random.default_rng(20240607)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(labels == c))
        train_idx.extend(idx[:400])
        test_idx.extend(idx[400:])
    train_idx = rng.permutation(np.array(train_idx))
    test_idx = rng.permutation(np.array(test_idx))
    write_images(os.path.join(out, "train-images-idx3-ubyte"), images[train_idx])
    write_labels(os.path.join(out, "train-labels-idx1-ubyte"), labels[train_idx])
    write_images(os.path.join(out, "t10k-images-idx3-ubyte"), images[test_idx])
    write_labels(os.path.join(out, "t10k-labels-idx1-ubyte"), labels[test_idx])
    print(f"wrote {len(labels)} samples to {out}")


if __name__ == "__main__":
    main()
