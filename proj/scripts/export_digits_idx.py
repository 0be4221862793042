#!/usr/bin/env python3
"""Export scikit-learn's bundled handwritten digits to IDX files.

Pixel intensities (0..16) are rescaled to 0..255 so that the IDX loader's
divide-by-255 maps them into [0, 1]. The first 1500 samples form the
training split and the remaining 297 the test split.
"""
import pathlib
import struct
import sys

import numpy as np
from sklearn.datasets import load_digits


def write_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/digits")
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    images = np.rint(digits.images * 255.0 / 16.0)
    labels = digits.target
    split = 1500
    write_images(out / "train-images-idx3-ubyte", images[:split])
    write_labels(out / "train-labels-idx1-ubyte", labels[:split])
    write_images(out / "t10k-images-idx3-ubyte", images[split:])
    write_labels(out / "t10k-labels-idx1-ubyte", labels[split:])


if __name__ == "__main__":
    main()
