#!/usr/bin/env python3
"""Builds the small MNIST IDX fixture under data/mnist-mini.

Source: the `mnist` npm package (MIT, Juan Cazala), which ships ~1000 MNIST
digits per class as JSON arrays of 28x28 floats in [0,1]. Usage:

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_fixture.py package/src/digits data/mnist-mini
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 300
TEST_PER_CLASS = 100
SIDE = 28


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    train, test = [], []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(flat) // (SIDE * SIDE)
        assert count >= TRAIN_PER_CLASS + TEST_PER_CLASS
        imgs = []
        for i in range(count):
            px = flat[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]
            imgs.append([min(255, max(0, round(v * 255))) for v in px])
        train += [(img, digit) for img in imgs[:TRAIN_PER_CLASS]]
        test += [(img, digit) for img in imgs[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    rng = random.Random(20230101)
    rng.shuffle(train)
    rng.shuffle(test)
    dst.mkdir(parents=True, exist_ok=True)
    write_images(dst / "train-images-idx3-ubyte", [i for i, _ in train])
    write_labels(dst / "train-labels-idx1-ubyte", [l for _, l in train])
    write_images(dst / "t10k-images-idx3-ubyte", [i for i, _ in test])
    write_labels(dst / "t10k-labels-idx1-ubyte", [l for _, l in test])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
