#!/usr/bin/env python3
"""Build the bundled MNIST subset (IDX format) from the `mnist` npm package.

The npm package ships 10,000 genuine MNIST digits as JSON arrays of
pixel/255 rounded to three decimals; round(v * 255) recovers the bytes.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset.py package/src/digits data/mnist
"""
import json
import os
import random
import struct
import sys

TRAIN = 3000
TEST = 1000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    samples = []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            data = json.load(f)["data"]
        for i in range(0, len(data), 784):
            px = [int(round(v * 255)) for v in data[i : i + 784]]
            samples.append((px, digit))
    random.Random(20170101).shuffle(samples)
    os.makedirs(dst, exist_ok=True)
    train, test = samples[:TRAIN], samples[TRAIN : TRAIN + TEST]
    write_images(os.path.join(dst, "train-images-idx3-ubyte"), [s[0] for s in train])
    write_labels(os.path.join(dst, "train-labels-idx1-ubyte"), [s[1] for s in train])
    write_images(os.path.join(dst, "t10k-images-idx3-ubyte"), [s[0] for s in test])
    write_labels(os.path.join(dst, "t10k-labels-idx1-ubyte"), [s[1] for s in test])
    print(f"{len(samples)} samples read; wrote {len(train)} train / {len(test)} test")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
