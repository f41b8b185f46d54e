#!/usr/bin/env python3
"""Build IDX files from the digit JSON files shipped in the `mnist` npm package.

Each digits/<d>.json holds {"data": [...]} with 784 values in [0, 1] per image.
Pixels are restored to bytes with round(v * 255) and the images are split into
train and test sets by a fixed-seed shuffle.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_idx.py package/src/digits data/mnist
"""

import argparse
import json
import random
import struct
from pathlib import Path

PIXELS = 28 * 28


def load_digits(src):
    images, labels = [], []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        if len(flat) % PIXELS:
            raise SystemExit(f"{digit}.json: {len(flat)} values is not a multiple of {PIXELS}")
        for start in range(0, len(flat), PIXELS):
            images.append(bytes(min(255, max(0, round(v * 255))) for v in flat[start:start + PIXELS]))
            labels.append(digit)
    return images, labels


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(img)


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("src", type=Path, help="directory holding 0.json .. 9.json")
    ap.add_argument("dst", type=Path, help="output directory")
    ap.add_argument("--test", type=int, default=2000, help="number of test images")
    ap.add_argument("--seed", type=int, default=20240501)
    args = ap.parse_args()

    images, labels = load_digits(args.src)
    order = list(range(len(images)))
    random.Random(args.seed).shuffle(order)
    test, train = order[:args.test], order[args.test:]

    args.dst.mkdir(parents=True, exist_ok=True)
    for name, idx in (("train", train), ("t10k", test)):
        write_images(args.dst / f"{name}-images-idx3-ubyte", [images[i] for i in idx])
        write_labels(args.dst / f"{name}-labels-idx1-ubyte", [labels[i] for i in idx])
        print(f"{name}: {len(idx)} images")


if __name__ == "__main__":
    main()
