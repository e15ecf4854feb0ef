#!/usr/bin/env python3
"""Build IDX files for the 10k-digit MNIST subset shipped in the `mnist` npm package.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset.py package/src/digits data/mnist-subset

The package stores pixels as floats rounded to three decimals; multiplying by
255 and rounding recovers the original 8-bit values exactly. Every fifth
sample of each class goes to the test split; both splits are shuffled with a
fixed seed so the output is reproducible.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        for k in range(len(raw) // 784):
            px = bytes(int(round(v * 255)) for v in raw[k * 784:(k + 1) * 784])
            (test if k % 5 == 4 else train).append((px, digit))
    rng = random.Random(20240601)
    rng.shuffle(train)
    rng.shuffle(test)
    for name, split in (("train", train), ("t10k", test)):
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 2051, (len(split), 28, 28),
                  b"".join(px for px, _ in split))
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 2049, (len(split),),
                  bytes(lbl for _, lbl in split))
        print(f"{name}: {len(split)} examples")


if __name__ == "__main__":
    main(*sys.argv[1:3])
