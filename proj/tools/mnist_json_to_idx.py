#!/usr/bin/env python3
"""Convert the 10k-digit MNIST sample shipped in the npm `mnist` package
(src/digits/<d>.json, pixels stored as v/255 with three decimals) into the
standard big-endian IDX pair read by nish-lab.

usage: npm pack mnist && tar xzf mnist-*.tgz
       tools/mnist_json_to_idx.py package/src/digits data/mnist
"""
import json
import os
import struct
import sys


def main(src, dst, prefix="mnist10k"):
    images = bytearray()
    labels = bytearray()
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            raw = json.load(f)["data"]
        n = len(raw) // 784
        images.extend(min(255, max(0, round(v * 255))) for v in raw[: n * 784])
        labels.extend([digit] * n)
    count = len(labels)
    os.makedirs(dst, exist_ok=True)
    with open(os.path.join(dst, f"{prefix}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        f.write(images)
    with open(os.path.join(dst, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels)
    print(f"wrote {count} samples to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
