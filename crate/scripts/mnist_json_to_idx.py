#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package into IDX files.

The package stores 10,000 MNIST digits as unit-interval floats rounded to three
decimals, one file per class (src/digits/<d>.json, {"data": [...]}).  Pixels are
mapped back to bytes with round(v * 255).

usage: mnist_json_to_idx.py <package/src/digits> <out_dir>
"""
import json
import os
import struct
import sys


def main():
    src, out = sys.argv[1], sys.argv[2]
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            flat = json.load(fh)["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            px = flat[i * 784:(i + 1) * 784]
            images.append(bytes(min(255, max(0, round(v * 255))) for v in px))
            labels.append(digit)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "images-idx3-ubyte"), "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            fh.write(img)
    with open(os.path.join(out, "labels-idx1-ubyte"), "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(bytes(labels))
    print(f"wrote {len(images)} samples to {out}")


if __name__ == "__main__":
    main()
