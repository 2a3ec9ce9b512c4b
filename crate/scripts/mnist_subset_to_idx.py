#!/usr/bin/env python3
"""Convert the 10k-digit MNIST sample bundled with the npm `mnist` package into
gzipped IDX files (train/test split) usable by `daal`'s IDX loader.

usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_subset_to_idx.py package/src/digits OUT_DIR
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TEST_FRACTION = 0.2
SEED = 20181


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            px = bytes(round(v * 255) for v in flat[i * 784:(i + 1) * 784])
            samples.append((px, digit))
    random.Random(SEED).shuffle(samples)
    n_test = int(len(samples) * TEST_FRACTION)
    for name, part in (("train", samples[n_test:]), ("t10k", samples[:n_test])):
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x803, (len(part), 28, 28),
                  b"".join(p for p, _ in part))
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(part),),
                  bytes(l for _, l in part))
        print(name, len(part))


if __name__ == "__main__":
    main()
