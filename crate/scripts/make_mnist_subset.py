"""Build the bundled 2000-image MNIST subset as IDX files.

Source: the 5000-image MNIST sample shipped inside the `mlxtend` wheel
(mlxtend/data/data/mnist_5k.csv.gz, 500 images per digit, sorted by label).
We take the first 200 images of each digit and interleave them with a fixed
shuffle so that every prefix of the file is roughly class balanced.

usage: python3 scripts/make_mnist_subset.py <mlxtend wheel> <out dir>
"""
import gzip
import random
import struct
import sys
import zipfile

PER_CLASS = 200


def main(wheel, out_dir):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = [line.split(",") for line in gzip.decompress(raw).decode().splitlines()]
    by_class = {}
    for row in rows:
        by_class.setdefault(int(row[-1]), []).append([int(v) for v in row[:-1]])
    picked = []
    for label in range(10):
        picked.extend((label, px) for px in by_class[label][:PER_CLASS])
    random.Random(0).shuffle(picked)

    with open(f"{out_dir}/images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(picked), 28, 28))
        for _, px in picked:
            f.write(bytes(px))
    with open(f"{out_dir}/labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(picked)))
        f.write(bytes(label for label, _ in picked))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
