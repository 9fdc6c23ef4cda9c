"""Writes the tiny IDX fixtures used by the loader tests.

Bytes are laid out by hand so the loader is checked against an independent writer.
"""
import gzip
from pathlib import Path

HERE = Path(__file__).parent

# image 0: a 2x3 ramp, image 1: a checkerboard of 0/255
PIXELS = bytes([0, 51, 102, 153, 204, 255, 255, 0, 255, 0, 255, 0])
LABELS = bytes([7, 2])


def be32(v):
    return v.to_bytes(4, "big")


images = be32(2051) + be32(2) + be32(2) + be32(3) + PIXELS
labels = be32(2049) + be32(2) + LABELS

(HERE / "tiny-images-idx3-ubyte").write_bytes(images)
(HERE / "tiny-labels-idx1-ubyte").write_bytes(labels)
(HERE / "tiny-images-idx3-ubyte.gz").write_bytes(gzip.compress(images, mtime=0))
(HERE / "tiny-labels-idx1-ubyte.gz").write_bytes(gzip.compress(labels, mtime=0))
