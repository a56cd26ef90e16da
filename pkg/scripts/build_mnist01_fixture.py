"""Rebuild the bundled digits-0/1 MNIST subset as gzipped IDX files.

The source is the ``mnist`` npm package (https://www.npmjs.com/package/mnist),
which ships 10k MNIST digits as JSON arrays of pixel/255 rounded to three
decimals. Three decimals is finer than the 1/255 pixel step, so
``rint(v * 255)`` recovers the original bytes exactly.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python scripts/build_mnist01_fixture.py package/src/digits
"""
import json
import sys
from pathlib import Path

import numpy as np

from residual_error.data import write_idx

OUT = Path(__file__).resolve().parents[1] / "src" / "residual_error" / "data"


def main(digits_dir):
    images, labels = [], []
    for digit in (0, 1):
        flat = np.array(json.loads(Path(digits_dir, f"{digit}.json").read_text())["data"])
        pixels = np.rint(flat * 255.0).reshape(-1, 28, 28)
        assert np.abs(pixels / 255.0 - flat.reshape(-1, 28, 28)).max() < 5e-4
        images.append(pixels.astype(np.uint8))
        labels.append(np.full(len(pixels), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    # interleave classes so that prefixes of the file stay balanced
    order = np.random.default_rng(0).permutation(len(labels))
    write_idx(OUT / "mnist01-images-idx3-ubyte.gz", images[order])
    write_idx(OUT / "mnist01-labels-idx1-ubyte.gz", labels[order])
    print(f"wrote {len(labels)} samples to {OUT}")


if __name__ == "__main__":
    main(sys.argv[1])
