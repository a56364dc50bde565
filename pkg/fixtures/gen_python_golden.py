"""Regenerate python_golden.lgemb, the byte-exact embedding-file fixture
shared with the exporter's test suite. Values are float32-exact so both
sides can assert equality without tolerance."""

from pathlib import Path

import numpy as np

from labelnet.encoder import write_embeddings

VECTORS = {
    0: np.array([0.5, -1.25, 3.75, 0.0, 2.0, -0.125, 8.5, 1.0], dtype=np.float32),
    1: np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], dtype=np.float32),
    7: np.array([-0.5, 0.25, -0.75, 1.5, -2.5, 0.0625, 10.0, -16.0], dtype=np.float32),
}

if __name__ == "__main__":
    out = Path(__file__).parent / "python_golden.lgemb"
    write_embeddings(out, VECTORS)
    print(f"wrote {out} ({out.stat().st_size} bytes)")
