"""Reference worker for the subprocess classifier protocol.

Serves a toy linear-softmax classifier from an NPZ weights file:

    python -m perturbeval.toy_worker weights.npz

Protocol (line-delimited JSON on stdin/stdout): the worker first prints
a handshake ``{"K":, "m":, "n":}``, then answers each request line
``{"id":, "images": [<base64 float32 m*n*3 row-major>, ...]}`` with
``{"id":, "probs": [[...], ...]}``.  Any real model can be served by a
worker speaking the same protocol.
"""

from __future__ import annotations

import base64
import json
import sys

import numpy as np

from .classifiers import load_toy_classifier


def serve(path, stdin=None, stdout=None) -> None:
    """Run the request loop until stdin closes."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    clf = load_toy_classifier(path)
    m, n = clf.expected_input
    stdout.write(json.dumps({"K": clf.K, "m": m, "n": n}) + "\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        images = np.stack(
            [
                np.frombuffer(base64.b64decode(blob), dtype=np.float32)
                .reshape(m, n, 3)
                .astype(np.float64)
                for blob in req["images"]
            ]
        )
        probs = clf.predict_batch(images)
        stdout.write(json.dumps({"id": req["id"], "probs": probs.tolist()}) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m perturbeval.toy_worker <weights.npz>", file=sys.stderr)
        return 2
    serve(argv[0])
    return 0


if __name__ == "__main__":
    sys.exit(main())
