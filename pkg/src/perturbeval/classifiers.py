"""Black-box classifier adapters: toy linear-softmax, ONNX, subprocess.

Every backend presents the same contract: a class count K, an expected
input size, a preprocessor, and a deterministic batched ``predict_batch``
whose results do not depend on how a request list is partitioned (within
1e-9).  The toy backend doubles as the test oracle; real models attach
through an ONNX file or the line-delimited JSON subprocess protocol.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .core import Preprocessor, as_image, preprocess
from .errors import BackendError, DataError, DimensionError, ParameterError

__all__ = [
    "Classifier",
    "ToyLinearClassifier",
    "OnnxClassifier",
    "SubprocessClassifier",
    "make_toy_linear_classifier",
    "uniform_toy_classifier",
    "brightness_toy_classifier",
    "random_toy_classifier",
    "save_toy_classifier",
    "load_toy_classifier",
    "class_probability",
    "argmax_class",
    "neutral_input_sweep",
    "SweepRow",
    "softmax",
]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (invariant to adding a constant per row)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Classifier:
    """Base contract for classifier handles.

    Subclasses set ``K``, ``expected_input`` (m, n), ``preprocessor`` and
    ``backend``, and implement ``_predict_array`` on a stacked
    (N, m, n, 3) raw-pixel batch.
    """

    K: int
    expected_input: tuple[int, int]
    preprocessor: Preprocessor
    backend: str

    def _predict_array(self, images: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _stack(self, images) -> np.ndarray:
        if isinstance(images, np.ndarray) and images.ndim == 4:
            batch = np.asarray(images, dtype=np.float64)
        else:
            batch = np.stack([as_image(im) for im in images]) if len(images) else np.empty((0, *self.expected_input, 3))
        m, n = self.expected_input
        if batch.shape[1:] != (m, n, 3):
            raise DimensionError(f"expected images of shape ({m}, {n}, 3), got {batch.shape[1:]}")
        return batch

    def predict_batch(self, images) -> np.ndarray:
        """Class probabilities for a batch of raw-pixel images, order preserved."""
        batch = self._stack(images)
        if batch.shape[0] == 0:
            return np.empty((0, self.K))
        probs = self._predict_array(batch)
        if probs.shape != (batch.shape[0], self.K):
            raise BackendError(f"backend returned shape {probs.shape}, expected {(batch.shape[0], self.K)}")
        if not np.all(np.isfinite(probs)):
            raise DataError("classifier produced non-finite probabilities")
        return probs

    def predict_one(self, image) -> np.ndarray:
        return self.predict_batch([image])[0]


class ToyLinearClassifier(Classifier):
    """Deterministic linear-softmax model over preprocessed pixels.

    Computes softmax(W @ vec(g(x)) + b) with W of shape (K, m*n*3) in
    row-major (row, col, channel) pixel order.  Small enough to verify
    by hand, which makes it the oracle backend for every test in the
    suite.
    """

    backend = "toy"

    def __init__(self, W: np.ndarray, b: np.ndarray, expected_input: tuple[int, int], g: Preprocessor):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        m, n = expected_input
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise ParameterError(f"inconsistent toy weights: W {W.shape}, b {b.shape}")
        if W.shape[1] != m * n * 3:
            raise ParameterError(f"W has {W.shape[1]} columns, expected m*n*3 = {m * n * 3}")
        self.W = W
        self.b = b
        self.K = W.shape[0]
        self.expected_input = (m, n)
        self.preprocessor = g

    def predict_preprocessed(self, z: np.ndarray) -> np.ndarray:
        """Probabilities from already-preprocessed tensors (the model body alone)."""
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 3
        if single:
            z = z[None]
        flat = z.reshape(z.shape[0], -1)
        probs = softmax(flat @ self.W.T + self.b)
        return probs[0] if single else probs

    def _predict_array(self, images: np.ndarray) -> np.ndarray:
        z = (images - self.preprocessor.mean_array) * self.preprocessor.scale_array
        return self.predict_preprocessed(z)


def make_toy_linear_classifier(W, b, expected_input: tuple[int, int], g: Preprocessor) -> ToyLinearClassifier:
    """Build a toy linear-softmax handle from explicit weights."""
    return ToyLinearClassifier(W, b, expected_input, g)


def uniform_toy_classifier(K: int, m: int, n: int, g: Preprocessor | None = None) -> ToyLinearClassifier:
    """W = 0, b = 0: predicts 1/K for every class on every input."""
    g = g or Preprocessor()
    return ToyLinearClassifier(np.zeros((K, m * n * 3)), np.zeros(K), (m, n), g)


def brightness_toy_classifier(
    m: int, n: int, g: Preprocessor | None = None, gain: float = 1.0
) -> ToyLinearClassifier:
    """Two classes; class 0's logit grows with overall brightness.

    Logit 0 equals gain/(m*n*3) times the summed preprocessed pixels, so
    the class-0 score is a closed-form sigmoid of the mean pixel value.
    """
    g = g or Preprocessor()
    W = np.zeros((2, m * n * 3))
    W[0, :] = gain / (m * n * 3)
    return ToyLinearClassifier(W, np.zeros(2), (m, n), g)


def random_toy_classifier(
    K: int, m: int, n: int, seed: int, g: Preprocessor | None = None, weight_scale: float = 0.02
) -> ToyLinearClassifier:
    """Seeded random weights, scaled so scores stay away from 0/1 saturation."""
    g = g or Preprocessor()
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, weight_scale, size=(K, m * n * 3))
    b = rng.normal(0.0, 0.1, size=K)
    return ToyLinearClassifier(W, b, (m, n), g)


def save_toy_classifier(path, clf: ToyLinearClassifier) -> None:
    """Write toy weights plus preprocessor to an NPZ file."""
    np.savez(
        path,
        W=clf.W,
        b=clf.b,
        mean=clf.preprocessor.mean_array,
        scale=clf.preprocessor.scale_array,
        shape=np.array(clf.expected_input, dtype=np.int64),
    )


def load_toy_classifier(path) -> ToyLinearClassifier:
    """Load a toy classifier written by :func:`save_toy_classifier`."""
    try:
        with np.load(path) as z:
            g = Preprocessor(tuple(z["mean"]), tuple(z["scale"]))
            m, n = (int(v) for v in z["shape"])
            return ToyLinearClassifier(z["W"], z["b"], (m, n), g)
    except (OSError, KeyError, ValueError) as exc:
        raise BackendError(f"cannot load toy classifier from {path}: {exc}") from exc


class OnnxClassifier(Classifier):
    """Adapter for a single-input, softmax-output ONNX model.

    Requires the optional ``onnxruntime`` dependency at construction.
    The input layout (1, 3, m, n) vs (1, m, n, 3) is auto-detected from
    the graph's input shape; preprocessing happens here, in float64,
    before the cast to the model's float32 input.
    """

    backend = "onnx"

    def __init__(self, path, g: Preprocessor, session=None):
        if session is None:
            try:
                import onnxruntime  # noqa: PLC0415
            except ImportError as exc:
                raise BackendError(
                    "onnxruntime is not installed; install perturbeval[onnx] "
                    "or serve the model over the subprocess protocol"
                ) from exc
            session = onnxruntime.InferenceSession(str(path), providers=["CPUExecutionProvider"])
        self._session = session
        inputs = session.get_inputs()
        outputs = session.get_outputs()
        if len(inputs) != 1 or len(outputs) != 1:
            raise BackendError(f"expected 1 input / 1 output, got {len(inputs)} / {len(outputs)}")
        self._input_name = inputs[0].name
        self._output_name = outputs[0].name
        self.channels_first, m, n = _detect_layout(inputs[0].shape)
        self.expected_input = (m, n)
        k = outputs[0].shape[-1]
        if not isinstance(k, int):
            raise BackendError(f"cannot determine class count from output shape {outputs[0].shape}")
        self.K = int(k)
        self.preprocessor = g

    def _predict_array(self, images: np.ndarray) -> np.ndarray:
        z = (images - self.preprocessor.mean_array) * self.preprocessor.scale_array
        feed = z.astype(np.float32)
        if self.channels_first:
            feed = feed.transpose(0, 3, 1, 2)
        try:
            (probs,) = self._session.run([self._output_name], {self._input_name: feed})
        except Exception as exc:
            raise BackendError(f"onnx inference failed: {exc}") from exc
        return np.asarray(probs, dtype=np.float64).reshape(images.shape[0], -1)


def _detect_layout(shape) -> tuple[bool, int, int]:
    """Classify an ONNX input shape as channels-first or channels-last."""
    dims = list(shape)
    if len(dims) != 4:
        raise BackendError(f"expected 4-D model input, got {dims}")
    d1, d2, d3 = dims[1], dims[2], dims[3]
    if d1 == 3 and isinstance(d2, int) and isinstance(d3, int):
        return True, d2, d3
    if d3 == 3 and isinstance(d1, int) and isinstance(d2, int):
        return False, d1, d2
    raise BackendError(f"cannot detect image layout from input shape {dims}")


class SubprocessClassifier(Classifier):
    """Classifier served by a child process over line-delimited JSON.

    On startup the child prints a handshake line ``{"K":, "m":, "n":}``.
    Each request line is ``{"id": <int>, "images": [<base64 float32
    m*n*3 row-major>, ...]}``; the child answers one line ``{"id": <int>,
    "probs": [[...K floats...], ...]}`` with the id echoed back.  The
    child owns its preprocessing; the preprocessor held here exists so
    baselines such as the inv image can be constructed on this side.
    Requests are serialized through a lock.
    """

    backend = "subprocess"

    def __init__(self, command: str | list[str], g: Preprocessor | None = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise BackendError(f"cannot start classifier process {argv!r}: {exc}") from exc
        self._lock = threading.Lock()
        self._next_id = 0
        line = self._proc.stdout.readline()
        if not line:
            raise BackendError(f"classifier process {argv!r} exited before handshake")
        try:
            hello = json.loads(line)
            self.K = int(hello["K"])
            m, n = int(hello["m"]), int(hello["n"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BackendError(f"bad handshake line {line!r}") from exc
        self.expected_input = (m, n)
        self.preprocessor = g or Preprocessor()

    def _predict_array(self, images: np.ndarray) -> np.ndarray:
        payload = [
            base64.b64encode(np.ascontiguousarray(im, dtype=np.float32).tobytes()).decode("ascii")
            for im in images
        ]
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            try:
                self._proc.stdin.write(json.dumps({"id": req_id, "images": payload}) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (OSError, ValueError) as exc:
                raise BackendError(f"classifier process pipe failed: {exc}") from exc
        if not line:
            raise BackendError("classifier process closed its output stream")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BackendError(f"bad response line {line!r}") from exc
        if resp.get("id") != req_id:
            raise BackendError(f"response id {resp.get('id')} does not echo request id {req_id}")
        return np.asarray(resp["probs"], dtype=np.float64)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def class_probability(h: Classifier, x, c: int) -> float:
    """The probability the handle assigns to class c for input x."""
    if not 0 <= c < h.K:
        raise ParameterError(f"class {c} outside [0, {h.K})")
    return float(h.predict_one(x)[c])


def argmax_class(h: Classifier, x) -> int:
    """The maximum-probability class; ties go to the smallest index."""
    return int(np.argmax(h.predict_one(x)))


@dataclass(frozen=True)
class SweepRow:
    gamma: int
    argmax: int
    max_prob: float
    probs: np.ndarray | None = None


def neutral_input_sweep(h: Classifier, levels, include_probs: bool = False) -> list[SweepRow]:
    """Predictions for constant gray images at each level, ascending.

    Probes how far from uniform the model's output is on inputs a human
    would call uninformative.
    """
    levels = sorted(set(int(v) for v in levels))
    if not levels:
        raise ParameterError("levels must be nonempty")
    if levels[0] < 0 or levels[-1] > 255:
        raise ParameterError("levels must lie in [0, 255]")
    m, n = h.expected_input
    rows = []
    for gamma in levels:
        probs = h.predict_one(np.full((m, n, 3), float(gamma)))
        rows.append(
            SweepRow(gamma, int(np.argmax(probs)), float(probs.max()), probs if include_probs else None)
        )
    return rows
