"""Tests for the classifier backends and the neutral-input sweep."""

import math
import sys

import numpy as np
import pytest

from perturbeval import (
    BackendError,
    DimensionError,
    ParameterError,
    Preprocessor,
    SubprocessClassifier,
    argmax_class,
    brightness_toy_classifier,
    class_probability,
    load_toy_classifier,
    make_toy_linear_classifier,
    neutral_input_sweep,
    random_toy_classifier,
    save_toy_classifier,
    uniform_toy_classifier,
)
from perturbeval.classifiers import _detect_layout, softmax

from oracles import toy_probs_oracle


class TestToyClassifier:
    def test_zero_weights_predict_uniform(self, random_image):
        clf = uniform_toy_classifier(4, 8, 8)
        assert np.abs(clf.predict_one(random_image) - 0.25).max() < 1e-12

    def test_bias_only_softmax(self):
        clf = make_toy_linear_classifier(
            np.zeros((2, 2 * 2 * 3)), np.array([math.log(3.0), 0.0]), (2, 2), Preprocessor()
        )
        probs = clf.predict_one(np.zeros((2, 2, 3)))
        assert np.abs(probs - [0.75, 0.25]).max() < 1e-12

    def test_matches_scalar_oracle(self, random_image):
        clf = random_toy_classifier(5, 8, 8, seed=3, g=Preprocessor((10, 20, 30), (2, 1, 0.5)))
        got = clf.predict_one(random_image)
        want = toy_probs_oracle(clf.W, clf.b, (10, 20, 30), (2, 1, 0.5), random_image)
        assert np.abs(got - want).max() < 1e-12

    def test_probabilities_sum_to_one(self, rng):
        clf = random_toy_classifier(7, 4, 4, seed=9)
        probs = clf.predict_batch(rng.uniform(0, 255, (10, 4, 4, 3)))
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9

    def test_logit_shift_invariance(self, random_image):
        clf = random_toy_classifier(3, 8, 8, seed=5)
        shifted = make_toy_linear_classifier(clf.W, clf.b + 11.5, (8, 8), clf.preprocessor)
        assert np.abs(clf.predict_one(random_image) - shifted.predict_one(random_image)).max() < 1e-12

    def test_repeat_calls_are_byte_equal(self, random_image):
        clf = random_toy_classifier(3, 8, 8, seed=5)
        a, b = clf.predict_one(random_image), clf.predict_one(random_image)
        assert np.array_equal(a, b)

    def test_batch_partition_invariance(self, rng):
        clf = random_toy_classifier(4, 4, 4, seed=1)
        images = rng.uniform(0, 255, (10, 4, 4, 3))
        whole = clf.predict_batch(images)
        singles = np.stack([clf.predict_one(im) for im in images])
        assert np.abs(whole - singles).max() < 1e-9
        halves = np.vstack([clf.predict_batch(images[:5]), clf.predict_batch(images[5:])])
        assert np.abs(whole - halves).max() < 1e-9

    def test_single_pixel_weight_is_monotone(self):
        # one weight on pixel (0, 0) channel 0; score must rise with that pixel
        W = np.zeros((2, 2 * 2 * 3))
        W[0, 0] = 0.01
        clf = make_toy_linear_classifier(W, np.zeros(2), (2, 2), Preprocessor())
        x = np.full((2, 2, 3), 100.0)
        probs = []
        for v in (0.0, 50.0, 100.0, 200.0, 255.0):
            y = x.copy()
            y[0, 0, 0] = v
            probs.append(class_probability(clf, y, 0))
        assert all(a < b for a, b in zip(probs, probs[1:]))

    def test_shape_validation(self, random_image):
        clf = uniform_toy_classifier(2, 4, 4)
        with pytest.raises(DimensionError):
            clf.predict_batch([random_image])  # 8x8 into a 4x4 model
        with pytest.raises(ParameterError):
            make_toy_linear_classifier(np.zeros((2, 10)), np.zeros(2), (2, 2), Preprocessor())

    def test_weights_file_roundtrip(self, tmp_path, random_image):
        clf = random_toy_classifier(3, 8, 8, seed=21, g=Preprocessor((1, 2, 3), (2, 2, 2)))
        path = tmp_path / "toy.npz"
        save_toy_classifier(path, clf)
        loaded = load_toy_classifier(path)
        assert np.array_equal(loaded.predict_one(random_image), clf.predict_one(random_image))
        assert loaded.preprocessor == clf.preprocessor

    def test_load_failure_is_backend_error(self, tmp_path):
        bad = tmp_path / "junk.npz"
        bad.write_bytes(b"not an npz")
        with pytest.raises(BackendError):
            load_toy_classifier(bad)


class TestHandleOps:
    def test_class_probability_bounds_and_range_check(self, random_image):
        clf = random_toy_classifier(3, 8, 8, seed=2)
        p = class_probability(clf, random_image, 1)
        assert 0.0 <= p <= 1.0
        with pytest.raises(ParameterError):
            class_probability(clf, random_image, 3)

    def test_argmax_and_tie_break(self):
        clf = uniform_toy_classifier(4, 2, 2)
        assert argmax_class(clf, np.zeros((2, 2, 3))) == 0  # 4-way tie -> lowest index
        assert int(np.argmax(np.array([0.1, 0.7, 0.2]))) == 1
        assert int(np.argmax(np.array([0.5, 0.5]))) == 0

    def test_softmax_rows_sum_to_one(self, rng):
        z = rng.normal(size=(6, 5)) * 50
        assert np.abs(softmax(z).sum(axis=1) - 1.0).max() < 1e-12


class TestNeutralSweep:
    def test_uniform_classifier_sweeps_flat(self):
        clf = uniform_toy_classifier(5, 4, 4)
        rows = neutral_input_sweep(clf, range(0, 256, 17))
        assert all(abs(r.max_prob - 0.2) < 1e-12 for r in rows)
        assert [r.gamma for r in rows] == sorted(r.gamma for r in rows)

    def test_brightness_classifier_is_monotone_with_closed_form(self):
        m = n = 4
        clf = brightness_toy_classifier(m, n, gain=0.05)
        rows = neutral_input_sweep(clf, range(256), include_probs=True)
        scores = [float(r.probs[0]) for r in rows]
        assert all(a < b for a, b in zip(scores, scores[1:]))
        for r in rows:
            # logit0 = gain * mean preprocessed pixel = gain * gamma here
            want = 1.0 / (1.0 + math.exp(-0.05 * r.gamma))
            assert abs(float(r.probs[0]) - want) < 1e-9

    def test_levels_validated(self):
        clf = uniform_toy_classifier(2, 2, 2)
        with pytest.raises(ParameterError):
            neutral_input_sweep(clf, [])
        with pytest.raises(ParameterError):
            neutral_input_sweep(clf, [300])


class TestSubprocessBackend:
    @pytest.fixture
    def worker(self, tmp_path):
        clf = random_toy_classifier(3, 4, 4, seed=77, g=Preprocessor((10, 20, 30)))
        path = tmp_path / "toy.npz"
        save_toy_classifier(path, clf)
        proc = SubprocessClassifier(
            [sys.executable, "-m", "perturbeval.toy_worker", str(path)],
            g=Preprocessor((10, 20, 30)),
        )
        yield clf, proc
        proc.close()

    def test_handshake_declares_geometry(self, worker):
        clf, proc = worker
        assert proc.K == 3
        assert proc.expected_input == (4, 4)

    def test_matches_in_process_backend(self, worker, rng):
        clf, proc = worker
        images = rng.integers(0, 256, size=(6, 4, 4, 3)).astype(np.float64)
        got = proc.predict_batch(images)
        want = clf.predict_batch(images)
        assert np.abs(got - want).max() < 1e-6

    def test_multiple_requests_echo_ids(self, worker, rng):
        _, proc = worker
        for _ in range(3):
            probs = proc.predict_batch(rng.uniform(0, 255, (2, 4, 4, 3)))
            assert probs.shape == (2, 3)

    def test_broken_command_raises_backend_error(self):
        with pytest.raises(BackendError):
            SubprocessClassifier([sys.executable, "-c", "pass"])


class TestOnnxAdapter:
    def test_layout_detection(self):
        assert _detect_layout([1, 3, 224, 224]) == (True, 224, 224)
        assert _detect_layout([1, 32, 48, 3]) == (False, 32, 48)
        with pytest.raises(BackendError):
            _detect_layout([1, 5, 224, 224])
        with pytest.raises(BackendError):
            _detect_layout([1, 224, 224])

    def test_stub_session_drives_the_adapter(self):
        # duck-typed session standing in for onnxruntime.InferenceSession
        class _Arg:
            def __init__(self, name, shape):
                self.name, self.shape = name, shape

        class _Session:
            def get_inputs(self):
                return [_Arg("input", [1, 3, 2, 2])]

            def get_outputs(self):
                return [_Arg("probs", [1, 4])]

            def run(self, names, feed):
                x = feed["input"]
                assert x.shape[1:] == (3, 2, 2)
                logits = x.reshape(x.shape[0], -1).astype(np.float64)[:, :4]
                e = np.exp(logits - logits.max(axis=1, keepdims=True))
                return [e / e.sum(axis=1, keepdims=True)]

        from perturbeval import OnnxClassifier

        clf = OnnxClassifier.__new__(OnnxClassifier)
        OnnxClassifier.__init__(clf, path=None, g=Preprocessor(), session=_Session())
        assert clf.K == 4
        assert clf.expected_input == (2, 2)
        probs = clf.predict_batch(np.zeros((2, 2, 2, 3)))
        assert np.abs(probs - 0.25).max() < 1e-6

    def test_missing_runtime_is_backend_error(self, tmp_path):
        try:
            import onnxruntime  # noqa: F401

            pytest.skip("onnxruntime installed; error path not reachable")
        except ImportError:
            pass
        from perturbeval import OnnxClassifier

        with pytest.raises(BackendError, match="onnxruntime"):
            OnnxClassifier(tmp_path / "model.onnx", Preprocessor())
