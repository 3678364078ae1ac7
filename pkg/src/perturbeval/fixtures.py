"""Constructed regression fixtures demonstrating baseline sensitivity.

Both fixtures share one idea: the toy classifier's logit gets +beta per
unit of a bright pixel (value 255) and -beta per unit of a dark pixel
(value 0).  Occluding the bright pixel matters only under a black
baseline (whitening it changes nothing since it is already white) and
occluding the dark pixel matters only under a white baseline.  Verdicts
and saliency maps that depend on the baseline follow by construction;
the tests validate both fixtures with brute-force oracles.
"""

from __future__ import annotations

import numpy as np

from .classifiers import ToyLinearClassifier
from .core import Preprocessor, SaliencyMap

__all__ = [
    "contrast_pair_classifier",
    "morf_inversion_fixture",
    "rise_sensitivity_fixture",
]

BETA = 1.0 / 64.0  # logit swing of 255 * BETA ~ 4 keeps scores off the rails


def contrast_pair_classifier() -> tuple[ToyLinearClassifier, np.ndarray]:
    """A 2-class toy model and 2x2 input with one loved and one hated pixel.

    Pixel (0, 0) is white with weight +BETA/3 per channel; pixel (1, 1)
    is black with weight -BETA/3; the two remaining pixels are mid-gray
    with zero weight.  Class 1's logit is identically zero.
    """
    g = Preprocessor()  # identity: mean 0, scale 1
    m = n = 2
    W = np.zeros((2, m * n * 3))
    W[0, 0:3] = BETA / 3.0  # pixel (0, 0), all channels
    W[0, 9:12] = -BETA / 3.0  # pixel (1, 1), all channels
    clf = ToyLinearClassifier(W, np.zeros(2), (m, n), g)
    x = np.array(
        [
            [[255.0, 255.0, 255.0], [127.0, 127.0, 127.0]],
            [[127.0, 127.0, 127.0], [0.0, 0.0, 0.0]],
        ]
    )
    return clf, x


def morf_inversion_fixture():
    """Classifier, input, and two maps whose MoRF verdict flips with the baseline.

    Map 1 ranks the bright pixel first and wins under the black baseline;
    map 2 ranks the dark pixel first and wins under the white baseline.
    """
    clf, x = contrast_pair_classifier()
    s1 = SaliencyMap(np.array([[1.0, 0.5], [0.4, 0.1]]), {"method": "fixture", "name": "map1"})
    s2 = SaliencyMap(np.array([[0.1, 0.5], [0.4, 1.0]]), {"method": "fixture", "name": "map2"})
    return clf, x, s1, s2


def rise_sensitivity_fixture():
    """Classifier and input whose RISE argmax moves with the baseline.

    With 2x2 mask cells on the 2x2 input each cell covers one pixel, so
    the saliency of a pixel is driven purely by whether keeping it raises
    the score.  Under the black baseline only the bright pixel does;
    under the white baseline only the dark pixel does.
    """
    return contrast_pair_classifier()
