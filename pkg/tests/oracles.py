"""Independent reference implementations used to verify the library.

Everything here is deliberately scalar and naive: per-pixel loops,
dense kernels, from-scratch rebuilds.  None of it shares code with the
library paths it checks.
"""

import math

import numpy as np


def bilinear_upsample_oracle(cells, m, n, dy, dx):
    """Per-pixel bilinear interpolation of a cell grid, product form.

    Cell (i, j) sits at canvas position (i*s_y + s_y//2, j*s_x + s_x//2)
    with the field clamped outside the outermost cell centers; the
    output window starts at (dy, dx).
    """
    cells = np.asarray(cells, dtype=float)
    h, w = cells.shape
    s_y, s_x = math.ceil(m / h), math.ceil(n / w)
    out = np.empty((m, n))
    for yo in range(m):
        for xo in range(n):
            u = min(max((yo + dy - s_y // 2) / s_y, 0.0), h - 1.0)
            v = min(max((xo + dx - s_x // 2) / s_x, 0.0), w - 1.0)
            i0, j0 = min(int(math.floor(u)), h - 1), min(int(math.floor(v)), w - 1)
            i1, j1 = min(i0 + 1, h - 1), min(j0 + 1, w - 1)
            t, s = u - i0, v - j0
            out[yo, xo] = (
                (1 - t) * (1 - s) * cells[i0, j0]
                + (1 - t) * s * cells[i0, j1]
                + t * (1 - s) * cells[i1, j0]
                + t * s * cells[i1, j1]
            )
    return out


def _mirror(i, n):
    """Reflect an index into [0, n) with the edge sample included (period 2n)."""
    p = i % (2 * n)
    return p if p < n else 2 * n - 1 - p


def dense_gaussian_blur_oracle(img, sigma):
    """Direct dense 2-D convolution with an explicit truncated kernel."""
    img = np.asarray(img, dtype=float)
    m, n = img.shape[:2]
    radius = math.ceil(3 * sigma)
    t = np.arange(-radius, radius + 1, dtype=float)
    k1 = np.exp(-(t * t) / (2.0 * sigma * sigma))
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    out = np.zeros_like(img)
    for y in range(m):
        for x in range(n):
            acc = np.zeros(img.shape[2])
            for a in range(-radius, radius + 1):
                for b in range(-radius, radius + 1):
                    acc += k2[a + radius, b + radius] * img[_mirror(y + a, m), _mirror(x + b, n)]
            out[y, x] = acc
    return out


def toy_probs_oracle(W, b, mean, scale, img):
    """Scalar-math softmax of W @ vec((img - mean) * scale) + b."""
    z = ((np.asarray(img, dtype=float) - np.asarray(mean)) * np.asarray(scale)).ravel()
    logits = [float(np.dot(row, z)) + float(bi) for row, bi in zip(W, b)]
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = sum(exps)
    return np.array([e / total for e in exps])


def curve_scores_oracle(x, baseline_img, order, r, prob_fn):
    """Re-evaluate every occlusion step from scratch.

    Step k rebuilds the occluded image from the original by replacing
    the first k*r ranked pixels, then asks ``prob_fn`` for the score;
    nothing is carried over between steps.
    """
    x = np.asarray(x, dtype=float)
    m, n = x.shape[:2]
    steps = math.ceil(m * n / r)
    flat_a = np.asarray(baseline_img, dtype=float).reshape(m * n, 3)
    scores = []
    for k in range(steps + 1):
        img = x.copy().reshape(m * n, 3)
        sel = order[: k * r]
        img[sel] = flat_a[sel]
        scores.append(prob_fn(img.reshape(m, n, 3)))
    return np.array(scores)


def rise_expectation_oracle(x, baseline_img, w, h, p, target, prob_fn):
    """Expectation of score-weighted masks by explicit enumeration.

    Walks all 2**(w*h) cell patterns at crop (0, 0), weighting each by
    its Bernoulli probability; returns sum(Pr * f * q) / p.
    """
    x = np.asarray(x, dtype=float)
    m, n = x.shape[:2]
    total = np.zeros((m, n))
    for idx in range(2 ** (w * h)):
        cells = np.array(
            [(idx >> (w * h - 1 - k)) & 1 for k in range(w * h)], dtype=float
        ).reshape(h, w)
        pr = (p ** cells.sum()) * ((1 - p) ** (w * h - cells.sum()))
        q = bilinear_upsample_oracle(cells, m, n, 0, 0)
        blended = q[:, :, None] * x + (1 - q[:, :, None]) * np.asarray(baseline_img, dtype=float)
        total += pr * prob_fn(blended) * q
    return total / p
