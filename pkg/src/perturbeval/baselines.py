"""The baseline-image family: constants, zero-after-preprocessing, blur.

A baseline image is what occluded pixels are replaced with.  Three kinds
are supported: constant gray levels, the image whose preprocessed form
is the zero tensor, and a Gaussian blur of the input itself (the only
kind that uses local information from the input).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np
from scipy.ndimage import correlate1d

from .core import Preprocessor, as_image, inverse_preprocess
from .errors import ParameterError

__all__ = [
    "BaselineSpec",
    "BaselineImage",
    "constant_baseline",
    "inv_preproc_baseline",
    "blur_baseline",
    "gaussian_blur",
    "realize_baseline",
    "baseline_set",
]


@dataclass(frozen=True)
class BaselineSpec:
    """Tagged description of a baseline image.

    Kinds: ``constant`` (gray level gamma in 0..255), ``inv`` (the
    zero-after-preprocessing image), ``blur`` (Gaussian blur of the
    input with standard deviation sigma).  Round-trips through the tag
    strings ``constant:127``, ``inv``, ``blur:10``.
    """

    kind: str
    gamma: int | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.gamma is None or not 0 <= int(self.gamma) <= 255 or int(self.gamma) != self.gamma:
                raise ParameterError(f"constant baseline needs integer gamma in [0, 255], got {self.gamma}")
        elif self.kind == "blur":
            if self.sigma is None or not self.sigma > 0:
                raise ParameterError(f"blur baseline needs sigma > 0, got {self.sigma}")
        elif self.kind != "inv":
            raise ParameterError(f"unknown baseline kind {self.kind!r}")

    @classmethod
    def constant(cls, gamma: int) -> "BaselineSpec":
        return cls("constant", gamma=gamma)

    @classmethod
    def inv(cls) -> "BaselineSpec":
        return cls("inv")

    @classmethod
    def blur(cls, sigma: float = 10.0) -> "BaselineSpec":
        return cls("blur", sigma=sigma)

    @property
    def tag(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.gamma}"
        if self.kind == "blur":
            return f"blur:{self.sigma:g}"
        return "inv"

    @classmethod
    def parse_tag(cls, tag: str) -> "BaselineSpec":
        t = tag.strip()
        if t == "inv":
            return cls.inv()
        if t.startswith("constant:"):
            return cls.constant(int(t.split(":", 1)[1]))
        if t.startswith("blur:"):
            return cls.blur(float(t.split(":", 1)[1]))
        raise ParameterError(f"cannot parse baseline tag {tag!r}")


@dataclass(frozen=True)
class BaselineImage:
    """A realized baseline with its spec.

    ``input_dependent`` is True only for blur baselines; all others are
    fixed once the preprocessor and size are known.
    """

    image: np.ndarray
    spec: BaselineSpec

    def __post_init__(self):
        img = as_image(self.image).copy()
        img.setflags(write=False)
        object.__setattr__(self, "image", img)

    @property
    def input_dependent(self) -> bool:
        return self.spec.kind == "blur"

    @property
    def tag(self) -> str:
        return self.spec.tag


def constant_baseline(gamma: int, m: int, n: int) -> BaselineImage:
    """Constant image of level gamma (0 = black, 127 = gray, 255 = white)."""
    spec = BaselineSpec.constant(gamma)
    return BaselineImage(np.full((m, n, 3), float(gamma)), spec)


def inv_preproc_baseline(g: Preprocessor, m: int, n: int) -> BaselineImage:
    """The image whose preprocessed form is exactly the zero tensor."""
    img = inverse_preprocess(np.zeros((m, n, 3)), g)
    return BaselineImage(img, BaselineSpec.inv())


def gaussian_blur(x, sigma: float) -> np.ndarray:
    """Separable Gaussian blur per channel.

    Kernel radius ceil(3*sigma), normalized to sum 1; borders use
    reflect padding (edge sample included, so the mirror has period 2n),
    which handles radii larger than the image and preserves the mean.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    img = as_image(x)
    radius = ceil(3 * sigma)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(t * t) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = correlate1d(img, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def blur_baseline(x, sigma: float = 10.0) -> BaselineImage:
    """Gaussian-blurred copy of the input as a baseline image."""
    return BaselineImage(gaussian_blur(x, sigma), BaselineSpec.blur(sigma))


def realize_baseline(spec: BaselineSpec, x, g: Preprocessor) -> BaselineImage:
    """Build the baseline image a spec describes for a given input image."""
    m, n = as_image(x).shape[:2]
    if spec.kind == "constant":
        return constant_baseline(spec.gamma, m, n)
    if spec.kind == "inv":
        return inv_preproc_baseline(g, m, n)
    return blur_baseline(x, spec.sigma)


def baseline_set(
    gammas,
    sigmas,
    g: Preprocessor,
    x,
    include_inv: bool = True,
) -> list[BaselineImage]:
    """Realize a whole family: constants ascending, then inv, then blurs ascending.

    Duplicate levels are collapsed.  The default family used throughout
    is gammas {0, 127, 255} with sigmas {10} plus the inv image.
    """
    gammas = sorted(set(int(v) for v in gammas))
    sigmas = sorted(set(float(v) for v in sigmas))
    if not gammas and not sigmas and not include_inv:
        raise ParameterError("baseline set would be empty")
    m, n = as_image(x).shape[:2]
    out = [constant_baseline(v, m, n) for v in gammas]
    if include_inv:
        out.append(inv_preproc_baseline(g, m, n))
    out.extend(blur_baseline(x, s) for s in sigmas)
    return out
