"""Discrete image deblurring pieces: Gaussian blur with an exact adjoint,
a smoothed first-order Tikhonov regularizer, deterministic noise, synthetic
phantoms and error metrics.

Images are square N x N float arrays on the unit square (grid spacing
h = 1/N), intensities nominally in [0, 1].  Convolution uses zero padding;
the discrete gradient uses forward differences with replicate boundary, so
constant images sit in the flat set of the regularizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ArrayLike = Union[np.ndarray, "ImageField"]


@dataclass
class ImageField:
    """Square scalar grid with spacing 1/n, row-major values."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"image must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("image values must be finite")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n


def _arr(u: ArrayLike) -> np.ndarray:
    if isinstance(u, ImageField):
        return u.values
    return np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# blurring operator


@dataclass
class Kernel:
    size: int
    sigma: float
    weights: np.ndarray


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Isotropic Gaussian sampled on the centered integer lattice, normalised
    to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"kernel sigma must be positive, got {sigma}")
    r = size // 2
    ax = np.arange(-r, r + 1, dtype=float)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    w = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
    w /= w.sum()
    return Kernel(size=size, sigma=float(sigma), weights=w)


def _correlate(img: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # zero-padded correlation, output size preserved
    r = weights.shape[0] // 2
    if r == 0:
        return weights[0, 0] * img
    padded = np.pad(img, r)
    windows = sliding_window_view(padded, weights.shape)
    return np.einsum("ijkl,kl->ij", windows, weights)


def blur_apply(image: ArrayLike, kernel: Kernel) -> np.ndarray:
    """Discrete 2-D convolution with zero padding."""
    return _correlate(_arr(image), kernel.weights[::-1, ::-1])


def blur_adjoint(image: ArrayLike, kernel: Kernel) -> np.ndarray:
    """Exact adjoint of :func:`blur_apply`: zero-padded correlation."""
    return _correlate(_arr(image), kernel.weights)


class BlurOperator:
    """Forward-operator handle (apply/adjoint pair) for the engine."""

    def __init__(self, kernel: Kernel):
        self.kernel = kernel

    def apply(self, x: np.ndarray) -> np.ndarray:
        return blur_apply(x, self.kernel)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return blur_adjoint(y, self.kernel)


# ---------------------------------------------------------------------------
# regularizer


@dataclass
class H1Params:
    """Smoothing offset of the regularizer; delta = 0 recovers an exact
    (positively 1-homogeneous) norm."""

    delta: float = 1e-3

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError("delta must be >= 0")


def _forward_diffs(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # replicate boundary: differences across the last row/column vanish
    dx = np.zeros_like(u)
    dy = np.zeros_like(u)
    dx[:-1, :] = u[1:, :] - u[:-1, :]
    dy[:, :-1] = u[:, 1:] - u[:, :-1]
    return dx, dy


def _diff_adjoint(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    out = -dx.copy()
    out[1:, :] += dx[:-1, :]
    out -= dy
    out[:, 1:] += dy[:, :-1]
    return out


def h1_value(u: ArrayLike, params: H1Params) -> float:
    """(||u||_2^2 + ||grad u||_2^2 + delta^2)^(1/2) with forward differences."""
    v = _arr(u)
    dx, dy = _forward_diffs(v)
    s = float(np.dot(v.ravel(), v.ravel())
              + np.dot(dx.ravel(), dx.ravel())
              + np.dot(dy.ravel(), dy.ravel())) + params.delta**2
    return math.sqrt(s)


def h1_gradient(u: ArrayLike, params: H1Params) -> np.ndarray:
    """Exact gradient of :func:`h1_value` (zero at the origin when delta = 0,
    by convention)."""
    v = _arr(u)
    dx, dy = _forward_diffs(v)
    s = float(np.dot(v.ravel(), v.ravel())
              + np.dot(dx.ravel(), dx.ravel())
              + np.dot(dy.ravel(), dy.ravel())) + params.delta**2
    if s == 0.0:
        return np.zeros_like(v)
    return (v + _diff_adjoint(dx, dy)) / math.sqrt(s)


def h1_distance(a: ArrayLike, b: ArrayLike) -> float:
    """Discrete first-order Sobolev distance (no smoothing offset)."""
    return h1_value(_arr(a) - _arr(b), H1Params(delta=0.0))


class H1Regularizer:
    """Regularizer handle for the engine; 1-homogeneous exactly when delta = 0."""

    def __init__(self, delta: float = 1e-3):
        self.params = H1Params(delta=delta)

    @property
    def one_homogeneous(self) -> bool:
        return self.params.delta == 0.0

    def value(self, u: np.ndarray) -> float:
        return h1_value(u, self.params)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return h1_gradient(u, self.params)


def objective(sigma_prev: ArrayLike, data: ArrayLike, lambda_n: float,
              kernel: Kernel, params: H1Params
              ) -> Callable[[np.ndarray], Tuple[float, np.ndarray]]:
    """Value-and-gradient handle for the step subproblem
    u -> lambda_n * ||data - blur(u + sigma_prev)||_2^2 + R(u)."""
    sp = _arr(sigma_prev)
    d = _arr(data)

    def fg(u: np.ndarray) -> Tuple[float, np.ndarray]:
        uu = _arr(u)
        r = d - blur_apply(uu + sp, kernel)
        value = lambda_n * float(np.dot(r.ravel(), r.ravel())) + h1_value(uu, params)
        grad = -2.0 * lambda_n * blur_adjoint(r, kernel) + h1_gradient(uu, params)
        return value, grad

    return fg


# ---------------------------------------------------------------------------
# deterministic noise


_GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def counter_uniforms(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Deterministic uniforms in (0, 1): value i is splitmix64 applied to
    seed + (offset + i + 1) * 0x9E3779B97F4A7C15 (mod 2**64), then mapped to
    ((x >> 11) + 0.5) * 2**-53.  Identical across platforms and runs."""
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    state = (np.uint64(seed & _MASK) + idx * np.uint64(_GAMMA)).astype(np.uint64)
    bits = _splitmix64(state)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def counter_normals(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Standard normals via the Box-Muller transform on counter uniforms."""
    pairs = (count + 1) // 2
    u = counter_uniforms(seed, 2 * pairs, offset=offset)
    u1, u2 = u[:pairs], u[pairs:]
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(2.0 * np.pi * u2)
    z[1::2] = radius * np.sin(2.0 * np.pi * u2)
    return z[:count]


def add_gaussian_noise(image: ArrayLike, variance: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise with the given variance using the
    counter-based generator, so identical (image, variance, seed) triples give
    bit-identical output."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    v = _arr(image)
    if variance == 0:
        return v.copy()
    noise = counter_normals(seed, v.size).reshape(v.shape)
    return v + math.sqrt(variance) * noise


# ---------------------------------------------------------------------------
# phantoms and metrics


def nebula_phantom(n: int, seed: int = 0) -> np.ndarray:
    """Deterministic smooth test image: a handful of anisotropic Gaussian
    blobs over a faint halo, normalised into [0, 1].  Borders fade smoothly
    into the background, which suits a smoothness-promoting regularizer."""
    if n < 4:
        raise ValueError("phantom needs n >= 4")
    blobs = 7
    u = counter_uniforms(seed ^ 0x5EED, 5 * blobs)
    ax = (np.arange(n, dtype=float) + 0.5) / n
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    img = np.zeros((n, n))
    for i in range(blobs):
        cx, cy, s1, s2, ang = u[5 * i:5 * i + 5]
        cx = 0.2 + 0.6 * cx
        cy = 0.2 + 0.6 * cy
        s1 = 0.04 + 0.12 * s1
        s2 = 0.04 + 0.12 * s2
        ang *= math.pi
        dx = xx - cx
        dy = yy - cy
        ca, sa = math.cos(ang), math.sin(ang)
        a = (ca * dx + sa * dy) / s1
        b = (-sa * dx + ca * dy) / s2
        amp = 0.35 + 0.65 * (i + 1) / blobs
        img += amp * np.exp(-0.5 * (a**2 + b**2))
    # broad halo centred on the brightest blob region
    img += 0.15 * np.exp(-((xx - 0.5) ** 2 + (yy - 0.5) ** 2) / 0.18)
    img -= img.min()
    img /= img.max()
    return img


def relative_error(a: ArrayLike, b: ArrayLike) -> float:
    """||a - b||_2 / ||b||_2; rejects a zero-norm reference."""
    av, bv = _arr(a), _arr(b)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    ref = float(np.linalg.norm(bv.ravel()))
    if ref == 0.0:
        raise ValueError("reference image has zero norm")
    return float(np.linalg.norm((av - bv).ravel())) / ref
