"""Tri-plane feature field and its diffuse / specular decoders.

Planes are stored as one ``(3, R, R, C)`` array in the order XY, YZ, XZ.
Plane XY is indexed by (x, y), YZ by (y, z) and XZ by (x, z); the world cube
``[-bounds/2, bounds/2]^3`` maps linearly onto texel coordinates
``[0, R-1]``, and points outside clamp to the border texel.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "PLANE_AXES",
    "DIFFUSE_HIDDEN",
    "SPECULAR_HIDDEN",
    "DEFAULT_FEATURES",
    "DecoderWeights",
    "TriPlaneField",
    "ShadingSample",
    "softplus",
    "logistic",
    "sample_triplane",
    "decode_diffuse",
    "decode_specular",
    "decode",
    "density",
    "default_fd_step",
    "density_gradient_fd",
    "normal_consistency_loss",
]

PLANE_AXES = ((0, 1), (1, 2), (0, 2))
DIFFUSE_HIDDEN = 64
SPECULAR_HIDDEN = 32
DEFAULT_FEATURES = 32
NORMAL_EPS = 1e-8


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def logistic(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class DecoderWeights:
    """Fully connected layers; softplus between layers, none after the last.

    ``weights[i]`` has shape ``(in, out)`` and ``biases[i]`` shape ``(out,)``.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float32) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float32) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and w.shape[0] != ws[i - 1].shape[1]:
                raise ValueError(f"layer {i} input {w.shape[0]} != previous output {ws[i - 1].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
            w.flags.writeable = False
            b.flags.writeable = False
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dims(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != self.n_in:
            raise ValueError(f"decoder expects {self.n_in} input channels, got {h.shape[-1]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.astype(np.float64) + b.astype(np.float64)
            if i < last:
                h = softplus(h)
        return h


@dataclass(frozen=True)
class TriPlaneField:
    planes: np.ndarray
    diffuse: DecoderWeights
    specular: DecoderWeights
    bounds: float
    n_features: int = DEFAULT_FEATURES
    _planes64: np.ndarray = dc_field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.planes, dtype=np.float32)
        if p.ndim != 4 or p.shape[0] != 3 or p.shape[1] != p.shape[2]:
            raise ValueError(f"planes must be (3, R, R, C), got {p.shape}")
        if p.shape[1] < 2:
            raise ValueError("plane resolution must be at least 2")
        if not np.all(np.isfinite(p)):
            raise ValueError("plane features must be finite")
        if not self.bounds > 0:
            raise ValueError("bounds must be positive")
        c = p.shape[3]
        if self.diffuse.n_in != c or self.specular.n_in != c:
            raise ValueError("decoder input width must equal the plane channel count")
        if self.diffuse.n_out != 7 + self.n_features:
            raise ValueError(
                f"diffuse decoder must output 7 + n_features = {7 + self.n_features} values, "
                f"got {self.diffuse.n_out}"
            )
        if self.specular.n_out != 1:
            raise ValueError("specular decoder must output a single value")
        p.flags.writeable = False
        p64 = p.astype(np.float64)
        p64.flags.writeable = False
        object.__setattr__(self, "planes", p)
        object.__setattr__(self, "bounds", float(np.float32(self.bounds)))
        object.__setattr__(self, "_planes64", p64)

    @property
    def resolution(self) -> int:
        return self.planes.shape[1]

    @property
    def channels(self) -> int:
        return self.planes.shape[3]

    def __eq__(self, other):
        if not isinstance(other, TriPlaneField):
            return NotImplemented
        return (
            self.bounds == other.bounds
            and self.n_features == other.n_features
            and np.array_equal(self.planes, other.planes)
            and _weights_equal(self.diffuse, other.diffuse)
            and _weights_equal(self.specular, other.specular)
        )

    __hash__ = None


def _weights_equal(a: DecoderWeights, b: DecoderWeights) -> bool:
    return len(a.weights) == len(b.weights) and all(
        np.array_equal(x, y) for x, y in zip(a.weights + a.biases, b.weights + b.biases)
    )


@dataclass(frozen=True)
class ShadingSample:
    k_d: np.ndarray
    n: np.ndarray
    sigma: np.ndarray
    k_s: np.ndarray
    w: np.ndarray


def _texel(coord, bounds: float, res: int):
    u = (coord / bounds + 0.5) * (res - 1)
    u = np.clip(u, 0.0, res - 1)
    i0 = np.minimum(np.floor(u).astype(np.int64), res - 2)
    return i0, u - i0


def sample_triplane(field: TriPlaneField, x) -> np.ndarray:
    """Summed bilinear features of the three planes at points ``x`` (..., 3)."""
    x = np.asarray(x, dtype=np.float64)
    lead = x.shape[:-1]
    pts = x.reshape(-1, 3)
    res = field.resolution
    out = np.zeros((len(pts), field.channels))
    for p, (a, b) in enumerate(PLANE_AXES):
        grid = field._planes64[p]
        ia, fa = _texel(pts[:, a], field.bounds, res)
        ib, fb = _texel(pts[:, b], field.bounds, res)
        fa = fa[:, None]
        fb = fb[:, None]
        v00 = grid[ia, ib]
        v10 = grid[ia + 1, ib]
        v01 = grid[ia, ib + 1]
        v11 = grid[ia + 1, ib + 1]
        # lerp form keeps features that are constant along an axis bit-exact
        lo = v00 + fa * (v10 - v00)
        hi = v01 + fa * (v11 - v01)
        out += lo + fb * (hi - lo)
    return out.reshape(lead + (field.channels,))


def _normalize(v):
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    return v / np.maximum(norm, NORMAL_EPS)


def decode_diffuse(weights: DecoderWeights, f_x):
    """Return ``(k_d, n, sigma, w)`` decoded from aggregated features."""
    raw = weights.forward(f_x)
    k_d = logistic(raw[..., 0:3])
    n = _normalize(raw[..., 3:6])
    sigma = softplus(raw[..., 6])
    w = raw[..., 7:]
    return k_d, n, sigma, w


def decode_specular(weights: DecoderWeights, f_x):
    return logistic(weights.forward(f_x)[..., 0])


def decode(field: TriPlaneField, x) -> ShadingSample:
    f = sample_triplane(field, x)
    k_d, n, sigma, w = decode_diffuse(field.diffuse, f)
    return ShadingSample(k_d=k_d, n=n, sigma=sigma, k_s=decode_specular(field.specular, f), w=w)


def density(field: TriPlaneField, x) -> np.ndarray:
    return decode_diffuse(field.diffuse, sample_triplane(field, x))[2]


def default_fd_step(field: TriPlaneField) -> float:
    """A quarter texel."""
    return field.bounds / (4.0 * field.resolution)


def density_gradient_fd(field: TriPlaneField, x, h: float | None = None) -> np.ndarray:
    """Central differences of density along each world axis."""
    if h is None:
        h = default_fd_step(field)
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty(x.shape)
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        grad[..., axis] = (density(field, x + step) - density(field, x - step)) / (2.0 * h)
    return grad


def normal_consistency_loss(
    field: TriPlaneField, points, h: float | None = None, mode: str = "normalized"
) -> float:
    """Mean L1 distance between decoded normals and the density gradient.

    ``mode="normalized"`` compares against the unit vector along ``-grad``
    (outward for a density that falls off across the surface);
    ``mode="raw"`` compares against ``grad`` itself.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("normal consistency loss needs at least one point")
    grad = density_gradient_fd(field, pts, h)
    if mode == "normalized":
        target = _normalize(-grad)
    elif mode == "raw":
        target = grad
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n = decode_diffuse(field.diffuse, sample_triplane(field, pts))[1]
    return float(np.mean(np.sum(np.abs(n - target), axis=-1)))
