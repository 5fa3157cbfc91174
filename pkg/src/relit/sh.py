"""Real spherical harmonics up to band 2 and irradiance environment maps.

Coefficient arrays are plain ``(9, 3)`` float64 arrays (one RGB triple per
basis function) in the order::

    (0,0) (1,-1) (1,0) (1,1) (2,-2) (2,-1) (2,0) (2,1) (2,2)

The basis is real and orthonormal over the unit sphere with no Condon-Shortley
phase, so the Lambertian kernel constants ``pi, 2pi/3, pi/4`` apply directly.
A *radiance* array holds the raw projection of an environment; an
*irradiance* array holds the same coefficients after convolution with the
clamped cosine. Both are evaluated with :func:`eval_irradiance`.
"""

from __future__ import annotations

import functools
import math
from typing import Callable

import numpy as np

__all__ = [
    "InvalidDirectionError",
    "SH_ORDER",
    "LAMBERT_KERNEL",
    "check_unit",
    "sh_basis",
    "sphere_quadrature",
    "project_environment",
    "convolve_lambertian",
    "eval_irradiance",
    "synthesize",
    "sh_environment",
    "directional_light",
    "lambert_kernel_numeric",
    "render_light_sphere",
    "as_sh",
]

SH_ORDER = ((0, 0), (1, -1), (1, 0), (1, 1), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2))

_C0 = math.sqrt(1.0 / (4.0 * math.pi))  # 0.282095
_C1 = math.sqrt(3.0 / (4.0 * math.pi))  # 0.488603
_C2 = math.sqrt(15.0 / (4.0 * math.pi))  # 1.092548
_C20 = math.sqrt(5.0 / (16.0 * math.pi))  # 0.315392
_C22 = math.sqrt(15.0 / (16.0 * math.pi))  # 0.546274

# Clamped-cosine kernel per band; checked against lambert_kernel_numeric in tests.
LAMBERT_KERNEL = np.array([math.pi, 2.0 * math.pi / 3.0, math.pi / 4.0])
_BAND = np.array([0, 1, 1, 1, 2, 2, 2, 2, 2])

EnvMapFn = Callable[[np.ndarray], np.ndarray]


class InvalidDirectionError(ValueError):
    """A direction argument is not a unit vector."""


def check_unit(v, tol: float = 1e-6, name: str = "direction") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1:] != (3,):
        raise InvalidDirectionError(f"{name} must have a trailing axis of 3, got {v.shape}")
    norm = np.sqrt(np.sum(v * v, axis=-1))
    if not np.all(np.abs(norm - 1.0) <= tol):
        worst = float(np.max(np.abs(norm - 1.0)))
        raise InvalidDirectionError(f"{name} is not unit length (|norm-1| = {worst:.3g})")
    return v


def as_sh(coeffs) -> np.ndarray:
    """Validate and copy a coefficient array to ``(9, 3)`` float64."""
    c = np.array(coeffs, dtype=np.float64)
    if c.shape == (9,):
        c = np.repeat(c[:, None], 3, axis=1)
    if c.shape != (9, 3):
        raise ValueError(f"expected 9 RGB coefficients, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("SH coefficients must be finite")
    return c


def _basis(v: np.ndarray) -> np.ndarray:
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack(
        [
            np.full_like(x, _C0),
            _C1 * y,
            _C1 * z,
            _C1 * x,
            _C2 * x * y,
            _C2 * y * z,
            _C20 * (3.0 * z * z - 1.0),
            _C2 * x * z,
            _C22 * (x * x - y * y),
        ],
        axis=-1,
    )


def sh_basis(n, check: bool = True) -> np.ndarray:
    """The 9 basis values at unit direction(s) ``n``; shape ``(..., 9)``."""
    n = check_unit(n) if check else np.asarray(n, dtype=np.float64)
    return _basis(n)


@functools.lru_cache(maxsize=4)
def sphere_quadrature(n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic equal-area midpoint grid on the unit sphere.

    Cells are uniform in ``z = cos(theta)`` and in azimuth, so every cell has
    the same solid angle ``4*pi / count``. Returns ``(dirs, weights)`` with at
    least ``n_samples`` nodes.
    """
    if n_samples < 1:
        raise ValueError("quad_samples must be >= 1")
    n_z = max(1, int(round(math.sqrt(n_samples / math.pi))))
    n_phi = max(1, -(-n_samples // n_z))
    z = 1.0 - (np.arange(n_z) + 0.5) * (2.0 / n_z)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    dirs = np.empty((n_z, n_phi, 3))
    dirs[..., 0] = s[:, None] * np.cos(phi)[None, :]
    dirs[..., 1] = s[:, None] * np.sin(phi)[None, :]
    dirs[..., 2] = z[:, None]
    dirs = dirs.reshape(-1, 3)
    weights = np.full(len(dirs), 4.0 * math.pi / len(dirs))
    dirs.flags.writeable = False
    weights.flags.writeable = False
    return dirs, weights


def _eval_env(env: EnvMapFn, dirs: np.ndarray) -> np.ndarray:
    vals = np.asarray(env(dirs), dtype=np.float64)
    if vals.ndim == 1:
        vals = np.repeat(vals[:, None], 3, axis=1)
    if vals.shape != (len(dirs), 3):
        raise ValueError(f"environment returned shape {vals.shape}, expected ({len(dirs)}, 3)")
    return vals


def project_environment(env: EnvMapFn, quad_samples: int = 200_000, chunk: int = 1 << 18) -> np.ndarray:
    """Project an environment map onto the 9 basis functions.

    ``env`` maps an ``(M, 3)`` array of unit directions to ``(M, 3)`` RGB
    radiance (or ``(M,)`` grey). Returns the raw radiance coefficients.
    """
    dirs, w = sphere_quadrature(quad_samples)
    out = np.zeros((9, 3))
    for start in range(0, len(dirs), chunk):
        d = dirs[start:start + chunk]
        vals = _eval_env(env, d) * w[start:start + chunk, None]
        out += _basis(d).T @ vals
    return out


def convolve_lambertian(raw) -> np.ndarray:
    """Scale radiance coefficients by the clamped-cosine kernel, band by band."""
    raw = as_sh(raw)
    return raw * LAMBERT_KERNEL[_BAND][:, None]


def eval_irradiance(env, n, check: bool = True) -> np.ndarray:
    """Sum of ``l_k H_k(n)``; ``n`` may be batched as ``(..., 3)``."""
    env = np.asarray(env, dtype=np.float64)
    return sh_basis(n, check=check) @ env


def synthesize(coeffs, dirs) -> np.ndarray:
    """Reconstruct radiance from raw coefficients at ``dirs``."""
    return eval_irradiance(coeffs, dirs, check=False)


def sh_environment(coeffs) -> EnvMapFn:
    """A band-limited environment map whose projection is ``coeffs``."""
    c = as_sh(coeffs)

    def env(dirs):
        return _basis(np.asarray(dirs, dtype=np.float64)) @ c

    return env


def directional_light(direction, color=(1.0, 1.0, 1.0), ambient=0.0) -> np.ndarray:
    """Irradiance coefficients of a distant point light plus uniform ambient.

    ``color`` is the light's irradiance at normal incidence, ``ambient`` a
    constant radiance added over the whole sphere.
    """
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    color = np.broadcast_to(np.asarray(color, dtype=np.float64), (3,))
    raw = _basis(d)[:, None] * color[None, :]
    raw[0] += 4.0 * math.pi * _C0 * np.broadcast_to(np.asarray(ambient, dtype=np.float64), (3,))
    return convolve_lambertian(raw)


def lambert_kernel_numeric(n_nodes: int = 64) -> np.ndarray:
    """Clamped-cosine band constants by Gauss-Legendre quadrature.

    ``2*pi * integral_0^1 t P_l(t) dt`` for l = 0, 1, 2; independent of the
    hard-coded table.
    """
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    legendre = [np.ones_like(t), t, 0.5 * (3.0 * t * t - 1.0)]
    return np.array([2.0 * math.pi * np.sum(w * t * p) for p in legendre])


def render_light_sphere(env, resolution: int, normalize: bool = False) -> np.ndarray:
    """Light-probe image: irradiance on the front hemisphere facing +z.

    Image x runs along world +x and image up along world +y. Background
    pixels are zero. With ``normalize`` the image is divided by its maximum.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    env = as_sh(env)
    c = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    x = np.broadcast_to(c[None, :], (resolution, resolution))
    y = np.broadcast_to(-c[:, None], (resolution, resolution))
    r2 = x * x + y * y
    inside = r2 < 1.0
    n = np.stack([x, y, np.sqrt(np.maximum(0.0, 1.0 - r2))], axis=-1)
    img = np.zeros((resolution, resolution, 3))
    img[inside] = _basis(n[inside]) @ env
    if normalize:
        peak = img.max()
        if peak > 0:
            img = img / peak
    return img
