"""Phong shading folded into SH irradiance lookups, and the brute-force oracle.

View directions point from the camera toward the surface, so a head-on view
``d = -n`` reflects to ``omega_r = n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from relit.sh import EnvMapFn, _eval_env, check_unit, eval_irradiance, sphere_quadrature

__all__ = [
    "Material",
    "reflect",
    "shade_diffuse",
    "shade_specular",
    "shade",
    "phong_reference",
    "phong_integrals",
]


@dataclass(frozen=True)
class Material:
    k_d: tuple[float, float, float]
    k_s: float
    alpha: float = 1.0

    def __post_init__(self):
        k_d = np.asarray(self.k_d, dtype=np.float64)
        if k_d.shape != (3,) or np.any(k_d < 0) or np.any(k_d > 1):
            raise ValueError(f"k_d must be an RGB triple in [0, 1], got {self.k_d}")
        if not 0.0 <= self.k_s <= 1.0:
            raise ValueError(f"k_s must be in [0, 1], got {self.k_s}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


def reflect(d, n, check: bool = True) -> np.ndarray:
    """Mirror ``d`` about ``n``: ``d - 2 (d.n) n``. Batched over leading axes."""
    if check:
        d = check_unit(d, name="d")
        n = check_unit(n, name="n")
    else:
        d = np.asarray(d, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
    return d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n


def shade_diffuse(k_d, n, env, clamp: bool = True) -> np.ndarray:
    c = np.asarray(k_d, dtype=np.float64) * eval_irradiance(env, n)
    return np.maximum(c, 0.0) if clamp else c


def shade_specular(k_s, omega_r, env, clamp: bool = True) -> np.ndarray:
    c = np.asarray(k_s, dtype=np.float64)[..., None] * eval_irradiance(env, omega_r)
    return np.maximum(c, 0.0) if clamp else c


def shade(mat: Material, n, d, env, clamp: bool = True) -> np.ndarray:
    """Diffuse plus specular color at a surface point (specular exponent 1)."""
    omega_r = reflect(d, n)
    return shade_diffuse(mat.k_d, n, env, clamp) + shade_specular(mat.k_s, omega_r, env, clamp)


def phong_integrals(k_d, k_s, n, omega_r, dirs, radiance_w, alpha=1.0, clamp=True, chunk=1 << 16):
    """Batched Phong quadrature over precomputed nodes.

    ``k_d`` (M, 3), ``k_s`` (M,), ``n`` and ``omega_r`` (M, 3); ``radiance_w``
    is the environment at ``dirs`` already multiplied by the node weights.
    """
    diff = np.zeros((len(n), 3))
    spec = np.zeros((len(n), 3))
    for start in range(0, len(dirs), chunk):
        d = dirs[start:start + chunk]
        lw = radiance_w[start:start + chunk]
        cos_n = d @ n.T
        cos_r = d @ omega_r.T
        if clamp:
            cos_n = np.maximum(cos_n, 0.0)
            cos_r = np.maximum(cos_r, 0.0)
        if alpha != 1.0:
            cos_r = np.power(cos_r, alpha)
        diff += cos_n.T @ lw
        spec += cos_r.T @ lw
    return np.asarray(k_d) * diff + np.asarray(k_s)[:, None] * spec


def phong_reference(
    mat: Material,
    n,
    d,
    env: EnvMapFn,
    quad_samples: int = 200_000,
    clamp: bool = True,
    radiance: np.ndarray | None = None,
) -> np.ndarray:
    """Direct spherical quadrature of the Phong integral.

    Integrates ``k_d * max(n.w, 0) L(w) + k_s * max(w_r.w, 0)**alpha L(w)``
    over the sphere. With ``clamp=False`` the cosines enter unclamped, which
    reproduces the literal integrand (only meaningful for integer ``alpha``).

    ``n`` and ``d`` may be batched ``(M, 3)``; ``radiance`` may carry
    precomputed env values on the quadrature grid to share across calls.
    """
    n = check_unit(n, name="n")
    d = check_unit(d, name="d")
    omega_r = reflect(d, n, check=False)
    dirs, w = sphere_quadrature(quad_samples)
    L = _eval_env(env, dirs) if radiance is None else radiance
    n2 = np.atleast_2d(n)
    m = len(n2)
    out = phong_integrals(
        np.broadcast_to(np.asarray(mat.k_d, dtype=np.float64), (m, 3)),
        np.full(m, float(mat.k_s)),
        n2,
        np.atleast_2d(omega_r),
        dirs,
        L * w[:, None],
        mat.alpha,
        clamp,
    )
    return out if n.ndim == 2 else out[0]
