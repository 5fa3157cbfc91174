"""Pinhole cameras, ray generation and volume rendering of whole images."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from relit.field import TriPlaneField
from relit.kernels import render_rays
from relit.sh import as_sh, check_unit

__all__ = [
    "Camera",
    "Ray",
    "RenderOptions",
    "RenderOutput",
    "NumericError",
    "orbit_camera",
    "generate_rays",
    "integrate_ray",
    "render_image",
    "CHUNK_RAYS",
]

# Fixed work unit; chunking never depends on the worker count.
CHUNK_RAYS = 1024


class NumericError(ArithmeticError):
    """Non-finite values produced while rendering."""


@dataclass(frozen=True)
class Camera:
    """World-from-camera pose and pinhole intrinsics.

    Camera axes follow the OpenCV convention: +x right, +y down, +z forward.
    ``rotation`` columns are those axes expressed in world coordinates.
    """

    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    t_near: float
    t_far: float

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-6:
            raise ValueError("camera rotation is not orthonormal")
        if not (0 < self.t_near < self.t_far):
            raise ValueError("need 0 < t_near < t_far")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.array(self.translation, dtype=np.float64).reshape(3))

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]


def orbit_camera(
    yaw: float = 0.0,
    pitch: float = 0.0,
    distance: float = 2.7,
    fov: float = 30.0,
    width: int = 64,
    height: int | None = None,
    center=(0.0, 0.0, 0.0),
    t_near: float | None = None,
    t_far: float | None = None,
    radius: float = 1.0,
) -> Camera:
    """Camera on a sphere around ``center`` looking at it, world +y up.

    ``yaw``/``pitch`` are in degrees; yaw 0 puts the camera on the +z axis.
    ``fov`` is the vertical field of view in degrees. Near/far default to
    ``distance -/+ radius``, bracketing a sphere of that radius at the center.
    """
    height = width if height is None else height
    yaw_r, pitch_r = math.radians(yaw), math.radians(pitch)
    center = np.asarray(center, dtype=np.float64)
    offset = np.array(
        [math.cos(pitch_r) * math.sin(yaw_r), math.sin(pitch_r), math.cos(pitch_r) * math.cos(yaw_r)]
    )
    pos = center + distance * offset
    forward = -offset
    right = np.cross(forward, [0.0, 1.0, 0.0])
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("camera looks straight along the up axis")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    focal = 0.5 * height / math.tan(math.radians(fov) / 2.0)
    t_near = max(distance - radius, 1e-3) if t_near is None else t_near
    t_far = distance + radius if t_far is None else t_far
    return Camera(
        rotation=np.stack([right, down, forward], axis=1),
        translation=pos,
        fx=focal,
        fy=focal,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        t_near=t_near,
        t_far=t_far,
    )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "direction", check_unit(np.asarray(self.direction).reshape(3)))


@dataclass(frozen=True)
class RenderOptions:
    """Per-render settings.

    ``seed`` switches from midpoint samples to stratified jitter. ``clamp``
    guards negative SH reconstructions; turning it off makes the renderer
    exactly linear in the lighting. ``include_specular=False`` renders the
    diffuse term only.
    """

    samples: int = 64
    seed: int | None = None
    albedo_mode: bool = False
    specular_scale: float = 1.0
    clamp: bool = True
    include_specular: bool = True
    features: bool = True
    backend: str | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples per ray must be >= 1")
        if not self.specular_scale >= 0:
            raise ValueError("specular_scale must be non-negative")


@dataclass
class RenderOutput:
    color: np.ndarray
    features: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray


def generate_rays(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ray origins and unit directions, each ``(H, W, 3)``.

    Rays pass through pixel centres ``(j + 0.5, i + 0.5)``.
    """
    u = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
    v = (np.arange(cam.height) + 0.5 - cam.cy) / cam.fy
    d_cam = np.stack(
        [
            np.broadcast_to(u[None, :], (cam.height, cam.width)),
            np.broadcast_to(v[:, None], (cam.height, cam.width)),
            np.ones((cam.height, cam.width)),
        ],
        axis=-1,
    )
    d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)
    dirs = d_cam @ cam.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(cam.translation, dirs.shape).copy()
    return origins, dirs


def _jitter(seed: int, n_rays: int, samples: int) -> np.ndarray:
    return np.random.default_rng(seed).random((n_rays, samples))


def _check_finite(out, where: str):
    for name, arr in zip(("color", "features", "depth", "opacity"), out):
        bad = ~np.isfinite(arr)
        if np.any(bad):
            raise NumericError(f"non-finite {name} {where}")


def integrate_ray(
    field: TriPlaneField,
    env,
    ray: Ray,
    opt: RenderOptions,
    t_near: float,
    t_far: float,
):
    """Render one ray; returns ``(rgb, features, depth, opacity)``."""
    if not (0 < t_near < t_far):
        raise ValueError("need 0 < t_near < t_far")
    jitter = None if opt.seed is None else _jitter(opt.seed, 1, opt.samples)
    out = render_rays(
        field, as_sh(env), ray.origin[None], ray.direction[None], t_near, t_far, opt.samples, jitter,
        opt.albedo_mode, opt.specular_scale, opt.clamp, opt.include_specular, opt.features, opt.backend,
    )
    _check_finite(out, "along ray")
    color, feats, depth, opacity = out
    return color[0], feats[0], float(depth[0]), float(opacity[0])


def render_image(
    field: TriPlaneField,
    env,
    cam: Camera,
    opt: RenderOptions = RenderOptions(),
    workers: int = 1,
) -> RenderOutput:
    """Volume render every pixel of ``cam``.

    Pixels are processed in fixed chunks of :data:`CHUNK_RAYS` rays, so the
    output is byte-identical for any ``workers`` count.
    """
    sh = as_sh(env)
    origins, dirs = generate_rays(cam)
    h, w = cam.height, cam.width
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)
    n = len(dirs)
    jitter = None if opt.seed is None else _jitter(opt.seed, n, opt.samples)
    color = np.empty((n, 3))
    feats = np.empty((n, field.n_features))
    depth = np.empty(n)
    opacity = np.empty(n)

    def run(start):
        sl = slice(start, min(start + CHUNK_RAYS, n))
        out = render_rays(
            field, sh, origins[sl], dirs[sl], cam.t_near, cam.t_far, opt.samples,
            None if jitter is None else jitter[sl],
            opt.albedo_mode, opt.specular_scale, opt.clamp, opt.include_specular, opt.features, opt.backend,
        )
        for arr in out:
            bad = ~np.isfinite(arr)
            if np.any(bad):
                idx = start + int(np.argwhere(bad.reshape(len(arr), -1).any(axis=1))[0, 0])
                raise NumericError(f"non-finite output at pixel (row {idx // w}, col {idx % w})")
        color[sl], feats[sl], depth[sl], opacity[sl] = out

    starts = range(0, n, CHUNK_RAYS)
    if workers <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    return RenderOutput(
        color=color.reshape(h, w, 3),
        features=feats.reshape(h, w, -1),
        depth=depth.reshape(h, w),
        opacity=opacity.reshape(h, w),
    )
