"""Scene and lighting files, plus deterministic synthetic scenes.

Scene file (all little-endian)::

    offset  type      field
    0       4s        magic b"FLIT"
    4       u32       format version (1)
    8       u32       plane resolution R
    12      u32       channels C
    16      u32       feature channels n_w
    20      f32       bounds (cube side)
    24      u32       diffuse layer count
    28      u32       specular layer count
    32      u32 x 2   (in, out) per layer, diffuse layers then specular
    ...     f32       planes, 3 x R x R x C row-major (XY, YZ, XZ)
    ...     f32       per layer: weights (in x out) then biases (out),
                      diffuse decoder first

Lighting file: JSON ``{"sh": [[r, g, b], ... 9 entries]}``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from relit.field import (
    DEFAULT_FEATURES,
    DIFFUSE_HIDDEN,
    SPECULAR_HIDDEN,
    DecoderWeights,
    TriPlaneField,
)
from relit.sh import as_sh

__all__ = [
    "SCENE_MAGIC",
    "SCENE_VERSION",
    "SceneFormatError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedSceneError",
    "SizeMismatchError",
    "LightingFormatError",
    "save_scene",
    "load_scene",
    "scene_to_bytes",
    "scene_from_bytes",
    "save_lighting",
    "load_lighting",
    "counter_uniform",
    "SyntheticSceneSpec",
    "SCENE_KINDS",
    "generate_synthetic_scene",
]

SCENE_MAGIC = b"FLIT"
SCENE_VERSION = 1
_HEADER = struct.Struct("<4sIIIIfII")


class SceneFormatError(ValueError):
    pass


class BadMagicError(SceneFormatError):
    pass


class UnsupportedVersionError(SceneFormatError):
    pass


class TruncatedSceneError(SceneFormatError):
    def __init__(self, what: str, missing: int):
        super().__init__(f"file truncated in {what}: {missing} bytes missing")
        self.missing = missing


class SizeMismatchError(SceneFormatError):
    pass


class LightingFormatError(ValueError):
    pass


def scene_to_bytes(field: TriPlaneField) -> bytes:
    layers = list(zip(field.diffuse.weights, field.diffuse.biases)) + list(
        zip(field.specular.weights, field.specular.biases)
    )
    parts = [
        _HEADER.pack(
            SCENE_MAGIC,
            SCENE_VERSION,
            field.resolution,
            field.channels,
            field.n_features,
            field.bounds,
            len(field.diffuse.weights),
            len(field.specular.weights),
        )
    ]
    parts += [struct.pack("<II", *w.shape) for w, _ in layers]
    parts.append(np.ascontiguousarray(field.planes, dtype="<f4").tobytes())
    for w, b in layers:
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def save_scene(field: TriPlaneField, path) -> None:
    Path(path).write_bytes(scene_to_bytes(field))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        have = len(self.data) - self.pos
        if have < n:
            raise TruncatedSceneError(what, n - have)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def floats(self, shape, what: str) -> np.ndarray:
        count = int(np.prod(shape))
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)


def scene_from_bytes(data: bytes) -> TriPlaneField:
    r = _Reader(data)
    if len(data) >= 4 and data[:4] != SCENE_MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {SCENE_MAGIC!r}")
    magic, version, res, chans, n_w, bounds, n_dl, n_sl = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if version != SCENE_VERSION:
        raise UnsupportedVersionError(f"format version {version} not supported (expected {SCENE_VERSION})")
    if res < 2 or chans < 1 or n_dl < 1 or n_sl < 1 or not (math.isfinite(bounds) and bounds > 0):
        raise SizeMismatchError("header values out of range")
    if n_dl > 64 or n_sl > 64:
        raise SizeMismatchError("implausible decoder layer count")
    dims = [struct.unpack("<II", r.take(8, "layer table")) for _ in range(n_dl + n_sl)]
    _check_chain(dims[:n_dl], chans, 7 + n_w, "diffuse")
    _check_chain(dims[n_dl:], chans, 1, "specular")
    expected = r.pos + 4 * (3 * res * res * chans + sum(i * o + o for i, o in dims))
    if len(data) > expected:
        raise SizeMismatchError(f"{len(data) - expected} unexpected trailing bytes")
    planes = r.floats((3, res, res, chans), "planes")
    layers = [(r.floats((i, o), "decoder weights"), r.floats((o,), "decoder biases")) for i, o in dims]
    try:
        return TriPlaneField(
            planes=planes,
            diffuse=DecoderWeights(tuple(w for w, _ in layers[:n_dl]), tuple(b for _, b in layers[:n_dl])),
            specular=DecoderWeights(tuple(w for w, _ in layers[n_dl:]), tuple(b for _, b in layers[n_dl:])),
            bounds=bounds,
            n_features=n_w,
        )
    except ValueError as exc:
        raise SceneFormatError(str(exc)) from exc


def _check_chain(dims, n_in, n_out, name):
    prev = n_in
    for i, o in dims:
        if i != prev or o < 1:
            raise SizeMismatchError(f"{name} decoder layer sizes do not chain: {dims}")
        prev = o
    if prev != n_out:
        raise SizeMismatchError(f"{name} decoder outputs {prev} values, header implies {n_out}")


def load_scene(path) -> TriPlaneField:
    return scene_from_bytes(Path(path).read_bytes())


def save_lighting(sh, path) -> None:
    coeffs = as_sh(sh)
    Path(path).write_text(json.dumps({"sh": coeffs.tolist()}) + "\n")


def load_lighting(path) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LightingFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "sh" not in doc:
        raise LightingFormatError(f'{path}: expected an object with key "sh"')
    entries = doc["sh"]
    if not isinstance(entries, list) or len(entries) != 9:
        count = len(entries) if isinstance(entries, list) else "non-list"
        raise LightingFormatError(f"{path}: expected 9 SH entries, got {count}")
    out = np.empty((9, 3))
    for k, rgb in enumerate(entries):
        if not isinstance(rgb, list) or len(rgb) != 3:
            raise LightingFormatError(f"{path}: entry {k} is not an [r, g, b] triple")
        for ch, v in enumerate(rgb):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise LightingFormatError(f"{path}: entry {k} has non-numeric value {v!r}")
            out[k, ch] = v
    return out


# --- synthetic scenes -----------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def counter_uniform(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform ``[0, 1)`` doubles from a SplitMix64 counter stream.

    Value ``i`` is ``mix(seed + (start + i + 1) * 0x9E3779B97F4A7C15) >> 11``
    scaled by ``2**-53``, with the standard SplitMix64 finaliser
    (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).
    Portable: any language with wrapping u64 arithmetic reproduces it.
    """
    with np.errstate(over="ignore"):
        i = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(seed % (1 << 64)) + i * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


SCENE_KINDS = ("random-weights", "analytic-sphere", "empty", "ramp", "slab")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Parameters of a generated scene.

    Kinds:

    ``random-weights``
        planes and all decoder parameters uniform in ``[-scale, scale]``.
    ``analytic-sphere``
        solid sphere of ``radius`` at ``center``: density rises steeply
        inside the shell, normals are the outward radial direction,
        reflectances are constant.
    ``empty``
        zero density everywhere.
    ``ramp``
        density ``softplus(slope * x + offset)`` varying along x only, normals
        fixed to +x.
    ``slab``
        constant density ``density`` for ``x > slab_start``, zero before it,
        with a transition narrower than ``1e-5``.
    """

    kind: str = "random-weights"
    seed: int = 0
    resolution: int = 32
    channels: int = 16
    n_features: int = DEFAULT_FEATURES
    bounds: float = 2.0
    scale: float = 0.1
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.5
    albedo: tuple[float, float, float] = (0.8, 0.6, 0.5)
    specular: float = 0.3
    sharpness: float = 200.0
    density_scale: float = 50.0
    density_offset: float = 12.0
    slope: float = -2.0
    offset: float = 0.5
    density: float = 1.0
    slab_start: float = 0.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; choose from {SCENE_KINDS}")
        if self.resolution < 2 or self.channels < 1 or self.n_features < 0 or not self.bounds > 0:
            raise ValueError("invalid scene dimensions")
        if self.kind == "analytic-sphere":
            if self.channels < 4 or self.n_features < 0:
                raise ValueError("analytic-sphere needs at least 4 channels")
            if not self.radius > 0:
                raise ValueError("sphere radius must be positive")
            half = self.bounds / 2
            if any(abs(c) + self.radius > half for c in self.center):
                raise ValueError("sphere must lie inside the scene bounds")
        if not 0.0 < self.specular < 1.0 or not all(0.0 < a < 1.0 for a in self.albedo):
            raise ValueError("albedo and specular must lie strictly inside (0, 1)")
        if self.kind == "slab" and not self.density > 0:
            raise ValueError("slab density must be positive")


def _logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def _inv_softplus(y: float) -> float:
    return y + math.log(-math.expm1(-y))


def _texel_coords(spec: SyntheticSceneSpec) -> np.ndarray:
    res = spec.resolution
    return (np.arange(res) - (res - 1) / 2.0) * (spec.bounds / (res - 1))


def _blank(spec, n_hidden_d=DIFFUSE_HIDDEN, n_hidden_s=SPECULAR_HIDDEN):
    c, n_out = spec.channels, 7 + spec.n_features
    planes = np.zeros((3, spec.resolution, spec.resolution, c))
    dw = [np.zeros((c, n_hidden_d)), np.zeros((n_hidden_d, n_out))]
    db = [np.zeros(n_hidden_d), np.zeros(n_out)]
    sw = [np.zeros((c, n_hidden_s)), np.zeros((n_hidden_s, 1))]
    sb = [np.zeros(n_hidden_s), np.array([_logit(spec.specular)])]
    db[1][0:3] = _logit(spec.albedo)
    return planes, dw, db, sw, sb


def _assemble(spec, planes, dw, db, sw, sb) -> TriPlaneField:
    return TriPlaneField(
        planes=planes,
        diffuse=DecoderWeights(tuple(dw), tuple(db)),
        specular=DecoderWeights(tuple(sw), tuple(sb)),
        bounds=spec.bounds,
        n_features=spec.n_features,
    )


def _random_scene(spec):
    planes, dw, db, sw, sb = _blank(spec)
    arrays = [planes, dw[0], db[0], dw[1], db[1], sw[0], sb[0], sw[1], sb[1]]
    total = sum(a.size for a in arrays)
    u = counter_uniform(spec.seed, 0, total) * 2.0 - 1.0
    pos = 0
    for a in arrays:
        a[...] = (spec.scale * u[pos:pos + a.size]).reshape(a.shape)
        pos += a.size
    return _assemble(spec, planes, dw, db, sw, sb)


def _sphere_scene(spec):
    planes, dw, db, sw, sb = _blank(spec)
    xs = _texel_coords(spec)
    cx, cy, cz = spec.center
    # XY carries x terms, YZ carries y terms, XZ carries z terms.
    planes[0, :, :, 0] = ((xs - cx) ** 2)[:, None]
    planes[0, :, :, 1] = (xs - cx)[:, None]
    planes[1, :, :, 0] = ((xs - cy) ** 2)[:, None]
    planes[1, :, :, 2] = (xs - cy)[:, None]
    planes[2, :, :, 0] = ((xs - cz) ** 2)[None, :]
    planes[2, :, :, 3] = (xs - cz)[None, :]
    k = spec.sharpness
    dw[0][0, 0] = -k
    db[0][0] = k * spec.radius**2
    # softplus(v) - softplus(-v) == v: passes the radial offsets through.
    for axis in range(3):
        dw[0][1 + axis, 1 + 2 * axis] = 1.0
        dw[0][1 + axis, 2 + 2 * axis] = -1.0
        dw[1][1 + 2 * axis, 3 + axis] = 1.0
        dw[1][2 + 2 * axis, 3 + axis] = -1.0
        if axis < spec.n_features:
            dw[1][1 + 2 * axis, 7 + axis] = 1.0
            dw[1][2 + 2 * axis, 7 + axis] = -1.0
    dw[1][0, 6] = spec.density_scale
    db[1][6] = -spec.density_offset
    return _assemble(spec, planes, dw, db, sw, sb)


def _empty_scene(spec):
    planes, dw, db, sw, sb = _blank(spec)
    db[1][6] = -1000.0  # softplus underflows to exactly 0
    db[1][3:6] = (0.0, 0.0, 1.0)
    return _assemble(spec, planes, dw, db, sw, sb)


def _ramp_scene(spec):
    planes, dw, db, sw, sb = _blank(spec)
    planes[0, :, :, 0] = _texel_coords(spec)[:, None]
    dw[0][0, 0] = 1.0
    dw[0][0, 1] = -1.0
    dw[1][0, 6] = spec.slope
    dw[1][1, 6] = -spec.slope
    db[1][6] = spec.offset
    db[1][3:6] = (1.0, 0.0, 0.0)
    return _assemble(spec, planes, dw, db, sw, sb)


_SLAB_GAIN = 1e7
_SLAB_FLOOR = 40.0


def _slab_scene(spec):
    planes, dw, db, sw, sb = _blank(spec)
    planes[0, :, :, 0] = (_texel_coords(spec) - spec.slab_start)[:, None]
    # softplus(a) - softplus(a - M) is a smoothed step of height M in a.
    dw[0][0, 0] = _SLAB_GAIN
    dw[0][0, 1] = _SLAB_GAIN
    db[0][1] = -(_SLAB_FLOOR + _inv_softplus(spec.density))
    dw[1][0, 6] = 1.0
    dw[1][1, 6] = -1.0
    db[1][6] = -_SLAB_FLOOR
    db[1][3:6] = (-1.0, 0.0, 0.0)
    return _assemble(spec, planes, dw, db, sw, sb)


def generate_synthetic_scene(spec: SyntheticSceneSpec) -> TriPlaneField:
    """Build a scene as a pure function of ``spec``."""
    build = {
        "random-weights": _random_scene,
        "analytic-sphere": _sphere_scene,
        "empty": _empty_scene,
        "ramp": _ramp_scene,
        "slab": _slab_scene,
    }[spec.kind]
    return build(spec)
