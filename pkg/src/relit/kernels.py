"""Hot loops of the renderer: sample, decode, shade and composite ray batches.

Two interchangeable implementations of :func:`render_rays`:

* ``render_rays_numpy`` vectorises over every sample of a ray batch;
* ``render_rays_numba`` walks rays and samples in compiled scalar loops.

Both compute the same quantities in float64 and agree to ~1e-10; they are not
bit-identical to each other. Each is bit-reproducible on its own for a given
ray batch. The numba kernel handles the default one-hidden-layer decoders;
deeper decoders always take the numpy path.
"""

from __future__ import annotations

import math

import numpy as np

from relit import _accel
from relit._accel import njit
from relit.field import NORMAL_EPS, PLANE_AXES, TriPlaneField, decode_diffuse, decode_specular, sample_triplane
from relit.sh import _basis

__all__ = ["render_rays", "render_rays_numpy", "render_rays_numba", "numba_supported", "composite"]


def composite(sigma, colors, t, delta):
    """Emission-absorption compositing along the last sample axis.

    ``sigma`` and ``t`` are ``(M, N)``; ``colors`` is a list of ``(M, N, K)``
    arrays. Returns ``(composited colors, depth, opacity)`` where depth is the
    opacity-normalised expected termination (``t_far`` stand-in handled by
    the caller).
    """
    alpha = 1.0 - np.exp(-sigma * delta)
    trans = np.cumprod(1.0 - alpha, axis=-1)
    trans = np.concatenate([np.ones_like(trans[:, :1]), trans[:, :-1]], axis=-1)
    weights = trans * alpha
    out = [np.einsum("mn,mnk->mk", weights, c) for c in colors]
    opacity = weights.sum(axis=-1)
    depth = (weights * t).sum(axis=-1)
    return out, depth, opacity


def _finish_depth(depth, opacity, t_far):
    has = opacity > 1e-6
    safe = np.where(has, opacity, 1.0)
    return np.where(has, depth / safe, t_far)


def render_rays_numpy(
    field: TriPlaneField,
    sh: np.ndarray,
    origins: np.ndarray,
    dirs: np.ndarray,
    t_near: float,
    t_far: float,
    n_samples: int,
    jitter: np.ndarray | None,
    albedo_mode: bool,
    specular_scale: float,
    clamp: bool,
    include_specular: bool,
    want_features: bool,
):
    m = len(origins)
    delta = (t_far - t_near) / n_samples
    offs = 0.5 if jitter is None else jitter
    t = t_near + (np.arange(n_samples)[None, :] + offs) * delta
    t = np.broadcast_to(t, (m, n_samples))
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    f = sample_triplane(field, pts.reshape(-1, 3))
    k_d, n, sigma, w = decode_diffuse(field.diffuse, f)
    if albedo_mode:
        c = k_d
    else:
        c = k_d * (_basis(n) @ sh)
        if clamp:
            c = np.maximum(c, 0.0)
        if include_specular:
            k_s = decode_specular(field.specular, f) * specular_scale
            d = np.repeat(dirs, n_samples, axis=0)
            omega_r = d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n
            cs = k_s[:, None] * (_basis(omega_r) @ sh)
            if clamp:
                cs = np.maximum(cs, 0.0)
            c = c + cs
    colors = [c.reshape(m, n_samples, 3)]
    if want_features:
        colors.append(w.reshape(m, n_samples, -1))
    out, depth, opacity = composite(sigma.reshape(m, n_samples), colors, t, delta)
    feats = out[1] if want_features else np.zeros((m, field.n_features))
    return out[0], feats, _finish_depth(depth, opacity, t_far), opacity


# --- numba path -----------------------------------------------------------

_C0 = math.sqrt(1.0 / (4.0 * math.pi))
_C1 = math.sqrt(3.0 / (4.0 * math.pi))
_C2 = math.sqrt(15.0 / (4.0 * math.pi))
_C20 = math.sqrt(5.0 / (16.0 * math.pi))
_C22 = math.sqrt(15.0 / (16.0 * math.pi))


@njit(cache=True, nogil=True)
def _softplus_s(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit(cache=True, nogil=True)
def _logistic_s(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _irradiance_s(sh, x, y, z, out):
    b0 = _C0
    b1 = _C1 * y
    b2 = _C1 * z
    b3 = _C1 * x
    b4 = _C2 * x * y
    b5 = _C2 * y * z
    b6 = _C20 * (3.0 * z * z - 1.0)
    b7 = _C2 * x * z
    b8 = _C22 * (x * x - y * y)
    for ch in range(3):
        out[ch] = (
            b0 * sh[0, ch] + b1 * sh[1, ch] + b2 * sh[2, ch] + b3 * sh[3, ch] + b4 * sh[4, ch]
            + b5 * sh[5, ch] + b6 * sh[6, ch] + b7 * sh[7, ch] + b8 * sh[8, ch]
        )


@njit(cache=True, nogil=True)
def _sample_s(planes, bounds, px, py, pz, f):
    res = planes.shape[1]
    nc = planes.shape[3]
    for ch in range(nc):
        f[ch] = 0.0
    for p in range(3):
        if p == 0:
            ca, cb = px, py
        elif p == 1:
            ca, cb = py, pz
        else:
            ca, cb = px, pz
        ua = min(max((ca / bounds + 0.5) * (res - 1), 0.0), res - 1.0)
        ub = min(max((cb / bounds + 0.5) * (res - 1), 0.0), res - 1.0)
        ia = min(int(math.floor(ua)), res - 2)
        ib = min(int(math.floor(ub)), res - 2)
        fa = ua - ia
        fb = ub - ib
        for ch in range(nc):
            v00 = planes[p, ia, ib, ch]
            v10 = planes[p, ia + 1, ib, ch]
            v01 = planes[p, ia, ib + 1, ch]
            v11 = planes[p, ia + 1, ib + 1, ch]
            lo = v00 + fa * (v10 - v00)
            hi = v01 + fa * (v11 - v01)
            f[ch] += lo + fb * (hi - lo)


@njit(cache=True, nogil=True)
def _mlp_s(f, w1, b1, w2, b2, n_out, hidden, out):
    nh = w1.shape[1]
    nc = w1.shape[0]
    for j in range(nh):
        acc = 0.0
        for i in range(nc):
            acc += f[i] * w1[i, j]
        hidden[j] = _softplus_s(acc + b1[j])
    for k in range(n_out):
        acc = 0.0
        for j in range(nh):
            acc += hidden[j] * w2[j, k]
        out[k] = acc + b2[k]


@njit(cache=True, nogil=True)
def _render_rays_kernel(
    planes, bounds, dw1, db1, dw2, db2, sw1, sb1, sw2, sb2, sh,
    origins, dirs, t_near, t_far, n_samples, jitter, use_jitter,
    albedo_mode, specular_scale, clamp, include_specular, want_features,
    color, feats, depth, opacity,
):
    m = origins.shape[0]
    nc = planes.shape[3]
    n_w = feats.shape[1]
    n_out = 7 + n_w if want_features else 7
    delta = (t_far - t_near) / n_samples
    f = np.empty(nc)
    hid_d = np.empty(dw1.shape[1])
    hid_s = np.empty(sw1.shape[1])
    raw = np.empty(dw2.shape[1])
    raw_s = np.empty(1)
    irr = np.empty(3)
    c = np.empty(3)
    for r in range(m):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        trans = 1.0
        acc_c0 = 0.0
        acc_c1 = 0.0
        acc_c2 = 0.0
        acc_t = 0.0
        acc_a = 0.0
        for k in range(n_w):
            feats[r, k] = 0.0
        for s in range(n_samples):
            off = jitter[r, s] if use_jitter else 0.5
            t = t_near + (s + off) * delta
            _sample_s(planes, bounds, ox + t * dx, oy + t * dy, oz + t * dz, f)
            _mlp_s(f, dw1, db1, dw2, db2, n_out, hid_d, raw)
            sigma = _softplus_s(raw[6])
            kd0 = _logistic_s(raw[0])
            kd1 = _logistic_s(raw[1])
            kd2 = _logistic_s(raw[2])
            if albedo_mode:
                c[0] = kd0
                c[1] = kd1
                c[2] = kd2
            else:
                nx, ny, nz = raw[3], raw[4], raw[5]
                nn = max(math.sqrt(nx * nx + ny * ny + nz * nz), NORMAL_EPS)
                nx /= nn
                ny /= nn
                nz /= nn
                _irradiance_s(sh, nx, ny, nz, irr)
                c[0] = kd0 * irr[0]
                c[1] = kd1 * irr[1]
                c[2] = kd2 * irr[2]
                if clamp:
                    for ch in range(3):
                        c[ch] = max(c[ch], 0.0)
                if include_specular:
                    _mlp_s(f, sw1, sb1, sw2, sb2, 1, hid_s, raw_s)
                    ks = _logistic_s(raw_s[0]) * specular_scale
                    dn = dx * nx + dy * ny + dz * nz
                    _irradiance_s(sh, dx - 2.0 * dn * nx, dy - 2.0 * dn * ny, dz - 2.0 * dn * nz, irr)
                    for ch in range(3):
                        cs = ks * irr[ch]
                        if clamp:
                            cs = max(cs, 0.0)
                        c[ch] = c[ch] + cs
            alpha = 1.0 - math.exp(-sigma * delta)
            wgt = trans * alpha
            acc_c0 += wgt * c[0]
            acc_c1 += wgt * c[1]
            acc_c2 += wgt * c[2]
            acc_t += wgt * t
            acc_a += wgt
            if want_features:
                for k in range(n_w):
                    feats[r, k] += wgt * raw[7 + k]
            trans *= 1.0 - alpha
        color[r, 0] = acc_c0
        color[r, 1] = acc_c1
        color[r, 2] = acc_c2
        opacity[r] = acc_a
        depth[r] = acc_t / acc_a if acc_a > 1e-6 else t_far


def numba_supported(field: TriPlaneField) -> bool:
    return _accel.HAVE_NUMBA and len(field.diffuse.weights) == 2 and len(field.specular.weights) == 2


def render_rays_numba(
    field, sh, origins, dirs, t_near, t_far, n_samples, jitter,
    albedo_mode, specular_scale, clamp, include_specular, want_features,
):
    if not numba_supported(field):
        raise ValueError("numba kernel needs numba and one-hidden-layer decoders")
    m = len(origins)
    color = np.empty((m, 3))
    feats = np.zeros((m, field.n_features))
    depth = np.empty(m)
    opacity = np.empty(m)
    dw = [np.ascontiguousarray(a, dtype=np.float64) for a in field.diffuse.weights + field.diffuse.biases]
    sw = [np.ascontiguousarray(a, dtype=np.float64) for a in field.specular.weights + field.specular.biases]
    use_jitter = jitter is not None
    jit_arr = np.ascontiguousarray(jitter, dtype=np.float64) if use_jitter else np.zeros((1, 1))
    _render_rays_kernel(
        field._planes64, float(field.bounds), dw[0], dw[2], dw[1], dw[3], sw[0], sw[2], sw[1], sw[3],
        np.ascontiguousarray(sh, dtype=np.float64),
        np.ascontiguousarray(origins, dtype=np.float64), np.ascontiguousarray(dirs, dtype=np.float64),
        float(t_near), float(t_far), int(n_samples), jit_arr, use_jitter,
        bool(albedo_mode), float(specular_scale), bool(clamp), bool(include_specular), bool(want_features),
        color, feats, depth, opacity,
    )
    return color, feats, depth, opacity


def render_rays(field, sh, origins, dirs, t_near, t_far, n_samples, jitter=None,
                albedo_mode=False, specular_scale=1.0, clamp=True, include_specular=True,
                want_features=True, backend: str | None = None):
    """Render a batch of rays; returns ``(color, features, depth, opacity)``.

    ``backend`` is ``"numba"``, ``"numpy"`` or ``None`` (follow ``RELIT_NUMBA``
    and fall back to numpy where the numba kernel does not apply).
    """
    if backend is None:
        backend = "numba" if _accel.USE_NUMBA and numba_supported(field) else "numpy"
    fn = {"numba": render_rays_numba, "numpy": render_rays_numpy}[backend]
    return fn(field, sh, origins, dirs, t_near, t_far, n_samples, jitter,
              albedo_mode, specular_scale, clamp, include_specular, want_features)
