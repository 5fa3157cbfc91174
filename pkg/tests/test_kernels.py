import os
import subprocess
import sys

import numpy as np
import pytest

from relit import _accel
from relit.kernels import composite, numba_supported, render_rays
from relit.render import RenderOptions, generate_rays, orbit_camera, render_image
from relit.sh import directional_light

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
ENV = directional_light((0.2, 0.7, 0.6), ambient=0.3)


def test_composite_single_opaque_sample():
    sigma = np.array([[0.0, 1e9, 0.0]])
    t = np.array([[1.0, 2.0, 3.0]])
    (c,), depth, opacity = composite(sigma, [np.arange(9.0).reshape(1, 3, 3)], t, 0.5)
    np.testing.assert_allclose(c, [[3.0, 4.0, 5.0]])
    assert depth[0] == pytest.approx(2.0)
    assert opacity[0] == pytest.approx(1.0)


@needs_numba
@pytest.mark.parametrize("kw", [{}, {"albedo_mode": True}, {"clamp": False}, {"specular_scale": 3.0},
                                {"include_specular": False}])
def test_backends_agree(random_scene, kw):
    assert numba_supported(random_scene)
    cam = orbit_camera(width=9, distance=2.5, t_near=1.0, t_far=4.0)
    origins, dirs = generate_rays(cam)
    args = (random_scene, ENV, origins.reshape(-1, 3), dirs.reshape(-1, 3), 1.0, 4.0, 16)
    jitter = np.random.default_rng(0).random((81, 16))
    a = render_rays(*args, jitter, backend="numpy", **kw)
    b = render_rays(*args, jitter, backend="numba", **kw)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, atol=1e-9, rtol=0)


@needs_numba
def test_backends_agree_on_sphere(sphere_scene):
    _, fld = sphere_scene
    cam = orbit_camera(width=12, distance=2.5, t_near=1.5, t_far=3.5)
    a = render_image(fld, ENV, cam, RenderOptions(samples=32, backend="numpy"))
    b = render_image(fld, ENV, cam, RenderOptions(samples=32, backend="numba"))
    for key in ("color", "features", "depth", "opacity"):
        np.testing.assert_allclose(getattr(a, key), getattr(b, key), atol=1e-9, rtol=0)


def test_env_flag_disables_numba():
    code = "from relit import _accel, kernels; print(_accel.USE_NUMBA)"
    env = {**os.environ, "RELIT_NUMBA": "0"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
