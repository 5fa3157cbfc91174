import math

import numpy as np
import pytest

import relit.render as render_mod
from relit.field import decode
from relit.render import (
    Camera,
    NumericError,
    Ray,
    RenderOptions,
    generate_rays,
    integrate_ray,
    orbit_camera,
    render_image,
)
from relit.scene_io import SyntheticSceneSpec, generate_synthetic_scene
from relit.sh import directional_light
from relit.validate import sphere_fixture

ENV = directional_light((0.3, 0.5, 1.0), ambient=0.2)


def identity_camera(width=5, height=4, focal=10.0):
    return Camera(rotation=np.eye(3), translation=np.zeros(3), fx=focal, fy=focal, cx=width / 2, cy=height / 2,
                  width=width, height=height, t_near=0.1, t_far=5.0)


def slab(density):
    return generate_synthetic_scene(
        SyntheticSceneSpec(kind="slab", resolution=17, channels=4, n_features=4, slab_start=-2.0, density=density)
    )


def test_rays_principal_point():
    cam = identity_camera(width=5, height=5)
    origins, dirs = generate_rays(cam)
    np.testing.assert_allclose(dirs[2, 2], [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_array_equal(origins, 0.0)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-15)


def test_rays_corner_symmetry():
    _, dirs = generate_rays(identity_camera(width=6, height=4))
    np.testing.assert_allclose(dirs[0, 0] * [-1, 1, 1], dirs[0, -1], atol=1e-15)
    np.testing.assert_allclose(dirs[0, 0] * [1, -1, 1], dirs[-1, 0], atol=1e-15)
    assert dirs[0, 0, 0] < 0 and dirs[0, 0, 1] < 0  # top-left looks left and up


def test_orbit_camera_looks_at_center():
    cam = orbit_camera(yaw=40, pitch=20, distance=3.0, width=9)
    np.testing.assert_allclose(np.linalg.norm(cam.translation), 3.0)
    np.testing.assert_allclose(cam.forward, -cam.translation / 3.0, atol=1e-12)
    _, dirs = generate_rays(cam)
    np.testing.assert_allclose(dirs[4, 4], cam.forward, atol=1e-12)


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(rotation=2 * np.eye(3), translation=np.zeros(3), fx=1, fy=1, cx=0, cy=0, width=2, height=2,
               t_near=0.1, t_far=1.0)
    with pytest.raises(ValueError):
        identity_camera().__class__(**{**identity_camera().__dict__, "t_near": 2.0, "t_far": 1.0})
    with pytest.raises(ValueError):
        RenderOptions(samples=0)


def test_empty_space_ray():
    fld = generate_synthetic_scene(SyntheticSceneSpec(kind="empty", resolution=8, channels=4, n_features=4))
    rgb, feats, depth, opacity = integrate_ray(fld, ENV, Ray((0, 0, -2), (0, 0, 1)), RenderOptions(samples=32),
                                               1.0, 3.0)
    np.testing.assert_array_equal(rgb, 0.0)
    np.testing.assert_array_equal(feats, 0.0)
    assert opacity == 0.0
    assert depth == 3.0


def test_unit_slab_opacity():
    fld = slab(1.0)
    ray = Ray((-0.6, 0.0, 0.0), (1.0, 0.0, 0.0))
    c0 = decode(fld, [[0.0, 0.0, 0.0]]).k_d[0]
    rgb, _, _, opacity = integrate_ray(fld, ENV, ray, RenderOptions(samples=32, albedo_mode=True), 0.1, 1.1)
    assert opacity == pytest.approx(0.632121, abs=1e-6)
    np.testing.assert_allclose(rgb, 0.632121 * c0, atol=1e-6)


def test_halving_density_lowers_opacity():
    ray = Ray((-0.6, 0.0, 0.0), (1.0, 0.0, 0.0))
    opt = RenderOptions(samples=32)
    full = integrate_ray(slab(1.0), ENV, ray, opt, 0.1, 1.1)[3]
    half = integrate_ray(slab(0.5), ENV, ray, opt, 0.1, 1.1)[3]
    assert half < full
    assert half == pytest.approx(1 - math.exp(-0.5), abs=1e-6)


def test_integrate_ray_rejects_bad_interval(random_scene):
    with pytest.raises(ValueError):
        integrate_ray(random_scene, ENV, Ray((0, 0, 2), (0, 0, -1)), RenderOptions(), 2.0, 1.0)


def test_empty_scene_image_is_black():
    fld = generate_synthetic_scene(SyntheticSceneSpec(kind="empty", resolution=8, channels=4, n_features=4))
    cam = orbit_camera(width=12)
    out = render_image(fld, ENV, cam, RenderOptions(samples=16))
    np.testing.assert_array_equal(out.color, 0.0)
    np.testing.assert_array_equal(out.opacity, 0.0)
    np.testing.assert_array_equal(out.depth, cam.t_far)


def test_env_scaling_scales_image(random_scene, rng):
    cam = orbit_camera(width=10, distance=2.5, t_near=1.0, t_far=4.0)
    opt = RenderOptions(samples=16, clamp=False)
    env = rng.normal(size=(9, 3))
    base = render_image(random_scene, env, cam, opt).color
    np.testing.assert_allclose(render_image(random_scene, 2.5 * env, cam, opt).color, 2.5 * base, atol=1e-12)


def test_sphere_depth_matches_ray_intersection():
    spec, fld, cam, opt = sphere_fixture(samples=64, width=33)
    out = render_image(fld, ENV, cam, opt)
    origins, dirs = generate_rays(cam)
    oc = origins - np.asarray(spec.center)
    b = np.sum(oc * dirs, axis=-1)
    miss2 = np.sum(oc * oc, axis=-1) - b * b
    core = miss2 < (0.8 * spec.radius) ** 2
    t_hit = -b - np.sqrt(np.maximum(spec.radius**2 - miss2, 0.0))
    tol = 2.0 * (cam.t_far - cam.t_near) / opt.samples
    assert core.sum() > 50
    assert np.max(np.abs(out.depth[core] - t_hit[core])) <= tol
    assert np.all(out.opacity[core] > 0.99)
    corners = out.opacity[[0, 0, -1, -1], [0, -1, 0, -1]]
    assert np.all(corners < 1e-3)


def test_opacity_bounded(random_scene):
    out = render_image(random_scene, ENV, orbit_camera(width=16, distance=2.5, t_near=1.0, t_far=4.0),
                       RenderOptions(samples=24))
    assert np.all((out.opacity >= 0) & (out.opacity <= 1))
    assert np.all(out.color >= 0)


def test_albedo_mode_ignores_lighting(random_scene, rng):
    cam = orbit_camera(width=10, distance=2.5, t_near=1.0, t_far=4.0)
    opt = RenderOptions(samples=16, albedo_mode=True)
    a = render_image(random_scene, rng.normal(size=(9, 3)), cam, opt).color
    b = render_image(random_scene, rng.normal(size=(9, 3)), cam, opt).color
    assert a.tobytes() == b.tobytes()


def test_zero_specular_scale_is_diffuse_only(random_scene):
    cam = orbit_camera(width=10, distance=2.5, t_near=1.0, t_far=4.0)
    a = render_image(random_scene, ENV, cam, RenderOptions(samples=16, specular_scale=0.0)).color
    b = render_image(random_scene, ENV, cam, RenderOptions(samples=16, include_specular=False)).color
    assert a.tobytes() == b.tobytes()


def test_stratified_seed_determinism(random_scene):
    cam = orbit_camera(width=10, distance=2.5, t_near=1.0, t_far=4.0)
    a = render_image(random_scene, ENV, cam, RenderOptions(samples=16, seed=7)).color
    b = render_image(random_scene, ENV, cam, RenderOptions(samples=16, seed=7)).color
    c = render_image(random_scene, ENV, cam, RenderOptions(samples=16, seed=8)).color
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_worker_count_invariance(random_scene):
    cam = orbit_camera(width=40, distance=2.5, t_near=1.0, t_far=4.0)  # 1600 rays: two chunks
    opt = RenderOptions(samples=16, seed=3)
    one = render_image(random_scene, ENV, cam, opt, workers=1)
    many = render_image(random_scene, ENV, cam, opt, workers=8)
    for key in ("color", "features", "depth", "opacity"):
        assert getattr(one, key).tobytes() == getattr(many, key).tobytes()


def test_numeric_error_reports_pixel(random_scene, monkeypatch):
    real = render_mod.render_rays

    def poisoned(*args, **kwargs):
        color, feats, depth, opacity = real(*args, **kwargs)
        color = color.copy()
        color[5, 1] = np.nan
        return color, feats, depth, opacity

    monkeypatch.setattr(render_mod, "render_rays", poisoned)
    with pytest.raises(NumericError, match=r"row 0, col 5"):
        render_image(random_scene, ENV, orbit_camera(width=8), RenderOptions(samples=4))
