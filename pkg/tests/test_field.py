import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relit.field import (
    DecoderWeights,
    TriPlaneField,
    decode,
    decode_diffuse,
    decode_specular,
    default_fd_step,
    density,
    density_gradient_fd,
    normal_consistency_loss,
    sample_triplane,
)
from relit.scene_io import SyntheticSceneSpec, generate_synthetic_scene
from relit.validate import fd_errors, ramp_fixture, random_unit_vectors


def zero_decoders(c, n_w=2, hidden=(64, 32)):
    diffuse = DecoderWeights((np.zeros((c, hidden[0])), np.zeros((hidden[0], 7 + n_w))),
                             (np.zeros(hidden[0]), np.zeros(7 + n_w)))
    specular = DecoderWeights((np.zeros((c, hidden[1])), np.zeros((hidden[1], 1))),
                              (np.zeros(hidden[1]), np.zeros(1)))
    return diffuse, specular


def field_with_planes(planes, bounds=2.0, n_w=2):
    d, s = zero_decoders(planes.shape[-1], n_w)
    return TriPlaneField(planes=planes, diffuse=d, specular=s, bounds=bounds, n_features=n_w)


@pytest.fixture
def small_field(rng):
    # R=3 on a cube of side 2: texels sit at -1, 0, 1 along each axis
    return field_with_planes(rng.integers(-8, 8, size=(3, 3, 3, 2)).astype(np.float32))


def test_sample_at_grid_node(small_field):
    p = small_field.planes.astype(np.float64)
    got = sample_triplane(small_field, [0.0, 1.0, -1.0])  # indices x=1, y=2, z=0
    np.testing.assert_array_equal(got, p[0, 1, 2] + p[1, 2, 0] + p[2, 1, 0])


def test_sample_at_cell_midpoint(small_field):
    p = small_field.planes.astype(np.float64)
    quad = lambda g: 0.25 * (g[1, 1] + g[2, 1] + g[1, 2] + g[2, 2])  # noqa: E731
    expected = quad(p[0]) + quad(p[1]) + quad(p[2])
    np.testing.assert_allclose(sample_triplane(small_field, [0.5, 0.5, 0.5]), expected, atol=1e-12)


def test_sample_clamps_outside(small_field):
    np.testing.assert_array_equal(
        sample_triplane(small_field, [5.0, -7.0, 0.25]), sample_triplane(small_field, [1.0, -1.0, 0.25])
    )


def test_sample_batched_shape(small_field, rng):
    pts = rng.uniform(-1, 1, size=(4, 5, 3))
    assert sample_triplane(small_field, pts).shape == (4, 5, 2)


def test_sample_piecewise_linear_within_cell(random_scene, rng):
    # three collinear points inside one texel cell obey the midpoint identity
    h = random_scene.bounds / (random_scene.resolution - 1)
    base = -random_scene.bounds / 2 + h * np.array([3.2, 5.4, 7.1])
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = 0.25 * h
        a, m, b = (sample_triplane(random_scene, base + k * step) for k in (0, 1, 2))
        np.testing.assert_allclose(m, 0.5 * (a + b), atol=1e-12)


def test_sample_continuous(random_scene, rng):
    x = rng.uniform(-0.9, 0.9, size=(20, 3))
    for eps in (1e-3, 1e-6):
        assert np.max(np.abs(sample_triplane(random_scene, x + eps) - sample_triplane(random_scene, x))) < 100 * eps


def test_decode_zero_weights():
    d, s = zero_decoders(4)
    k_d, n, sigma, w = decode_diffuse(d, np.zeros(4))
    assert sigma == pytest.approx(math.log(2.0))
    assert sigma == pytest.approx(0.693147, abs=1e-6)
    np.testing.assert_array_equal(k_d, [0.5, 0.5, 0.5])
    assert decode_specular(s, np.zeros(4)) == 0.5


def test_decode_normal_normalised():
    d, _ = zero_decoders(4)
    b = np.zeros(9)
    b[3:6] = (0.0, 0.0, 10.0)
    d = DecoderWeights(d.weights, (d.biases[0], b))
    np.testing.assert_array_equal(decode_diffuse(d, np.zeros(4))[1], [0.0, 0.0, 1.0])


def test_decode_specular_saturates():
    _, s = zero_decoders(4)
    s = DecoderWeights(s.weights, (s.biases[0], np.array([-60.0])))
    assert decode_specular(s, np.zeros(4)) < 1e-20


def test_decode_shape_error():
    d, s = zero_decoders(4)
    with pytest.raises(ValueError):
        decode_diffuse(d, np.zeros(5))
    with pytest.raises(ValueError):
        decode_specular(s, np.zeros(3))


def test_decoder_dims_validated():
    with pytest.raises(ValueError):
        DecoderWeights((np.zeros((4, 8)), np.zeros((7, 1))), (np.zeros(8), np.zeros(1)))
    with pytest.raises(ValueError):
        DecoderWeights((np.zeros((4, 8)),), (np.zeros(7),))


def test_decode_deterministic(random_scene, rng):
    f = rng.normal(size=8)
    a = decode_diffuse(random_scene.diffuse, f)
    b = decode_diffuse(random_scene.diffuse, f)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert decode_specular(random_scene.specular, f) == decode_specular(random_scene.specular, f)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 3.0))
def test_decoded_ranges_fuzz(seed, scale):
    fld = generate_synthetic_scene(
        SyntheticSceneSpec(kind="random-weights", seed=seed, resolution=4, channels=6, n_features=3, scale=scale)
    )
    pts = np.random.default_rng(seed).uniform(-2, 2, size=(64, 3))
    s = decode(fld, pts)
    assert np.all(s.sigma >= 0)
    assert np.all((s.k_d >= 0) & (s.k_d <= 1))
    assert np.all((s.k_s >= 0) & (s.k_s <= 1))
    np.testing.assert_allclose(np.linalg.norm(s.n, axis=-1), 1.0, atol=1e-6)


def test_field_validation(rng):
    d, s = zero_decoders(2)
    with pytest.raises(ValueError):
        TriPlaneField(planes=np.zeros((3, 4, 5, 2)), diffuse=d, specular=s, bounds=1.0, n_features=2)
    with pytest.raises(ValueError):
        TriPlaneField(planes=np.zeros((3, 4, 4, 2)), diffuse=d, specular=s, bounds=0.0, n_features=2)
    with pytest.raises(ValueError):
        TriPlaneField(planes=np.zeros((3, 4, 4, 3)), diffuse=d, specular=s, bounds=1.0, n_features=2)
    fld = TriPlaneField(planes=np.zeros((3, 4, 4, 2)), diffuse=d, specular=s, bounds=1.0, n_features=2)
    with pytest.raises(ValueError):
        fld.planes[0, 0, 0, 0] = 1.0


def test_fd_gradient_constant_field():
    fld = field_with_planes(np.ones((3, 4, 4, 2), dtype=np.float32))
    np.testing.assert_array_equal(density_gradient_fd(fld, [[0.1, 0.2, 0.3]], 0.01), 0.0)


def test_fd_gradient_matches_softplus_derivative():
    # ramp field: sigma = softplus(slope * x + offset); derivative slope * logistic(slope * x + offset)
    spec, fld = ramp_fixture()
    x = np.array([[0.2, -0.3, 0.4]])
    z = spec.slope * 0.2 + spec.offset
    exact = spec.slope / (1 + math.exp(-z))
    g = density_gradient_fd(fld, x, 1e-3)[0]
    assert g[0] == pytest.approx(exact, abs=1e-6)
    assert g[1] == 0.0 and g[2] == 0.0


def test_fd_second_order():
    ratio = fd_errors(0.1) / fd_errors(0.05)
    assert 3.5 <= ratio <= 4.5


def test_fd_step_default_and_validation(random_scene):
    assert default_fd_step(random_scene) == random_scene.bounds / (4 * random_scene.resolution)
    with pytest.raises(ValueError):
        density_gradient_fd(random_scene, [[0, 0, 0]], 0.0)


def test_normal_loss_zero_on_consistent_field(rng):
    _, fld = ramp_fixture()
    assert normal_consistency_loss(fld, random_unit_vectors(rng, 50) * 0.8) == 0.0


def test_normal_loss_single_point(random_scene):
    x = np.array([[0.1, -0.2, 0.3]])
    g = density_gradient_fd(random_scene, x)
    target = -g / np.linalg.norm(g)
    n = decode(random_scene, x).n
    assert normal_consistency_loss(random_scene, x) == pytest.approx(float(np.abs(n - target).sum()))
    raw = float(np.abs(n - g).sum())
    assert normal_consistency_loss(random_scene, x, mode="raw") == pytest.approx(raw)


def test_normal_loss_permutation_invariant(random_scene, rng):
    pts = rng.uniform(-0.8, 0.8, size=(40, 3))
    a = normal_consistency_loss(random_scene, pts)
    b = normal_consistency_loss(random_scene, pts[rng.permutation(40)])
    assert a == pytest.approx(b, rel=1e-14)
    assert a > 0


def test_normal_loss_errors(random_scene):
    with pytest.raises(ValueError):
        normal_consistency_loss(random_scene, np.zeros((0, 3)))
    with pytest.raises(ValueError):
        normal_consistency_loss(random_scene, np.zeros((1, 3)), mode="bogus")


def test_density_shape(random_scene, rng):
    assert density(random_scene, rng.uniform(-1, 1, (6, 3))).shape == (6,)
