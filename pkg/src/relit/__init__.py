"""Relightable tri-plane volume rendering with SH irradiance shading."""

from relit._accel import USE_NUMBA
from relit.field import DecoderWeights, TriPlaneField
from relit.render import Camera, RenderOptions, RenderOutput, orbit_camera, render_image
from relit.scene_io import SyntheticSceneSpec, generate_synthetic_scene, load_lighting, load_scene
from relit.shade import Material, shade

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA",
    "Camera",
    "DecoderWeights",
    "Material",
    "RenderOptions",
    "RenderOutput",
    "SyntheticSceneSpec",
    "TriPlaneField",
    "generate_synthetic_scene",
    "load_lighting",
    "load_scene",
    "orbit_camera",
    "render_image",
    "shade",
]
