"""``relit`` command line.

Exit codes: 0 success, 1 validation or numeric failure, 2 usage error,
3 I/O or parse error. Option precedence: flags > ``--config`` JSON > defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from relit import imageio
from relit.render import Camera, NumericError, RenderOptions, orbit_camera, render_image
from relit.scene_io import (
    SCENE_KINDS,
    LightingFormatError,
    SceneFormatError,
    SyntheticSceneSpec,
    generate_synthetic_scene,
    load_lighting,
    load_scene,
    save_lighting,
    save_scene,
)
from relit.sh import directional_light, render_light_sphere

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "size": "64x64",
    "samples": 64,
    "seed": None,
    "albedo": False,
    "specular_scale": 1.0,
    "no_clamp": False,
    "yaw": 0.0,
    "pitch": 0.0,
    "distance": 2.7,
    "fov": 30.0,
    "near": None,
    "far": None,
    "workers": 1,
    "camera_file": None,
    "depth_out": None,
    "features_out": None,
    "albedo_out": None,
    "probe_out": None,
    "inset": 0.0,
    "scales": "0,1,4",
    "yaw_range": "-30,30",
    "grid": "4x3",
    "normalize": False,
    "quad_samples": 1_000_000,
    "tol": [],
    "only": [],
    "report": None,
    "kind": "random-weights",
    "resolution": 32,
    "channels": 16,
    "features": 32,
    "direction": "0,0,1",
    "color": "1,1,1",
    "ambient": 0.0,
}


class UsageError(Exception):
    pass


def _parse_size(text: str) -> tuple[int, int]:
    parts = str(text).lower().split("x")
    try:
        if len(parts) == 1:
            w = h = int(parts[0])
        elif len(parts) == 2:
            w, h = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise UsageError(f"bad size {text!r}; expected WxH") from None
    if w < 1 or h < 1:
        raise UsageError("size must be at least 1x1")
    return w, h


def _floats(text: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"expected {count} comma-separated numbers, got {text!r}")
    return vals


def _camera(cfg, yaw=None) -> Camera:
    w, h = _parse_size(cfg["size"])
    if cfg["camera_file"]:
        doc = json.loads(Path(cfg["camera_file"]).read_text())
        doc.setdefault("width", w)
        doc.setdefault("height", h)
        try:
            return Camera(**doc)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid camera file: {exc}") from None
    return orbit_camera(
        yaw=cfg["yaw"] if yaw is None else yaw,
        pitch=cfg["pitch"],
        distance=cfg["distance"],
        fov=cfg["fov"],
        width=w,
        height=h,
        t_near=cfg["near"],
        t_far=cfg["far"],
    )


def _options(cfg, **overrides) -> RenderOptions:
    kw = dict(
        samples=int(cfg["samples"]),
        seed=None if cfg["seed"] is None else int(cfg["seed"]),
        albedo_mode=bool(cfg["albedo"]),
        specular_scale=float(cfg["specular_scale"]),
        clamp=not cfg["no_clamp"],
        features=bool(cfg.get("features_out")),
    )
    kw.update(overrides)
    try:
        return RenderOptions(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require(cfg, *keys):
    for k in keys:
        if not cfg.get(k):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _paste_probe(img: np.ndarray, sh, fraction: float) -> np.ndarray:
    """Normalised light probe square (black outside the disk) in the bottom-right corner."""
    if fraction <= 0:
        return img
    h, w = img.shape[:2]
    size = max(1, min(h, w, int(round(fraction * min(h, w)))))
    out = img.copy()
    out[h - size:, w - size:] = render_light_sphere(sh, size, normalize=True)
    return out


def _render(cfg, scene, sh, yaw=None, **opt):
    return render_image(scene, sh, _camera(cfg, yaw), _options(cfg, **opt), workers=int(cfg["workers"]))


def cmd_render(cfg) -> int:
    _require(cfg, "scene", "light", "out")
    scene, sh = load_scene(cfg["scene"]), load_lighting(cfg["light"])
    out = _render(cfg, scene, sh)
    imageio.write_image(cfg["out"], _paste_probe(out.color, sh, float(cfg["inset"])))
    if cfg["depth_out"]:
        imageio.write_float(cfg["depth_out"], out.depth)
    if cfg["features_out"]:
        imageio.write_float(cfg["features_out"], out.features)
    if cfg["albedo_out"]:
        imageio.write_image(cfg["albedo_out"], _render(cfg, scene, sh, albedo_mode=True, features=False).color)
    if cfg["probe_out"]:
        w, _ = _parse_size(cfg["size"])
        imageio.write_image(cfg["probe_out"], render_light_sphere(sh, w, normalize=True))
    return EXIT_OK


def cmd_sweep_specular(cfg) -> int:
    _require(cfg, "scene", "light", "out")
    scales = _floats(cfg["scales"])
    if not scales or any(s < 0 for s in scales):
        raise UsageError("--scales must be a non-empty list of non-negative numbers")
    scene, sh = load_scene(cfg["scene"]), load_lighting(cfg["light"])
    rows = [_render(cfg, scene, sh, specular_scale=s, features=False).color for s in scales]
    imageio.write_image(cfg["out"], np.concatenate(rows, axis=0))
    return EXIT_OK


def interpolation_grid(cfg, scene, light_a, light_b) -> np.ndarray:
    cols, rows = _parse_size(cfg["grid"])
    y0, y1 = _floats(cfg["yaw_range"], 2)
    yaws = [y0] if cols == 1 else list(np.linspace(y0, y1, cols))
    grid = []
    for r in range(rows):
        u = 0.0 if rows == 1 else r / (rows - 1)
        sh = (1.0 - u) * light_a + u * light_b
        row = [
            _paste_probe(_render(cfg, scene, sh, yaw=float(yaw), features=False).color, sh, float(cfg["inset"]))
            for yaw in yaws
        ]
        grid.append(np.concatenate(row, axis=1))
    return np.concatenate(grid, axis=0)


def cmd_interpolate(cfg) -> int:
    _require(cfg, "scene", "light_a", "light_b", "out")
    scene = load_scene(cfg["scene"])
    img = interpolation_grid(cfg, scene, load_lighting(cfg["light_a"]), load_lighting(cfg["light_b"]))
    imageio.write_image(cfg["out"], img)
    return EXIT_OK


def cmd_lightprobe(cfg) -> int:
    _require(cfg, "light", "out")
    w, _ = _parse_size(cfg["size"])
    imageio.write_image(cfg["out"], render_light_sphere(load_lighting(cfg["light"]), w, bool(cfg["normalize"])))
    return EXIT_OK


def cmd_validate(cfg) -> int:
    from relit.validate import CHECKS, run_validation

    tolerances = {}
    for item in cfg["tol"]:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--tol expects NAME=VALUE, got {item!r}")
        if name != "all" and name not in CHECKS:
            raise UsageError(f"unknown check {name!r}")
        tolerances[name] = _floats(value, 1)[0]
    only = set(cfg["only"]) or None
    if only and only - set(CHECKS):
        raise UsageError(f"unknown check(s) {sorted(only - set(CHECKS))}")
    results = run_validation(int(cfg["quad_samples"]), tolerances, only)
    report = {
        "passed": all(r.passed for r in results),
        "quad_samples": int(cfg["quad_samples"]),
        "checks": [r.as_dict() for r in results],
    }
    text = json.dumps(report, indent=2)
    if cfg["report"]:
        Path(cfg["report"]).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_make_scene(cfg) -> int:
    _require(cfg, "out")
    kw = dict(kind=cfg["kind"], seed=int(cfg["seed"] or 0), resolution=int(cfg["resolution"]),
              channels=int(cfg["channels"]), n_features=int(cfg["features"]))
    if cfg["kind"] == "analytic-sphere":
        kw["channels"] = max(kw["channels"], 4)
    try:
        spec = SyntheticSceneSpec(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_scene(generate_synthetic_scene(spec), cfg["out"])
    return EXIT_OK


def cmd_make_light(cfg) -> int:
    _require(cfg, "out")
    sh = directional_light(_floats(cfg["direction"], 3), _floats(cfg["color"], 3), float(cfg["ambient"]))
    save_lighting(sh, cfg["out"])
    return EXIT_OK


COMMANDS = {
    "render": cmd_render,
    "sweep-specular": cmd_sweep_specular,
    "interpolate": cmd_interpolate,
    "lightprobe": cmd_lightprobe,
    "validate": cmd_validate,
    "make-scene": cmd_make_scene,
    "make-light": cmd_make_light,
}


def _add_render_flags(p):
    p.add_argument("--scene", help="scene file (.flit)")
    p.add_argument("--size", help="image size WxH (default 64x64)")
    p.add_argument("--samples", type=int, help="samples per ray (default 64)")
    p.add_argument("--seed", type=int, help="stratified sampling seed; midpoint sampling when omitted")
    p.add_argument("--albedo", action="store_true", default=argparse.SUPPRESS, help="render k_d only")
    p.add_argument("--specular-scale", type=float, help="multiplier on k_s (default 1)")
    p.add_argument("--no-clamp", action="store_true", default=argparse.SUPPRESS,
                   help="keep negative SH shading (renderer becomes linear in light)")
    p.add_argument("--yaw", type=float, help="orbit yaw in degrees")
    p.add_argument("--pitch", type=float, help="orbit pitch in degrees")
    p.add_argument("--distance", type=float, help="orbit distance (default 2.7)")
    p.add_argument("--fov", type=float, help="vertical field of view in degrees (default 30)")
    p.add_argument("--near", type=float, help="t_near (default distance - 1)")
    p.add_argument("--far", type=float, help="t_far (default distance + 1)")
    p.add_argument("--camera-file", help="JSON camera with rotation/translation/intrinsics")
    p.add_argument("--workers", type=int, help="render threads (output does not depend on it)")
    p.add_argument("--inset", type=float, help="light-probe inset size as a fraction of the image (0 = none)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relit", description="Relightable tri-plane volume renderer",
                                     argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--out", help="output path (.ppm, or .png)")

    p = sub.add_parser("render", help="render one image", argument_default=argparse.SUPPRESS)
    common(p)
    _add_render_flags(p)
    p.add_argument("--light", help="lighting JSON")
    p.add_argument("--depth-out", help="float dump of the depth image")
    p.add_argument("--features-out", help="float dump of the feature image")
    p.add_argument("--albedo-out", help="also write the albedo render here")
    p.add_argument("--probe-out", help="also write the light probe here")

    p = sub.add_parser("sweep-specular", help="stack renders over specular scales",
                       argument_default=argparse.SUPPRESS)
    common(p)
    _add_render_flags(p)
    p.add_argument("--light", help="lighting JSON")
    p.add_argument("--scales", help="comma-separated specular scales, one row each (default 0,1,4)")

    p = sub.add_parser("interpolate", help="camera yaw x lighting grid", argument_default=argparse.SUPPRESS)
    common(p)
    _add_render_flags(p)
    p.add_argument("--light-a", help="lighting of the first row")
    p.add_argument("--light-b", help="lighting of the last row")
    p.add_argument("--yaw-range", help="first,last column yaw in degrees (default -30,30)")
    p.add_argument("--grid", help="COLSxROWS (default 4x3)")

    p = sub.add_parser("lightprobe", help="render a light probe", argument_default=argparse.SUPPRESS)
    common(p)
    p.add_argument("--light", help="lighting JSON")
    p.add_argument("--size", help="probe resolution N or NxN")
    p.add_argument("--normalize", action="store_true", default=argparse.SUPPRESS, help="divide by the maximum")

    p = sub.add_parser("validate", help="run the oracle checks", argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--quad-samples", type=int, help="sphere quadrature nodes (default 1e6)")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="override a tolerance; NAME 'all' applies to every check")
    p.add_argument("--only", action="append", metavar="NAME", help="run only this check (repeatable)")
    p.add_argument("--report", help="write the JSON report here instead of stdout")

    p = sub.add_parser("make-scene", help="write a synthetic scene file", argument_default=argparse.SUPPRESS)
    common(p)
    p.add_argument("--kind", choices=SCENE_KINDS, help="scene kind (default random-weights)")
    p.add_argument("--seed", type=int)
    p.add_argument("--resolution", type=int, help="plane resolution (default 32)")
    p.add_argument("--channels", type=int, help="plane channels (default 16)")
    p.add_argument("--features", type=int, help="feature-image channels n_w (default 32)")

    p = sub.add_parser("make-light", help="write a directional-light lighting file",
                       argument_default=argparse.SUPPRESS)
    common(p)
    p.add_argument("--direction", help="x,y,z towards the light (default 0,0,1)")
    p.add_argument("--color", help="r,g,b light irradiance (default 1,1,1)")
    p.add_argument("--ambient", type=float, help="uniform ambient radiance (default 0)")
    return parser


def resolve_config(args: dict) -> dict:
    cfg = dict(DEFAULTS)
    if args.get("config"):
        try:
            doc = json.loads(Path(args["config"]).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {args['config']}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ValueError(f"config {args['config']}: expected a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in doc.items()})
    cfg.update(args)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    command = args.pop("command")
    try:
        cfg = resolve_config(args)
        return COMMANDS[command](cfg)
    except UsageError as exc:
        print(f"relit {command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SceneFormatError, LightingFormatError, OSError, ValueError) as exc:
        print(f"relit {command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"relit {command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
