"""Synthetic ground truth: line-scene EPIs and layered 4D light fields.

Disparity is measured in pixels per angular step; larger disparity means a
nearer surface, which is drawn on top.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import interp
from .lightfield import ChannelSpace, LightField4D, downsample_angular, save_lightfield


@dataclass
class LinePrimitive:
    x0: float
    disparity: float
    color: float = 0.0
    width: float = 1.0


@dataclass
class LineScene:
    primitives: list = field(default_factory=list)
    background: float = 1.0

    def __post_init__(self):
        self.primitives = [p if isinstance(p, LinePrimitive) else LinePrimitive(**p) for p in self.primitives]
        if any(p.width <= 0 for p in self.primitives):
            raise ValueError("line widths must be positive")
        disparities = [p.disparity for p in self.primitives]
        if len(set(disparities)) != len(disparities):
            raise ValueError("line disparities must be distinct")


def render_line_epi(scene: LineScene, n_views: int, width: int, supersample: int = 8) -> np.ndarray:
    """Render anti-aliased bands; pixel ``x`` covers ``[x - 0.5, x + 0.5)``."""
    if n_views < 1 or supersample < 1:
        raise ValueError("n_views and supersample must be >= 1")
    a = np.arange(n_views, dtype=np.float64)[:, None]
    center = (n_views - 1) / 2.0
    xs = (np.arange(width * supersample, dtype=np.float64) + 0.5) / supersample - 0.5
    fine = np.full((n_views, xs.size), float(scene.background))
    for prim in sorted(scene.primitives, key=lambda p: p.disparity):
        c = prim.x0 + prim.disparity * (a - center)
        inside = np.abs(xs[None, :] - c) < prim.width / 2.0
        fine = np.where(inside, prim.color, fine)
    return fine.reshape(n_views, width, supersample).mean(axis=2)


@dataclass
class Layer:
    texture: np.ndarray
    disparity_s: float
    disparity_t: float = 0.0
    alpha: np.ndarray | None = None


@dataclass
class LayeredScene:
    layers: list

    def __post_init__(self):
        shapes = {np.shape(layer.texture)[:2] for layer in self.layers}
        if len(shapes) > 1:
            raise ValueError("layer textures differ in size")


def _translate(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """``out[y, x] = img[y - dy, x - dx]`` with cubic sampling, replicated borders."""
    h, w = img.shape[:2]
    moved = np.moveaxis(img, (0, 1), (-2, -1)) if img.ndim == 3 else img
    if dx:
        moved = interp.sample_last_axis(moved, np.arange(w) - dx)
    if dy:
        moved = interp.sample_axis(moved, np.arange(h) - dy, axis=-2)
    return np.moveaxis(moved, (-2, -1), (0, 1)) if img.ndim == 3 else moved


def render_layered_lightfield(scene: LayeredScene, T: int, S: int, H: int, W: int) -> LightField4D:
    """Translate each layer per view and composite far to near.

    Textures may be larger than the views by an even number of pixels per
    axis. Each view is then the centered (H, W) crop of the translated
    canvas, so content can enter from beyond the frame instead of being
    smeared in from replicated edges.
    """
    if min(T, S, H, W) < 1:
        raise ValueError("dimensions must be positive")
    first = np.asarray(scene.layers[0].texture)
    channels = 3 if first.ndim == 3 else 1
    ch, cw = first.shape[:2]
    if ch < H or cw < W or (ch - H) % 2 or (cw - W) % 2:
        raise ValueError(f"texture shape {(ch, cw)} does not match {(H, W)} (needs an even margin)")
    my, mx = (ch - H) // 2, (cw - W) // 2
    samples = np.zeros((T, S, H, W, channels))
    tc, sc = (T - 1) / 2.0, (S - 1) / 2.0
    for layer in sorted(scene.layers, key=lambda l: l.disparity_s):
        tex = np.asarray(layer.texture, dtype=np.float64).reshape(ch, cw, channels)
        alpha = np.ones((ch, cw)) if layer.alpha is None else np.asarray(layer.alpha, dtype=np.float64)
        for t in range(T):
            for s in range(S):
                dy, dx = layer.disparity_t * (t - tc), layer.disparity_s * (s - sc)
                moved = _translate(tex, dy, dx)[my:my + H, mx:mx + W]
                a = np.clip(_translate(alpha, dy, dx), 0.0, 1.0)[my:my + H, mx:mx + W, None]
                samples[t, s] = a * moved + (1.0 - a) * samples[t, s]
    space = ChannelSpace.RGB if channels == 3 else ChannelSpace.LUMA
    return LightField4D(np.clip(samples, 0.0, 1.0), space)


# ---------------------------------------------------------------------------
# Textures


def smooth_noise(rng, shape, blur: float, contrast: float = 0.35) -> np.ndarray:
    img = ndimage.gaussian_filter(rng.standard_normal(shape), blur, mode="wrap")
    img = img / (img.std() + 1e-12)
    return np.clip(0.5 + 0.5 * contrast * img, 0.0, 1.0)


def soft_matte(rng, shape, blur: float, gain: float = 1.5) -> np.ndarray:
    """Random opacity map with smooth tanh transitions between 0 and 1."""
    img = ndimage.gaussian_filter(rng.standard_normal(shape), blur, mode="wrap")
    return 0.5 + 0.5 * np.tanh(gain * img / (img.std() + 1e-12))


def gradient_texture(rng, shape) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    angle = rng.uniform(0, 2 * np.pi)
    freq = rng.uniform(1.0, 3.0)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.cos(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
    return 0.5 + 0.3 * wave


def band_alpha(shape, x_center: float, width: float, softness: float = 1.0) -> np.ndarray:
    """Vertical band mask with smooth edges."""
    h, w = shape
    x = np.arange(w, dtype=np.float64)
    edge = np.abs(x - x_center) - width / 2.0
    profile = 0.5 * (1.0 - np.tanh(edge / softness))
    return np.broadcast_to(profile, (h, w)).copy()


TEXTURE_KINDS = ("gradient", "noise", "bands")
SMOOTH_KINDS = ("gradient", "noise")
SUITE_DISPARITIES = (0.5, 1.0, 2.0, 3.0, 4.0)


def scene_margin(d_max: float, views: int, step: int) -> int:
    """Canvas margin that covers the largest per-view translation."""
    return int(np.ceil(d_max / step * (views - 1) / 2.0)) + 2


def make_scene(rng, kind: str, d_max: float, size: int, step: int, margin: int = 0) -> LayeredScene:
    """Layered scene whose largest disparity between sparse neighbours is ``d_max``.

    Layer disparities are expressed per dense view step (``d / step``).
    Textures cover ``size + 2 * margin`` pixels per axis.
    """
    shape = (size + 2 * margin, size + 2 * margin)
    d_dense = d_max / step
    if kind == "gradient":
        return LayeredScene([Layer(gradient_texture(rng, shape), d_dense, d_dense)])
    if kind == "noise":
        back = Layer(smooth_noise(rng, shape, rng.uniform(2.5, 3.5)), 0.4 * d_dense, 0.4 * d_dense)
        front = Layer(smooth_noise(rng, shape, rng.uniform(2.5, 3.5)), d_dense, d_dense,
                      alpha=soft_matte(rng, shape, 6.0))
        return LayeredScene([back, front])
    if kind == "bands":
        back = Layer(smooth_noise(rng, shape, rng.uniform(2.0, 3.0)), 0.25 * d_dense, 0.25 * d_dense)
        layers = [back]
        for i, frac in enumerate((0.6, 1.0)):
            tex = np.full(shape, rng.uniform(0.1, 0.9)) + 0.1 * smooth_noise(rng, shape, 3.0)
            alpha = band_alpha(shape, margin + rng.uniform(0.2, 0.8) * size, rng.uniform(4, 10), 1.0)
            if i % 2:
                alpha = alpha.T.copy()
            layers.append(Layer(np.clip(tex, 0, 1), frac * d_dense, frac * d_dense, alpha))
        return LayeredScene(layers)
    raise ValueError(f"unknown texture kind {kind!r}")


def make_benchmark_suite(seed: int = 0, size: int = 48, dense_views: int = 9, step: int = 4,
                         replicas: int = 2) -> list:
    """Deterministic list of ``(sparse, dense, meta)`` tuples.

    Each replica holds one scene per (texture kind, disparity) combination.
    Replica 0 is the training split; the rest are the test split.
    """
    rng = np.random.default_rng(seed)
    suite = []
    for rep in range(replicas):
        for kind in TEXTURE_KINDS:
            for d in SUITE_DISPARITIES:
                scene = make_scene(rng, kind, d, size, step, scene_margin(d, dense_views, step))
                dense = render_layered_lightfield(scene, dense_views, dense_views, size, size)
                sparse = downsample_angular(dense, step)
                meta = {
                    "name": f"r{rep}_{kind}_d{d:g}",
                    "split": "train" if rep == 0 else "test",
                    "texture": kind,
                    "d_max": d,
                    "step": step,
                }
                suite.append((sparse, dense, meta))
    return suite


def save_suite(suite, out_dir: str | os.PathLike) -> None:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    index = []
    for sparse, dense, meta in suite:
        save_lightfield(sparse, root / meta["name"] / "sparse")
        save_lightfield(dense, root / meta["name"] / "dense")
        index.append(meta)
    (root / "suite.json").write_text(json.dumps({"scenes": index}, indent=2, sort_keys=True) + "\n")


def load_suite_index(suite_dir: str | os.PathLike) -> list:
    return json.loads((Path(suite_dir) / "suite.json").read_text())["scenes"]


# ---------------------------------------------------------------------------
# Scene spec files


def save_line_scene(scene: LineScene, path: str | os.PathLike) -> None:
    data = {"type": "lines", "background": scene.background,
            "primitives": [asdict(p) for p in scene.primitives]}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_scene(path: str | os.PathLike):
    """Read a scene spec: ``{"type": "lines", ...}`` or ``{"type": "layers", ...}``.

    Layer textures are given inline as nested lists or as ``{"constant": v,
    "shape": [h, w]}``.
    """
    data = json.loads(Path(path).read_text())
    if data.get("type") == "lines":
        return LineScene(data.get("primitives", []), data.get("background", 1.0))
    if data.get("type") == "layers":
        layers = []
        for spec in data["layers"]:
            tex = spec["texture"]
            if isinstance(tex, dict):
                tex = np.full(tuple(tex["shape"]), float(tex["constant"]))
            alpha = spec.get("alpha")
            layers.append(Layer(np.asarray(tex, dtype=np.float64), float(spec["disparity_s"]),
                                float(spec.get("disparity_t", 0.0)),
                                None if alpha is None else np.asarray(alpha, dtype=np.float64)))
        return LayeredScene(layers)
    raise ValueError(f"{path}: unknown scene type {data.get('type')!r}")
