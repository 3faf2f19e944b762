"""Synthetic thermal scenes of PV panels with per-pixel ground truth.

A scene is a centered grid of panel cells on a cooler background, with
optional hotspots (radial Gaussian bright blobs), snail trails (thin
bright polyline ribbons) and additive Gaussian noise. The ground truth
records which element generated each pixel; fault classes take
precedence over the panel, and hotspots over trails.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np


class SceneClass(IntEnum):
    BACKGROUND = 0
    PANEL = 1
    HOTSPOT = 2
    SNAIL_TRAIL = 3


@dataclass(frozen=True)
class Hotspot:
    cx: float
    cy: float
    radius: float
    peak: float


@dataclass(frozen=True)
class SnailTrail:
    points: tuple[tuple[float, float], ...]
    thickness: float
    intensity: float


@dataclass(frozen=True)
class SceneSpec:
    width: int = 336
    height: int = 256
    panel_rows: int = 3
    panel_cols: int = 5
    cell_size: int = 48
    cell_gap: int = 4
    background_level: float = 0.15
    panel_level: float = 0.45
    noise_sigma: float = 0.02
    seed: int = 0
    hotspots: tuple[Hotspot, ...] = ()
    trails: tuple[SnailTrail, ...] = ()

    def grid_origin(self) -> tuple[int, int]:
        """Top-left pixel (x0, y0) of the centered panel grid."""
        gw = self.panel_cols * self.cell_size + (self.panel_cols - 1) * self.cell_gap
        gh = self.panel_rows * self.cell_size + (self.panel_rows - 1) * self.cell_gap
        return (self.width - gw) // 2, (self.height - gh) // 2

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"scene must be at least 1x1, got {self.width}x{self.height}")
        if self.panel_rows < 1 or self.panel_cols < 1 or self.cell_size < 1 or self.cell_gap < 0:
            raise ValueError("panel grid needs rows, cols, cell_size >= 1 and cell_gap >= 0")
        gw = self.panel_cols * self.cell_size + (self.panel_cols - 1) * self.cell_gap
        gh = self.panel_rows * self.cell_size + (self.panel_rows - 1) * self.cell_gap
        if gw > self.width or gh > self.height:
            raise ValueError(f"panel grid {gw}x{gh} exceeds scene bounds {self.width}x{self.height}")
        for name, level in (
            ("background_level", self.background_level),
            ("panel_level", self.panel_level),
        ):
            if not 0.0 <= level <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {level}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        for h in self.hotspots:
            if h.radius <= 0 or not 0.0 <= h.peak <= 1.0:
                raise ValueError(f"hotspot needs radius > 0 and peak in [0, 1]: {h}")
            if h.cx - h.radius < 0 or h.cx + h.radius > self.width - 1 \
                    or h.cy - h.radius < 0 or h.cy + h.radius > self.height - 1:
                raise ValueError(f"hotspot extends outside the image: {h}")
        for t in self.trails:
            if len(t.points) < 2:
                raise ValueError(f"snail trail needs at least two vertices: {t}")
            if t.thickness <= 0 or not 0.0 <= t.intensity <= 1.0:
                raise ValueError(f"snail trail needs thickness > 0 and intensity in [0, 1]: {t}")
            half = t.thickness / 2.0
            for x, y in t.points:
                if x - half < 0 or x + half > self.width - 1 or y - half < 0 or y + half > self.height - 1:
                    raise ValueError(f"snail trail vertex ({x}, {y}) too close to the image edge")


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize a scene; returns (image, truth) both of shape (H, W).

    Deterministic for a given spec (noise comes from spec.seed). Pixel
    (y, x) is treated as the point (x, y) for all geometry.
    """
    spec.validate()
    h, w = spec.height, spec.width
    img = np.full((h, w), spec.background_level)
    truth = np.full((h, w), SceneClass.BACKGROUND, dtype=np.uint8)

    x0, y0 = spec.grid_origin()
    step = spec.cell_size + spec.cell_gap
    for r in range(spec.panel_rows):
        for c in range(spec.panel_cols):
            ys, xs = y0 + r * step, x0 + c * step
            img[ys:ys + spec.cell_size, xs:xs + spec.cell_size] = spec.panel_level
            truth[ys:ys + spec.cell_size, xs:xs + spec.cell_size] = SceneClass.PANEL

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    for t in spec.trails:
        dist = np.full((h, w), np.inf)
        for p, q in zip(t.points[:-1], t.points[1:]):
            np.minimum(dist, _dist_to_segment(xx, yy, p, q), out=dist)
        mask = dist <= t.thickness / 2.0
        img[mask] = np.maximum(img[mask], t.intensity)
        truth[mask] = SceneClass.SNAIL_TRAIL

    for hs in spec.hotspots:
        d2 = (xx - hs.cx) ** 2 + (yy - hs.cy) ** 2
        mask = d2 <= hs.radius ** 2
        sigma = hs.radius / 2.0
        profile = spec.panel_level + (hs.peak - spec.panel_level) * np.exp(-0.5 * d2 / sigma**2)
        img[mask] = np.maximum(img[mask], profile[mask])
        truth[mask] = SceneClass.HOTSPOT

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        img = np.clip(img + rng.normal(0.0, spec.noise_sigma, size=img.shape), 0.0, 1.0)
    return img, truth


def _dist_to_segment(xx, yy, p, q):
    px, py = p
    qx, qy = q
    dx, dy = qx - px, qy - py
    norm2 = dx * dx + dy * dy
    if norm2 == 0.0:
        return np.hypot(xx - px, yy - py)
    t = np.clip(((xx - px) * dx + (yy - py) * dy) / norm2, 0.0, 1.0)
    return np.hypot(xx - (px + t * dx), yy - (py + t * dy))


# ---------------------------------------------------------------------------
# flat key-value scene files

_INT_FIELDS = ("width", "height", "panel_rows", "panel_cols", "cell_size", "cell_gap", "seed")
_FLOAT_FIELDS = ("background_level", "panel_level", "noise_sigma")


def format_scene_spec(spec: SceneSpec) -> str:
    """Serialize a SceneSpec as editable ``key = value`` text."""
    lines = ["# synthetic PV thermal scene"]
    for name in _INT_FIELDS:
        lines.append(f"{name} = {getattr(spec, name)}")
    for name in _FLOAT_FIELDS:
        lines.append(f"{name} = {getattr(spec, name)!r}")
    for h in spec.hotspots:
        lines.append(f"hotspot = {h.cx!r} {h.cy!r} {h.radius!r} {h.peak!r}")
    for t in spec.trails:
        pts = " ".join(f"{x!r},{y!r}" for x, y in t.points)
        lines.append(f"trail = {t.thickness!r} {t.intensity!r} {pts}")
    return "\n".join(lines) + "\n"


def parse_scene_spec(text: str) -> SceneSpec:
    """Parse the flat key-value format written by format_scene_spec."""
    fields: dict = {}
    hotspots: list[Hotspot] = []
    trails: list[SnailTrail] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"scene spec line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _INT_FIELDS:
                fields[key] = int(value)
            elif key in _FLOAT_FIELDS:
                fields[key] = float(value)
            elif key == "hotspot":
                cx, cy, radius, peak = (float(tok) for tok in value.split())
                hotspots.append(Hotspot(cx, cy, radius, peak))
            elif key == "trail":
                toks = value.split()
                if len(toks) < 4:
                    raise ValueError("trail needs thickness, intensity and >= 2 x,y vertices")
                points = tuple(
                    (float(t.split(",")[0]), float(t.split(",")[1])) for t in toks[2:]
                )
                trails.append(SnailTrail(points, float(toks[0]), float(toks[1])))
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"scene spec line {lineno}: {exc}") from None
    spec = SceneSpec(hotspots=tuple(hotspots), trails=tuple(trails), **fields)
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# presets


def _preset_hotspots3() -> SceneSpec:
    # 3x5 cell grid centered in a 336x256 frame; cell centers at
    # (64 + 52*col, 76 + 52*row). Three hotspots on distinct cells plus
    # one snail trail crossing two cells of the middle row.
    return SceneSpec(
        hotspots=(
            Hotspot(cx=116.0, cy=76.0, radius=9.0, peak=0.75),
            Hotspot(cx=220.0, cy=128.0, radius=8.0, peak=0.75),
            Hotspot(cx=64.0, cy=180.0, radius=10.0, peak=0.75),
        ),
        trails=(
            SnailTrail(points=((95.0, 120.0), (140.0, 138.0), (178.0, 126.0)),
                       thickness=3.0, intensity=0.65),
        ),
    )


_PRESETS = {"hotspots3": _preset_hotspots3}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_PRESETS))


def preset_scene(name: str, seed: int | None = None) -> SceneSpec:
    """Built-in scene by name; ``seed`` overrides the spec's noise seed."""
    try:
        spec = _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}, available: {', '.join(preset_names())}") from None
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec
