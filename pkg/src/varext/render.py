"""Heatmaps (binary PPM) and Whitney outlines (SVG)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .approximator import approximant, build_families
from .corona import build_corona
from .extension import upsilon
from .functionals import InteriorField, constant_field
from .mollifier import regularized_distance
from .whitney import WhitneyGrid

MAX_PIXELS = 2048 * 2048
MIN_OUTLINE_PX = 4
UNCOVERED = np.array([128, 128, 128], dtype=np.uint8)
OUTLINE = np.array([0, 0, 0], dtype=np.uint8)
# perceptually ordered stops, dark blue to yellow
_STOPS = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float)


def colormap(t: np.ndarray) -> np.ndarray:
    """Map t in [0, 1] to RGB bytes by piecewise-linear interpolation of the stops."""
    t = np.clip(t, 0.0, 1.0) * (len(_STOPS) - 1)
    i = np.minimum(t.astype(int), len(_STOPS) - 2)
    a = t - i
    rgb = _STOPS[i] * (1 - a)[..., None] + _STOPS[i + 1] * a[..., None]
    return np.round(rgb).astype(np.uint8)


def pixel_centers(window, width: int, height: int) -> np.ndarray:
    """Pixel centres, row 0 at the top of the window; shape (height, width, 2)."""
    x0, y0, x1, y1 = window
    if not (x1 > x0 and y1 > y0):
        raise ValueError("zero-size render window")
    if width <= 0 or height <= 0 or width * height > MAX_PIXELS:
        raise ValueError(f"resolution {width}x{height} outside (0, {MAX_PIXELS}] pixels")
    xs = x0 + (np.arange(width) + 0.5) * (x1 - x0) / width
    ys = y1 - (np.arange(height) + 0.5) * (y1 - y0) / height
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], -1)


def heatmap(grid: WhitneyGrid, field: InteriorField, window, width: int, height: int,
            outlines: bool = True) -> np.ndarray:
    """RGB image of the field; uncovered pixels grey, cube boundaries black when ``outlines``."""
    pts = pixel_centers(window, width, height)
    flat = pts.reshape(-1, 2)
    v = field.value(flat).reshape(height, width)
    ok = ~np.isnan(v)
    lo, hi = (float(v[ok].min()), float(v[ok].max())) if ok.any() else (0.0, 0.0)
    t = (v - lo) / (hi - lo) if hi > lo else np.full_like(v, 0.5)
    img = colormap(np.where(ok, t, 0.0))
    img[~ok] = UNCOVERED
    if outlines:
        cube = grid.locate(flat).reshape(height, width)
        edge = np.zeros((height, width), dtype=bool)
        edge[:, :-1] |= cube[:, :-1] != cube[:, 1:]
        edge[:-1, :] |= cube[:-1, :] != cube[1:, :]
        # cubes narrower than MIN_OUTLINE_PX pixels would turn solid black
        px = grid.side[np.maximum(cube, 0)] * width / (window[2] - window[0])
        img[edge & ok & (px >= MIN_OUTLINE_PX)] = OUTLINE
    return img


def write_ppm(path, img: np.ndarray) -> None:
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError("not a binary 8-bit PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def write_svg(path, grid: WhitneyGrid, window, width: int, height: int) -> None:
    """Cube outlines clipped to the window, scaled to the pixel frame."""
    x0, y0, x1, y1 = window
    sx, sy = width / (x1 - x0), height / (y1 - y0)
    c, s = grid.corner, grid.side
    keep = (c[:, 0] < x1) & (c[:, 0] + s > x0) & (c[:, 1] < y1) & (c[:, 1] + s > y0)
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             '<g fill="none" stroke="black" stroke-width="0.5">']
    for p in np.nonzero(keep)[0]:
        px = (c[p, 0] - x0) * sx
        py = (y1 - c[p, 1] - s[p]) * sy
        lines.append(f'<rect x="{px:.4f}" y="{py:.4f}" width="{s[p] * sx:.4f}" height="{s[p] * sy:.4f}"/>')
    lines += ["</g>", "</svg>"]
    Path(path).write_text("\n".join(lines) + "\n")


def make_field(name: str, grid: WhitneyGrid, f: np.ndarray, eps: float, value: float = 1.0) -> InteriorField:
    if name == "upsilon":
        return upsilon(grid, f)
    if name == "approximant":
        cor = build_corona(grid.lattice, f, eps)
        return approximant(grid, cor, build_families(grid, cor), f)
    if name == "regularized_distance":
        return regularized_distance(grid).field
    if name == "constant":
        return constant_field(value, grid)
    raise ValueError(f"unknown field {name!r}")


def render_field(cfg, model, lattice, grid: WhitneyGrid, f: np.ndarray, out: Path) -> tuple[Path, Path]:
    r = cfg.render
    window = tuple(r.window) if r.window is not None else tuple(model.window)
    w, h = r.resolution
    field = make_field(r.field, grid, f, cfg.eps[0], cfg.data.value)
    img = heatmap(grid, field, window, w, h, r.outlines)
    ppm, svg = out / f"{r.field}.ppm", out / "whitney.svg"
    write_ppm(ppm, img)
    write_svg(svg, grid, window, w, h)
    return ppm, svg
