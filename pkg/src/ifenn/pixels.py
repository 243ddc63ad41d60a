"""Gauss-point <-> pixel conversion and inference-time conditioning of pixel maps.

Pixel ``(r, c)`` holds the value of exactly one Gauss point (row 0 at the
minimum-y edge), so conversion in either direction is a pure permutation.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .mesh import GaussGrid


@dataclass(frozen=True)
class PixelGrid:
    values: np.ndarray  # (rows, cols)
    h_px: float

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def replace(self, values: np.ndarray) -> "PixelGrid":
        return PixelGrid(values, self.h_px)


@dataclass(frozen=True)
class ConditioningConfig:
    h_cap: float = 1e5
    smooth: bool = True
    smooth_kernel_size: int = 5
    smooth_sigma: float = 2.0
    enforce_irreversibility: bool = True
    smooth_before_irreversibility: bool = True

    def __post_init__(self):
        if not self.h_cap > 0:
            raise ValueError(f"h_cap must be positive, got {self.h_cap}")
        if self.smooth_kernel_size < 1 or self.smooth_kernel_size % 2 == 0:
            raise ValueError(f"smooth_kernel_size must be odd, got {self.smooth_kernel_size}")
        if not self.smooth_sigma > 0:
            raise ValueError(f"smooth_sigma must be positive, got {self.smooth_sigma}")


def gp_to_pixels(gp_values: np.ndarray, grid: GaussGrid) -> PixelGrid:
    flat = np.asarray(gp_values).ravel()
    if flat.size != grid.px * grid.py:
        raise ValueError(f"expected {grid.px * grid.py} Gauss-point values, got {flat.size}")
    return PixelGrid(flat[grid.pixel_to_gp].reshape(grid.py, grid.px), grid.h_px)


def pixels_to_gp(pix: PixelGrid | np.ndarray, grid: GaussGrid) -> np.ndarray:
    """Inverse of :func:`gp_to_pixels`; returns an ``(n_elem, 4)`` array."""
    values = pix.values if isinstance(pix, PixelGrid) else np.asarray(pix)
    if values.shape != grid.shape:
        raise ValueError(f"pixel map shape {values.shape} does not match grid {grid.shape}")
    out = np.empty(grid.px * grid.py, dtype=values.dtype)
    out[grid.pixel_to_gp] = values.ravel()
    return out.reshape(-1, 4)


def cap_field(pix: PixelGrid, h_cap: float) -> PixelGrid:
    if not h_cap > 0:
        raise ValueError("h_cap must be positive")
    return pix.replace(np.clip(pix.values, 0.0, h_cap))


def gaussian_kernel(k: int = 5, sigma: float = 2.0) -> np.ndarray:
    if k % 2 == 0 or k < 1:
        raise ValueError("kernel size must be odd")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    r = np.arange(k) - k // 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma**2))
    return g / g.sum()


def gaussian_smooth(pix: PixelGrid, k: int = 5, sigma: float = 2.0) -> PixelGrid:
    """Normalized k x k Gaussian blur with replicate padding; shape is preserved."""
    out = ndimage.convolve(np.asarray(pix.values, dtype=float), gaussian_kernel(k, sigma), mode="nearest")
    return pix.replace(out)


def enforce_irreversibility(current: PixelGrid, previous: PixelGrid) -> PixelGrid:
    if current.values.shape != previous.values.shape:
        raise ValueError(f"shape mismatch {current.values.shape} vs {previous.values.shape}")
    return current.replace(np.maximum(current.values, previous.values))


def write_grid_text(pix: PixelGrid, path) -> None:
    """Bare text grid: ``rows cols h_px`` header then row-major values."""
    Path(path).write_text(format_grid_text(pix))


def format_grid_text(pix: PixelGrid, header_lines=()) -> str:
    lines = [f"# {h}" for h in header_lines]
    lines.append(f"{pix.rows} {pix.cols} {pix.h_px!r}")
    for row in np.asarray(pix.values, dtype=float):
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def read_grid_text(path) -> PixelGrid:
    return parse_grid_text(Path(path).read_text())[0]


def parse_grid_text(text: str):
    """Parse a grid file; returns the grid and its ``# key value`` header dict."""
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(" ")
            header[key] = val.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError("empty grid file")
    rows, cols, h = body[0].split()
    rows, cols = int(rows), int(cols)
    if len(body) - 1 != rows:
        raise ValueError(f"grid header declares {rows} rows, found {len(body) - 1}")
    values = np.array([[float(v) for v in line.split()] for line in body[1:]])
    if values.shape != (rows, cols):
        raise ValueError(f"grid header declares {rows}x{cols}, payload is {values.shape}")
    return PixelGrid(values, float(h)), header
