"""Binary PPM rendering of (phi, zeta) probability grids."""

from __future__ import annotations

from typing import Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

from qrws.sweep import Grid2D

__all__ = ["COLORMAP", "colorize", "grid_to_image", "ppm_bytes", "write_ppm"]

# (probability, RGB) control points; linear in between, clamped outside
COLORMAP: tuple[tuple[float, tuple[int, int, int]], ...] = (
    (0.0, (0, 0, 128)),  # dark blue
    (0.25, (0, 160, 0)),  # green
    (0.5, (255, 255, 0)),  # yellow
)


def colorize(prob: ArrayLike) -> NDArray[np.uint8]:
    """Map probabilities to RGB; output shape is ``prob.shape + (3,)``."""
    p = np.asarray(prob, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite")
    xs = [c[0] for c in COLORMAP]
    channels = [np.interp(p, xs, [c[1][ch] for c in COLORMAP]) for ch in range(3)]
    return np.rint(np.stack(channels, axis=-1)).astype(np.uint8)


def grid_to_image(grid: Grid2D) -> NDArray[np.uint8]:
    """Pixel array with phi along columns and zeta descending down the rows."""
    return colorize(grid.prob.T[::-1])


def ppm_bytes(image: NDArray[np.uint8], comments: Mapping[str, object] | None = None) -> bytes:
    height, width, _ = image.shape
    head = ["P6"]
    for key, value in (comments or {}).items():
        head.append(f"# {key}: {value}")
    head.append(f"{width} {height}")
    head.append("255")
    return ("\n".join(head) + "\n").encode("ascii") + np.ascontiguousarray(image).tobytes()


def write_ppm(grid: Grid2D, path, comments: Mapping[str, object] | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(ppm_bytes(grid_to_image(grid), comments))
