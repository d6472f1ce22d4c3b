"""Binary PGM/PPM export for event frames, heatmaps and attention maps."""

import logging
from pathlib import Path

import numpy as np

from evpose.exceptions import InvalidArgument
from evpose.pose import BONES, Pose
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

POSITIVE = (255, 64, 64)
NEGATIVE = (64, 128, 255)
PREDICTED = (0, 255, 0)
TRUTH = (255, 255, 0)


def write_pgm(path: PathArg, image: np.ndarray) -> None:
    """(H, W) uint8 as binary PGM (P5)."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise InvalidArgument(f"PGM wants (H, W) uint8, got {image.shape} {image.dtype}")
    _write(path, b"P5", image)


def write_ppm(path: PathArg, image: np.ndarray) -> None:
    """(H, W, 3) uint8 as binary PPM (P6)."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise InvalidArgument(f"PPM wants (H, W, 3) uint8, got {image.shape} {image.dtype}")
    _write(path, b"P6", image)


def _write(path: PathArg, magic: bytes, image: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (width, height))
        f.write(np.ascontiguousarray(image).tobytes())
    logger.debug("wrote %s, %dx%d", path, width, height)


def read_pnm(path: PathArg) -> np.ndarray:
    """Reads back what write_pgm/write_ppm wrote."""
    data = Path(path).read_bytes()
    magic, dims, _, body = data.split(b"\n", 3)
    width, height = (int(x) for x in dims.split())
    channels = 3 if magic == b"P6" else 1
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return arr if channels == 3 else arr[:, :, 0]


def gray(values: np.ndarray) -> np.ndarray:
    """[0, 1] values onto 0..255, clipping anything outside."""
    return np.round(np.clip(values, 0.0, 1.0) * 255).astype(np.uint8)


def stretch(values: np.ndarray) -> np.ndarray:
    """Min-max stretch onto 0..255; a flat map turns black."""
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return gray((values - lo) / (hi - lo))


def event_image(grid: np.ndarray) -> np.ndarray:
    """A normalized (2, H, W) frame as color: red for ON, blue for OFF."""
    off, on = np.clip(grid[0], 0, 1), np.clip(grid[1], 0, 1)
    rgb = on[..., None] * POSITIVE + off[..., None] * NEGATIVE
    return np.clip(np.round(rgb), 0, 255).astype(np.uint8)


def draw_pose(image: np.ndarray, pose: Pose, color: tuple[int, int, int]) -> np.ndarray:
    """Draws visible bones and joints onto a copy of an (H, W, 3) image."""
    out = image.copy()
    height, width = out.shape[:2]

    def plot(xs, ys):
        px, py = np.floor(xs + 0.5).astype(int), np.floor(ys + 0.5).astype(int)
        keep = (px >= 0) & (px < width) & (py >= 0) & (py < height)
        out[py[keep], px[keep]] = color

    for a, b in BONES:
        if a < pose.K and b < pose.K and pose.visible[a] and pose.visible[b]:
            (x0, y0), (x1, y1) = pose.joints[a], pose.joints[b]
            n = int(max(abs(x1 - x0), abs(y1 - y0))) + 2
            plot(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
    for (x, y), v in zip(pose.joints, pose.visible):
        if v:
            dx, dy = np.meshgrid(np.arange(-1, 2), np.arange(-1, 2))
            plot(x + dx.ravel(), y + dy.ravel())
    return out
