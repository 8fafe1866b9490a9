"""Tetromino patterns and rigid placements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# block layouts at 0 degrees
_BLOCKS = {
    "T": np.array([[1, 1, 1],
                   [0, 1, 0]], dtype=np.int8),
    "L": np.array([[1, 0],
                   [1, 0],
                   [1, 1]], dtype=np.int8),
}
ROTATIONS = (0, 90, 180, 270)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (degrees, counter-clockwise) and top-left pixel of the rotated bounding box."""

    rotation: int = 0
    row: int = 0
    col: int = 0

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.rotation, self.row, self.col)


@dataclass(frozen=True)
class TetrominoPattern:
    kind: str
    rotation: int
    position: tuple[int, int]
    thickness: int
    grid: np.ndarray

    @property
    def n_pixels(self) -> int:
        return int(np.count_nonzero(self.grid))


def block_layout(kind: str, rotation: int = 0) -> np.ndarray:
    if kind not in _BLOCKS:
        raise ValueError(f"unknown tetromino {kind!r}; expected 'T' or 'L'")
    if rotation % 90:
        raise ValueError(f"rotation must be a multiple of 90 degrees, got {rotation}")
    return np.rot90(_BLOCKS[kind], k=(rotation // 90) % 4)


def footprint(kind: str, rotation: int, thickness: int) -> tuple[int, int]:
    """Pixel height and width of the rotated shape's bounding box."""
    bh, bw = block_layout(kind, rotation).shape
    return bh * thickness, bw * thickness


def make_pattern(kind: str, rotation: int, position: tuple[int, int], thickness: int,
                 side: int) -> TetrominoPattern:
    if thickness < 1:
        raise ValueError("thickness must be at least one pixel")
    blocks = block_layout(kind, rotation)
    shape = np.kron(blocks, np.ones((thickness, thickness), dtype=np.int8))
    r, c = position
    h, w = shape.shape
    if r < 0 or c < 0 or r + h > side or c + w > side:
        raise ValueError(
            f"{kind} tetromino ({h}x{w} px at rotation {rotation}) placed at {position} "
            f"does not fit a {side}x{side} grid")
    grid = np.zeros((side, side))
    grid[r:r + h, c:c + w] = shape
    return TetrominoPattern(kind, rotation % 360, (r, c), thickness, grid)


def rotate_grid(grid: np.ndarray, rotation: int) -> np.ndarray:
    return np.rot90(grid, k=(rotation // 90) % 4)


def fixed_positions(side: int, thickness: int) -> dict[str, tuple[int, int]]:
    """T near the top-left and L near the bottom-right, each inset by one block."""
    th, tw = footprint("T", 0, thickness)
    lh, lw = footprint("L", 0, thickness)
    t_pos = (thickness, thickness)
    l_pos = (side - thickness - lh, side - thickness - lw)
    if l_pos[0] < t_pos[0] + th and l_pos[1] < t_pos[1] + tw:
        raise ValueError(f"fixed T and L placements overlap at side {side}, thickness {thickness}")
    if min(l_pos) < 0:
        raise ValueError(f"thickness {thickness} too large for side {side}")
    return {"T": t_pos, "L": l_pos}


def valid_placements(kind: str, rotation: int, thickness: int, side: int) -> list[tuple[int, int]]:
    h, w = footprint(kind, rotation, thickness)
    return [(r, c) for r in range(side - h + 1) for c in range(side - w + 1)]


def sample_rigid_transform(rng: np.random.Generator, kind: str, thickness: int,
                           side: int) -> RigidTransform:
    """Uniform rotation, then a uniform in-bounds translation of the rotated shape."""
    rotation = ROTATIONS[int(rng.integers(4))]
    h, w = footprint(kind, rotation, thickness)
    if h > side or w > side:
        raise ValueError(f"{kind} tetromino of thickness {thickness} cannot fit a {side}px image")
    row = int(rng.integers(side - h + 1))
    col = int(rng.integers(side - w + 1))
    return RigidTransform(rotation, row, col)
