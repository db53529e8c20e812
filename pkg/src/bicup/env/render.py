"""Rasterizer producing the grayscale camera frames.

Deterministic, numpy only. The viewport covers the whole reachable set
(workspace box plus string length in every direction) with square
pixels so the ball stays a disc. Gray levels: background 0, cup 0.5,
ball 1.0, ball drawn on top. Row 0 is the top of the image.
"""

from dataclasses import dataclass

import numpy as np

from bicup.env.physics import PhysicsConfig, PhysicsState

BG_LEVEL = 0.0
CUP_LEVEL = 0.5
BALL_LEVEL = 1.0

# minimum on-screen ball radius in pixels; > sqrt(2)/2 so the disc
# always covers at least one pixel center while inside the viewport
MIN_BALL_PX = 1.2


@dataclass(frozen=True)
class RenderConfig:
    size: int = 32
    view_x: tuple = (-1.0, 1.0)
    view_z: tuple = (-0.6, 1.4)

    def validate(self):
        if self.size < 8:
            raise ValueError(f"frame size too small: {self.size}")
        for lo, hi in (self.view_x, self.view_z):
            if not hi > lo:
                raise ValueError("empty viewport")


class Renderer:
    """Holds the precomputed pixel-center grid for one camera setup."""

    def __init__(self, phys: PhysicsConfig, cfg: RenderConfig = RenderConfig()):
        cfg.validate()
        self.cfg = cfg
        self.phys = phys
        n = cfg.size
        sx = (cfg.view_x[1] - cfg.view_x[0]) / n
        sz = (cfg.view_z[1] - cfg.view_z[0]) / n
        # world coordinates of pixel centers; row 0 at view_z top
        cols = cfg.view_x[0] + sx * (np.arange(n) + 0.5)
        rows = cfg.view_z[1] - sz * (np.arange(n) + 0.5)
        self.wx = np.broadcast_to(cols[None, :], (n, n))
        self.wz = np.broadcast_to(rows[:, None], (n, n))
        # half line width of the cup outline, about one pixel wide
        self.line_hw = 0.5 * max(sx, sz)
        self.ball_draw_r = max(phys.ball_radius, MIN_BALL_PX * max(sx, sz))

    def render(self, state: PhysicsState) -> np.ndarray:
        cx, cz = state.cup_pos
        frame = np.full((self.cfg.size,) * 2, BG_LEVEL, dtype=np.float32)

        r, h, lw = self.phys.cup_radius, self.phys.cup_height, self.line_hw
        in_wall_band = (cz - lw <= self.wz) & (self.wz <= cz + h + lw)
        left = in_wall_band & (np.abs(self.wx - (cx - r)) <= lw)
        right = in_wall_band & (np.abs(self.wx - (cx + r)) <= lw)
        base = (np.abs(self.wz - cz) <= lw) & (np.abs(self.wx - cx) <= r + lw)
        frame[left | right | base] = CUP_LEVEL

        bx, bz = state.ball_pos
        d2 = (self.wx - bx) ** 2 + (self.wz - bz) ** 2
        frame[d2 <= self.ball_draw_r ** 2] = BALL_LEVEL
        return frame


def frame_to_pgm(frame: np.ndarray, path):
    """Write one frame as a binary 8-bit PGM for eyeballing."""
    levels = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8)
    h, w = levels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(levels.tobytes())
