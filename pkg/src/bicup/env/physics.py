"""Planar ball-on-a-string dynamics under a velocity-driven cup.

The cup is kinematic: its velocity tracks the commanded velocity with a
short first-order lag and its position is clamped to the workspace box.
The ball is a point mass under gravity tied to the cup base by an
inextensible, unilateral string: it pulls when taut, never pushes.

Integration is kick-drift-kick (velocity half-steps around the position
update), which is exact for constant gravity, followed by constraint
passes: a support contact lets the ball rest on the cup base (so a
caught ball stays caught), then the string removes separating radial
velocity and projects the ball back onto the rope sphere. Cup walls are
not modeled beyond the base support. With a resting cup this substep
never increases mechanical energy: the half-kick split makes the
gravity-drift energy-neutral, and both constraint passes only remove
energy (the projection gain is bounded by the removed radial term).

All state is float64; one control step runs `substeps` inner steps.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhysicsConfig:
    string_length: float = 0.40
    ball_radius: float = 0.025
    cup_radius: float = 0.10          # half the mouth width
    cup_height: float = 0.16
    gravity: float = 9.81
    control_dt: float = 0.05          # 20 Hz command rate
    substeps: int = 20                # 2.5 ms inner steps
    cup_tau: float = 0.02             # velocity tracking lag
    max_speed: float = 2.0
    workspace_x: tuple = (-0.5, 0.5)
    workspace_z: tuple = (0.0, 0.8)
    cup_start: tuple = (0.0, 0.5)
    start_angle_jitter: float = 0.05  # radians around hanging rest

    def validate(self) -> None:
        if self.string_length <= self.cup_height:
            raise ValueError("string must be longer than the cup")
        if not self.workspace_x[0] < self.workspace_x[1]:
            raise ValueError("empty x workspace")
        if not self.workspace_z[0] < self.workspace_z[1]:
            raise ValueError("empty z workspace")
        if self.substeps < 1:
            raise ValueError("substeps must be positive")


@dataclass
class PhysicsState:
    cup_pos: np.ndarray
    cup_vel: np.ndarray
    ball_pos: np.ndarray
    ball_vel: np.ndarray
    t: int = 0                        # control steps since reset

    def copy(self) -> "PhysicsState":
        return PhysicsState(self.cup_pos.copy(), self.cup_vel.copy(),
                            self.ball_pos.copy(), self.ball_vel.copy(),
                            self.t)

    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.cup_pos))
                    and np.all(np.isfinite(self.cup_vel))
                    and np.all(np.isfinite(self.ball_pos))
                    and np.all(np.isfinite(self.ball_vel)))


def physics_reset(rng: np.random.Generator, cfg: PhysicsConfig) -> PhysicsState:
    """Cup at its start pose, ball hanging at a slightly jittered angle."""
    cfg.validate()
    theta = float(rng.uniform(-cfg.start_angle_jitter, cfg.start_angle_jitter))
    cup = np.array(cfg.cup_start, dtype=np.float64)
    ball = cup + cfg.string_length * np.array([math.sin(theta),
                                               -math.cos(theta)])
    return PhysicsState(cup_pos=cup, cup_vel=np.zeros(2),
                        ball_pos=ball, ball_vel=np.zeros(2))


def physics_step(state: PhysicsState, command, cfg: PhysicsConfig,
                 substeps=None) -> PhysicsState:
    """Advance one control period under a velocity command (m/s)."""
    n = cfg.substeps if substeps is None else substeps
    dt = cfg.control_dt / n
    alpha = dt / (cfg.cup_tau + dt)
    half_g = 0.5 * cfg.gravity * dt
    ux, uz = float(command[0]), float(command[1])
    cx, cz = float(state.cup_pos[0]), float(state.cup_pos[1])
    cvx, cvz = float(state.cup_vel[0]), float(state.cup_vel[1])
    bx, bz = float(state.ball_pos[0]), float(state.ball_pos[1])
    bvx, bvz = float(state.ball_vel[0]), float(state.ball_vel[1])
    x_lo, x_hi = cfg.workspace_x
    z_lo, z_hi = cfg.workspace_z
    length = cfg.string_length

    for _ in range(n):
        # kinematic cup: lagged velocity tracking, workspace clamp
        cvx += alpha * (ux - cvx)
        cvz += alpha * (uz - cvz)
        cx += cvx * dt
        cz += cvz * dt
        if cx < x_lo:
            cx = x_lo
            cvx = max(cvx, 0.0)
        elif cx > x_hi:
            cx = x_hi
            cvx = min(cvx, 0.0)
        if cz < z_lo:
            cz = z_lo
            cvz = max(cvz, 0.0)
        elif cz > z_hi:
            cz = z_hi
            cvz = min(cvz, 0.0)

        # ball: kick-drift-kick under gravity
        bvz -= half_g
        bx += bvx * dt
        bz += bvz * dt
        bvz -= half_g

        # support contact against the cup base (unilateral, inelastic)
        rx = bx - cx
        rz = bz - cz
        if abs(rx) < cfg.cup_radius and 0.0 <= rz < cfg.ball_radius \
                and bvz - cvz < 0.0:
            bvz = cvz
            bz = cz + cfg.ball_radius
            rz = cfg.ball_radius

        # unilateral string: kill separating radial velocity, project back
        rx = bx - cx
        rz = bz - cz
        dist = math.hypot(rx, rz)
        if dist >= length and dist > 0.0:
            nx = rx / dist
            nz = rz / dist
            radial = (bvx - cvx) * nx + (bvz - cvz) * nz
            if radial > 0.0:
                bvx -= radial * nx
                bvz -= radial * nz
            if dist > length:
                bx = cx + nx * length
                bz = cz + nz * length

    return PhysicsState(cup_pos=np.array([cx, cz]),
                        cup_vel=np.array([cvx, cvz]),
                        ball_pos=np.array([bx, bz]),
                        ball_vel=np.array([bvx, bvz]),
                        t=state.t + 1)


def mechanical_energy(state: PhysicsState, cfg: PhysicsConfig) -> float:
    """Ball kinetic plus potential energy, unit mass."""
    v2 = float(state.ball_vel[0]) ** 2 + float(state.ball_vel[1]) ** 2
    return 0.5 * v2 + cfg.gravity * float(state.ball_pos[1])
