"""Desk-scale continuous-control tasks with adjustable time discretization.

Both tasks integrate their dynamics with semi-implicit Euler at
dt = base_dt / d, run episodes of base_steps * d steps, and scale the
per-step reward by 1/d, so the episodic return of a fixed controller is
comparable across discretizations.

step() is a pure function of (state, action, elapsed episode steps); the
environment object only carries constants, so instances can be shared.
"""

from __future__ import annotations

import math

import numpy as np

BASE_DT = 0.05
BASE_STEPS = 200


def _wrap_angle(theta: float) -> float:
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


class Pendulum:
    """Torque-limited pendulum swing-up.

    State is (cos th, sin th, omega) with th = 0 upright; the rod starts at
    a uniform angle with small angular velocity.  Reward is the negative
    quadratic cost in angle, speed, and torque; there is no terminal
    failure, episodes end only by time limit.
    """

    id = "pendulum"
    state_dim = 3
    action_dim = 1

    gravity = 10.0
    mass = 1.0
    length = 1.0
    max_speed = 8.0
    max_torque = 2.0

    def __init__(self, d: int = 1):
        if d < 1:
            raise ValueError("discretization factor d must be >= 1")
        self.d = d
        self.dt = BASE_DT / d
        self.episode_steps = BASE_STEPS * d
        self.reward_scale = 1.0 / d
        self.action_bound = np.array([self.max_torque])

    def reset(self, rng) -> np.ndarray:
        theta = rng.uniform(-np.pi, np.pi)
        omega = rng.uniform(-1.0, 1.0)
        return np.array([np.cos(theta), np.sin(theta), omega])

    def step(self, state, action, t: int):
        theta = math.atan2(state[1], state[0])
        omega = float(state[2])
        u = float(action[0])
        cost = _wrap_angle(theta) ** 2 + 0.1 * omega ** 2 + 0.001 * u ** 2
        g, m, ln = self.gravity, self.mass, self.length
        omega = omega + self.dt * (1.5 * g / ln * math.sin(theta)
                                   + 3.0 / (m * ln * ln) * u)
        omega = min(max(omega, -self.max_speed), self.max_speed)
        theta = theta + self.dt * omega
        if not (math.isfinite(theta) and math.isfinite(omega)):
            raise FloatingPointError("pendulum state became non-finite")
        next_state = np.array([math.cos(theta), math.sin(theta), omega])
        return next_state, -cost * self.reward_scale, False, t + 1 >= self.episode_steps

    def energy(self, state) -> float:
        """Rod energy; conserved (up to integrator error) when unactuated."""
        theta = np.arctan2(state[1], state[0])
        omega = float(state[2])
        m, ln, g = self.mass, self.length, self.gravity
        return (m * ln * ln / 6.0) * omega ** 2 + (m * g * ln / 2.0) * np.cos(theta)


class PointMass:
    """Two-dimensional point mass pushed toward a fixed goal at the origin.

    State is (px, py, vx, vy); the mass starts at a uniform position with
    zero velocity and the episode terminates once within goal_tolerance of
    the goal.
    """

    id = "point_mass"
    state_dim = 4
    action_dim = 2

    drag = 0.5
    max_force = 1.0
    goal_tolerance = 0.05
    start_range = 1.0

    def __init__(self, d: int = 1):
        if d < 1:
            raise ValueError("discretization factor d must be >= 1")
        self.d = d
        self.dt = BASE_DT / d
        self.episode_steps = BASE_STEPS * d
        self.reward_scale = 1.0 / d
        self.action_bound = np.array([self.max_force, self.max_force])

    def reset(self, rng) -> np.ndarray:
        pos = rng.uniform(-self.start_range, self.start_range, 2)
        return np.concatenate([pos, np.zeros(2)])

    def step(self, state, action, t: int):
        px, py, vx, vy = (float(v) for v in state)
        ax, ay = float(action[0]), float(action[1])
        cost = (px * px + py * py + 0.01 * (vx * vx + vy * vy)
                + 0.001 * (ax * ax + ay * ay))
        vx += self.dt * (ax - self.drag * vx)
        vy += self.dt * (ay - self.drag * vy)
        px += self.dt * vx
        py += self.dt * vy
        if not all(map(math.isfinite, (px, py, vx, vy))):
            raise FloatingPointError("point_mass state became non-finite")
        terminal = px * px + py * py <= self.goal_tolerance ** 2
        truncated = not terminal and t + 1 >= self.episode_steps
        return (np.array([px, py, vx, vy]), -cost * self.reward_scale,
                terminal, truncated)


ENV_IDS = (Pendulum.id, PointMass.id)


def make_env(env_id: str, d: int = 1):
    if env_id == Pendulum.id:
        return Pendulum(d)
    if env_id == PointMass.id:
        return PointMass(d)
    raise ValueError(f"unknown environment {env_id!r}; known: {', '.join(ENV_IDS)}")
