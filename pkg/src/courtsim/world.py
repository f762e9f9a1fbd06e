"""Court geometry, world constants, and the simulation clock.

World frame convention used everywhere in this package: x runs along the
court length with the origin at the center of the robot-side baseline, y runs
across the court (positive to the left when looking down +x), z is up. The
net plane sits at x = length / 2. Balls are launched from the far side and
approach the robot moving in -x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

GRAVITY = 9.81
AIR_DENSITY = 1.204

BALL_MASS = 0.0577
BALL_RADIUS = 0.0335
BALL_DRAG_COEFF = 0.55
BALL_RESTITUTION = 0.73
BALL_HORIZONTAL_RETENTION = 0.80

PHYSICS_DT = 1.0e-3


class CourtMode(Enum):
    COURT = "court"
    LAB = "lab"


@dataclass(frozen=True)
class CourtGeometry:
    """Playing surface dimensions. All lengths in meters."""

    length: float
    width_singles: float
    width_doubles: float
    net_height: float
    mode: CourtMode

    @property
    def net_x(self) -> float:
        return self.length / 2.0


def standard_court() -> CourtGeometry:
    """Regulation court: 23.77 m x 10.97 m doubles, 8.23 m singles, 1.07 m net."""
    return CourtGeometry(
        length=23.77,
        width_singles=8.23,
        width_doubles=10.97,
        net_height=1.07,
        mode=CourtMode.COURT,
    )


def lab_court() -> CourtGeometry:
    """Indoor test space, 11 m x 4.57 m. No net; net_height kept as the bar a
    successful return must clear over the launch plane."""
    return CourtGeometry(
        length=11.0,
        width_singles=4.57,
        width_doubles=4.57,
        net_height=1.07,
        mode=CourtMode.LAB,
    )


def in_court_bounds(p, court: CourtGeometry) -> bool:
    """True if the horizontal position lies on the full playing surface."""
    x, y = float(p[0]), float(p[1])
    return 0.0 <= x <= court.length and abs(y) <= court.width_doubles / 2.0


def in_singles_bounds(p, court: CourtGeometry) -> bool:
    """True if the horizontal position lies inside the singles lines."""
    if court.mode is CourtMode.LAB:
        raise ValueError("singles bounds are undefined for the lab space")
    x, y = float(p[0]), float(p[1])
    return 0.0 <= x <= court.length and abs(y) <= court.width_singles / 2.0


@dataclass(frozen=True)
class BallConfig:
    """Ball inertia and aerodynamic/bounce parameters."""

    mass: float = BALL_MASS
    radius: float = BALL_RADIUS
    drag_coeff: float = BALL_DRAG_COEFF
    restitution: float = BALL_RESTITUTION
    horizontal_retention: float = BALL_HORIZONTAL_RETENTION

    @property
    def cross_section(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True)
class WorldConfig:
    """Physical constants shared by the simulator and the tracker's model."""

    gravity: float = GRAVITY
    air_density: float = AIR_DENSITY
    ball: BallConfig = field(default_factory=BallConfig)
    physics_dt: float = PHYSICS_DT

    @property
    def drag_factor(self) -> float:
        """rho * Cd * A / (2 m), the quadratic drag constant in 1/m."""
        b = self.ball
        return self.air_density * b.drag_coeff * b.cross_section / (2.0 * b.mass)


@dataclass(frozen=True, eq=False)
class BallState:
    """Ball position/velocity snapshot at time t."""

    p: np.ndarray
    v: np.ndarray
    t: float = 0.0
    bounce_count: int = 0

    @staticmethod
    def make(p, v, t: float = 0.0, bounce_count: int = 0) -> "BallState":
        return BallState(
            p=np.asarray(p, dtype=float).copy(),
            v=np.asarray(v, dtype=float).copy(),
            t=float(t),
            bounce_count=int(bounce_count),
        )


@dataclass(frozen=True)
class WheelchairState:
    """Planar pose and twist of the wheelchair base."""

    x: float
    y: float
    heading: float
    v_lin: float = 0.0
    omega: float = 0.0
    t: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


class SimClock:
    """Fixed-step simulation clock.

    Time is held as an integer count of nanoseconds so that advancing by n
    steps increases `now_ns` by exactly n * physics_dt_ns with no float drift;
    all the harness rates (1 kHz physics, 100 Hz tracker, 25 Hz rigs) divide
    evenly into it. `now` converts to float seconds on demand.
    """

    def __init__(self, physics_dt: float = PHYSICS_DT):
        dt_ns = round(physics_dt * 1e9)
        if dt_ns <= 0:
            raise ValueError("physics_dt must be positive")
        self.physics_dt = physics_dt
        self.dt_ns = dt_ns
        self.now_ns = 0

    @property
    def now(self) -> float:
        return self.now_ns / 1e9

    def advance(self, n: int = 1) -> float:
        if n < 0:
            raise ValueError("clock cannot run backwards")
        self.now_ns += n * self.dt_ns
        return self.now
