"""One-step goal-conditioned return task.

The agent sees the incoming ball at the hitting plane, picks a racket
orientation and forward speed, and is scored on where the return lands
relative to a target point, minus a penalty on how high the ball flies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .physics import (
    BallState,
    EventKind,
    NoContactError,
    PhysicsParams,
    RacketPose,
    TableGeometry,
    racket_bounce,
    simulate_until_event,
    table_bounce,
)

ACTION_LOW = np.array([-20.0, -30.0, 0.0])
ACTION_HIGH = np.array([20.0, 30.0, 2.0])
ACTION_CENTER = 0.5 * (ACTION_LOW + ACTION_HIGH)
ACTION_HALF = 0.5 * (ACTION_HIGH - ACTION_LOW)

MAX_SERVE_TRIES = 100


class ServeInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class Action:
    """Racket pitch and yaw in degrees plus forward racket speed in m/s.

    Values outside the action box are clamped on construction.
    """

    alpha_deg: float
    beta_deg: float
    racket_vx: float

    def __post_init__(self):
        vals = np.clip(np.array([self.alpha_deg, self.beta_deg, self.racket_vx], float),
                       ACTION_LOW, ACTION_HIGH)
        object.__setattr__(self, "alpha_deg", float(vals[0]))
        object.__setattr__(self, "beta_deg", float(vals[1]))
        object.__setattr__(self, "racket_vx", float(vals[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha_deg, self.beta_deg, self.racket_vx])

    def normalized(self) -> np.ndarray:
        return (self.as_array() - ACTION_CENTER) / ACTION_HALF

    @classmethod
    def from_array(cls, a) -> "Action":
        return cls(*(float(v) for v in a))

    @classmethod
    def from_normalized(cls, u) -> "Action":
        return cls.from_array(ACTION_CENTER + ACTION_HALF * np.asarray(u, float))


@dataclass(frozen=True)
class Goal:
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class RewardParams:
    achieved_x: float
    achieved_y: float
    height: float

    def as_array(self) -> np.ndarray:
        return np.array([self.achieved_x, self.achieved_y, self.height])


@dataclass(frozen=True)
class ServeBounds:
    """Uniform launch-state intervals on the human side."""

    position_low: tuple = (2.5, -0.2, 0.25)
    position_high: tuple = (2.7, 0.2, 0.35)
    velocity_low: tuple = (-5.5, -0.5, 1.0)
    velocity_high: tuple = (-4.0, 0.5, 2.5)
    spin_low: tuple = (0.0, -30.0, 0.0)
    spin_high: tuple = (0.0, 30.0, 0.0)

    def low(self) -> np.ndarray:
        return np.array(self.position_low + self.velocity_low + self.spin_low, float)

    def high(self) -> np.ndarray:
        return np.array(self.position_high + self.velocity_high + self.spin_high, float)

    def center(self) -> "ServeBounds":
        c = tuple(0.5 * (self.low() + self.high()))
        return ServeBounds(c[0:3], c[0:3], c[3:6], c[3:6], c[6:9], c[6:9])


# Box containing every hitting-plane state the default serves produce, with
# margin. Used to scale network inputs to roughly [-1, 1].
STATE_LOW = (0.2, -0.6, 0.0, -6.0, -1.5, -1.0, -1.0, -40.0, -1.0)
STATE_HIGH = (0.4, 0.6, 0.6, -2.5, 1.5, 3.5, 1.0, 40.0, 1.0)


@dataclass(frozen=True)
class EnvConfig:
    serve: ServeBounds = field(default_factory=ServeBounds)
    hit_plane_x: float = 0.3
    height_weight: float = 0.07
    goals: tuple = ((2.0, 0.0),)
    obs_noise_std: tuple = (0.0,) * 9
    action_noise_std: tuple = (0.0,) * 3
    state_low: tuple = STATE_LOW
    state_high: tuple = STATE_HIGH
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    geometry: TableGeometry = field(default_factory=TableGeometry)
    dt: float = 1e-3
    max_flight_time: float = 3.0

    def __post_init__(self):
        if min(self.obs_noise_std) < 0 or min(self.action_noise_std) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.height_weight < 0:
            raise ValueError("height_weight must be non-negative")
        if len(self.goals) == 0:
            raise ValueError("at least one goal is required")

    def goal(self, episode: int) -> Goal:
        """Goals alternate by episode when more than one is configured."""
        return Goal(*self.goals[episode % len(self.goals)])

    def normalize_state(self, vec) -> np.ndarray:
        lo, hi = np.asarray(self.state_low), np.asarray(self.state_high)
        return 2.0 * (np.asarray(vec, float) - lo) / (hi - lo) - 1.0

    def normalize_goal(self, goal: Goal) -> np.ndarray:
        g = self.geometry
        return np.array([2.0 * goal.x / g.length - 1.0, 2.0 * goal.y / g.width])


@dataclass(eq=False)
class Outcome:
    reward_params: RewardParams
    reward: float
    terminal_event: EventKind
    executed_action: Action
    goal_error: float  # planar distance to the goal, metres
    event: object = None  # the physics TrajectoryEvent, with the sampled path


# ---------------------------------------------------------------------------


def sample_serve(rng: np.random.Generator, config: EnvConfig) -> BallState:
    """Draw a serve and fly it to the hitting plane.

    A serve counts when it bounces once on the robot's half (and at most once
    on the human's) before crossing the hitting plane. Anything else is
    redrawn, up to 100 times.
    """
    lo, hi = config.serve.low(), config.serve.high()
    if np.any(hi < lo):
        raise ValueError("serve bounds are empty")
    geo = replace(config.geometry, hit_plane_x=config.hit_plane_x)
    for _ in range(MAX_SERVE_TRIES):
        ball = BallState.from_vector(rng.uniform(lo, hi))
        robot_side = human_side = 0
        for _ in range(3):
            ev = simulate_until_event(ball, geo, config.physics, config.dt, config.max_flight_time)
            if ev.kind is EventKind.TABLE_BOUNCE:
                if ev.state_at_event.position[0] < geo.net_x:
                    robot_side += 1
                else:
                    human_side += 1
                ball = table_bounce(ev.state_at_event)
                continue
            if ev.kind is EventKind.HIT_PLANE and robot_side == 1 and human_side <= 1:
                s = ev.state_at_event
                return BallState(s.position, s.velocity, s.spin, 0.0)
            break
    raise ServeInfeasible(f"no valid serve in {MAX_SERVE_TRIES} draws")


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def roll_deg(ball: BallState) -> float:
    """Roll that compensates sideways ball speed: -0.1 deg per m/s."""
    return -0.1 * float(ball.velocity[1])


def racket_pose_from_action(action: Action, ball: BallState) -> RacketPose:
    """Racket at the ball, facing the human end.

    The base normal (1, 0, 0) is pitched up by alpha, yawed by beta about the
    table z axis, then rolled about the table x axis. Roll is about the table
    axis rather than the racket's own x axis, since the latter coincides with
    the base normal and would leave it unchanged.
    """
    a = math.radians(action.alpha_deg)
    b = math.radians(action.beta_deg)
    g = math.radians(roll_deg(ball))
    normal = _rot_x(g) @ _rot_z(b) @ _rot_y(-a) @ np.array([1.0, 0.0, 0.0])
    return RacketPose(normal / np.linalg.norm(normal), [action.racket_vx, 0.0, 0.0], ball.position)


def reward_from_params(params: RewardParams, goal: Goal, height_weight: float = 0.07) -> float:
    err = math.hypot(goal.x - params.achieved_x, goal.y - params.achieved_y)
    return -err - height_weight * params.height


def observe(ball: BallState, config: EnvConfig, rng: np.random.Generator | None = None) -> BallState:
    """What the agent sees: the true state plus per-dimension Gaussian noise."""
    std = np.asarray(config.obs_noise_std, float)
    if not np.any(std > 0):
        return ball.copy()
    vec = ball.as_vector() + rng.normal(0.0, 1.0, 9) * std
    return BallState.from_vector(vec, ball.time)


def _plane_crossing(path: np.ndarray):
    """(x, y) where the sampled path last went down through z = 0, or None."""
    z = path[:, 3]
    idx = np.nonzero((z[:-1] > 0.0) & (z[1:] <= 0.0))[0]
    if len(idx) == 0:
        return None
    i = idx[-1]
    f = z[i] / (z[i] - z[i + 1])
    p = path[i, 1:3] + f * (path[i + 1, 1:3] - path[i, 1:3])
    return float(p[0]), float(p[1])


def _height_at_x(path: np.ndarray, x_mid: float) -> float:
    x, z = path[:, 1], path[:, 3]
    d = x - x_mid
    idx = np.nonzero(d[:-1] * d[1:] <= 0.0)[0]
    if len(idx) == 0:
        return float(z[-1])
    i = idx[0]
    if d[i] == d[i + 1]:
        return float(z[i])
    f = d[i] / (d[i] - d[i + 1])
    return float(z[i] + f * (z[i + 1] - z[i]))


def step(ball_at_hit: BallState, action: Action, goal: Goal, config: EnvConfig,
         rng: np.random.Generator | None = None) -> Outcome:
    """Execute one return and score it."""
    if abs(ball_at_hit.position[0] - config.hit_plane_x) > 1e-5:
        raise ValueError("ball is not at the hitting plane")
    std = np.asarray(config.action_noise_std, float)
    if np.any(std > 0):
        action = Action.from_array(action.as_array() + rng.normal(0.0, 1.0, 3) * std)

    pose = racket_pose_from_action(action, ball_at_hit)
    try:
        v_out = racket_bounce(ball_at_hit.velocity, pose)
    except NoContactError:
        v_out = ball_at_hit.velocity  # racket misses, ball flies on
    start = BallState(ball_at_hit.position, v_out, ball_at_hit.spin, ball_at_hit.time)
    geo = replace(config.geometry, hit_plane_x=None)
    ev = simulate_until_event(start, geo, config.physics, config.dt, config.max_flight_time, record=True)
    path = ev.samples

    hit_xy = (float(start.position[0]), float(start.position[1]))
    end = ev.state_at_event.position
    if v_out[0] <= 0.0:
        achieved = hit_xy
    elif ev.kind in (EventKind.TABLE_BOUNCE, EventKind.NET_CONTACT):
        achieved = (float(end[0]), float(end[1]))
    else:
        achieved = _plane_crossing(path) or hit_xy

    height = max(0.0, _height_at_x(path, 0.5 * (hit_xy[0] + achieved[0])))
    rp = RewardParams(achieved[0], achieved[1], height)
    return Outcome(
        reward_params=rp,
        reward=reward_from_params(rp, goal, config.height_weight),
        terminal_event=ev.kind,
        executed_action=action,
        goal_error=math.hypot(goal.x - achieved[0], goal.y - achieved[1]),
        event=ev,
    )


# ---------------------------------------------------------------------------
# scenario presets


def _serve():
    return EnvConfig()


def _i_play():
    return EnvConfig(
        serve=ServeBounds(velocity_low=(-5.8, -0.6, 1.0), velocity_high=(-3.8, 0.6, 2.6),
                          spin_low=(0.0, -40.0, 0.0), spin_high=(0.0, 35.0, 0.0)),
        goals=((2.4, 0.0),),
    )


def _v_play():
    return EnvConfig(
        serve=ServeBounds(position_low=(2.5, -0.5, 0.25), position_high=(2.7, 0.5, 0.35),
                          velocity_low=(-5.5, -0.9, 1.0), velocity_high=(-4.0, 0.9, 2.5)),
        goals=((2.4, 0.0),),
    )


def _x_play():
    return EnvConfig(
        serve=ServeBounds(position_low=(2.5, -0.5, 0.25), position_high=(2.7, 0.5, 0.35),
                          velocity_low=(-5.5, -0.9, 1.0), velocity_high=(-4.0, 0.9, 2.5)),
        goals=((2.2, -0.3), (2.2, 0.3)),
    )


def _ballmachine_fixed():
    return EnvConfig(serve=ServeBounds().center(), goals=((2.4, 0.0),))


def _ballmachine_oscillating():
    c = ServeBounds().center()
    return EnvConfig(
        serve=replace(c, position_low=(2.6, -0.4, 0.3), position_high=(2.6, 0.4, 0.3),
                      velocity_low=(-4.75, -0.7, 1.75), velocity_high=(-4.75, 0.7, 1.75)),
        goals=((2.4, 0.0),),
    )


SCENARIOS = {
    "serve": _serve,
    "i-play": _i_play,
    "v-play": _v_play,
    "x-play": _x_play,
    "ballmachine-fixed": _ballmachine_fixed,
    "ballmachine-oscillating": _ballmachine_oscillating,
}


def scenario(name: str) -> EnvConfig:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
