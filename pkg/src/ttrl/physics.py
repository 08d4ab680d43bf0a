"""Ball flight with drag, Magnus lift and gravity, plus the bounce models.

Everything works in the table frame: x runs from the robot's table end (0) to
the human's end (2.74 m), y across the table, z up with the playing surface
at z = 0. Units are SI throughout.

The integrator works on tuples of floats rather than 3-vectors and is
compiled with numba when that is installed; training runs spend most of
their physics time in it.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BallState",
    "PhysicsParams",
    "TableGeometry",
    "RacketPose",
    "EventKind",
    "TrajectoryEvent",
    "IntegrationDiverged",
    "NoContactError",
    "ball_acceleration",
    "rk4_step",
    "table_bounce",
    "racket_bounce",
    "simulate_until_event",
]

EVENT_TOL = 1e-6  # metres, plane-crossing refinement


class IntegrationDiverged(RuntimeError):
    pass


class NoContactError(ValueError):
    """Raised when the ball is not moving into the surface it should bounce on."""


def _vec(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a.copy()


@dataclass(eq=False)
class BallState:
    position: np.ndarray
    velocity: np.ndarray
    spin: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.position = _vec(self.position)
        self.velocity = _vec(self.velocity)
        self.spin = _vec(self.spin)
        self.time = float(self.time)
        if not (np.all(np.isfinite(self.as_vector())) and math.isfinite(self.time)):
            raise ValueError("ball state must be finite")

    def as_vector(self) -> np.ndarray:
        """9-vector (position, velocity, spin); time is dropped."""
        return np.concatenate([self.position, self.velocity, self.spin])

    @classmethod
    def from_vector(cls, vec, time: float = 0.0) -> "BallState":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[0:3], vec[3:6], vec[6:9], time)

    def copy(self) -> "BallState":
        return BallState(self.position, self.velocity, self.spin, self.time)

    def __repr__(self):
        p, v, w = (np.array2string(a, precision=4) for a in (self.position, self.velocity, self.spin))
        return f"BallState(p={p}, v={v}, w={w}, t={self.time:.4f})"


@dataclass(frozen=True)
class PhysicsParams:
    k_drag: float = 0.1404  # 1/m
    k_magnus: float = 0.0041  # s, spin in rad/s
    gravity: float = 9.81

    def __post_init__(self):
        if self.k_drag < 0 or self.k_magnus < 0:
            raise ValueError("drag and Magnus coefficients must be non-negative")
        if not self.gravity > 0:
            raise ValueError("gravity must be positive")


@dataclass(frozen=True)
class TableGeometry:
    length: float = 2.74
    width: float = 1.525
    net_x: float = 1.37
    net_height: float = 0.1525
    net_half_width: float = 0.915  # net posts stand 15.25 cm outside the table
    floor_z: float = -0.76
    hit_plane_x: float | None = None  # incoming-ball plane; None disables the event

    def on_table(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.length and abs(y) <= 0.5 * self.width


@dataclass(eq=False)
class RacketPose:
    normal: np.ndarray
    velocity: np.ndarray
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.normal = _vec(self.normal)
        self.velocity = _vec(self.velocity)
        self.position = _vec(self.position)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise ValueError("racket normal must be a unit vector")


class EventKind(enum.Enum):
    TABLE_BOUNCE = "table_bounce"
    NET_CONTACT = "net_contact"
    HIT_PLANE = "hit_plane_crossing"
    FLOOR = "floor_contact"
    TIMEOUT = "timeout"


@dataclass(eq=False)
class TrajectoryEvent:
    kind: EventKind
    state_at_event: BallState
    # (n, 4) rows of (t, x, y, z) from the start state to the event, when recorded
    samples: np.ndarray | None = None


# ---------------------------------------------------------------------------
# scalar kernels, compiled with numba when it is available

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

_NONE, _TABLE, _NET, _HIT, _FLOOR, _TIMEOUT = 0, 1, 2, 3, 4, 5
_KINDS = {
    _TABLE: EventKind.TABLE_BOUNCE,
    _NET: EventKind.NET_CONTACT,
    _HIT: EventKind.HIT_PLANE,
    _FLOOR: EventKind.FLOOR,
    _TIMEOUT: EventKind.TIMEOUT,
}


@njit(cache=True)
def _accel(vx, vy, vz, wx, wy, wz, kd, km, g):
    s = math.sqrt(vx * vx + vy * vy + vz * vz)
    return (
        -kd * s * vx + km * (wy * vz - wz * vy),
        -kd * s * vy + km * (wz * vx - wx * vz),
        -kd * s * vz + km * (wx * vy - wy * vx) - g,
    )


@njit(cache=True)
def _rk4(s, wx, wy, wz, h, kd, km, g):
    px, py, pz, vx, vy, vz = s
    h2 = 0.5 * h
    a1x, a1y, a1z = _accel(vx, vy, vz, wx, wy, wz, kd, km, g)
    v2x, v2y, v2z = vx + h2 * a1x, vy + h2 * a1y, vz + h2 * a1z
    a2x, a2y, a2z = _accel(v2x, v2y, v2z, wx, wy, wz, kd, km, g)
    v3x, v3y, v3z = vx + h2 * a2x, vy + h2 * a2y, vz + h2 * a2z
    a3x, a3y, a3z = _accel(v3x, v3y, v3z, wx, wy, wz, kd, km, g)
    v4x, v4y, v4z = vx + h * a3x, vy + h * a3y, vz + h * a3z
    a4x, a4y, a4z = _accel(v4x, v4y, v4z, wx, wy, wz, kd, km, g)
    h6 = h / 6.0
    return (
        px + h6 * (vx + 2.0 * v2x + 2.0 * v3x + v4x),
        py + h6 * (vy + 2.0 * v2y + 2.0 * v3y + v4y),
        pz + h6 * (vz + 2.0 * v2z + 2.0 * v3z + v4z),
        vx + h6 * (a1x + 2.0 * a2x + 2.0 * a3x + a4x),
        vy + h6 * (a1y + 2.0 * a2y + 2.0 * a3y + a4y),
        vz + h6 * (a1z + 2.0 * a2z + 2.0 * a3z + a4z),
    )


@njit(cache=True)
def _refine(s, h, axis, plane, wx, wy, wz, kd, km, g):
    # bisect the sub-step length so coordinate `axis` lands on `plane`
    lo, hi = 0.0, h
    f_lo = s[axis] - plane
    nxt = _rk4(s, wx, wy, wz, hi, kd, km, g)
    for _ in range(80):
        if abs(nxt[axis] - plane) <= 0.1 * EVENT_TOL:
            break
        mid = 0.5 * (lo + hi)
        m = _rk4(s, wx, wy, wz, mid, kd, km, g)
        if (m[axis] - plane) * f_lo > 0.0:
            lo, f_lo = mid, m[axis] - plane
        else:
            hi, nxt = mid, m
    return hi, nxt


@njit(cache=True)
def _fly(s, wx, wy, wz, kd, km, g, length, half_width, net_x, net_h, net_hw,
         floor_z, hit_x, dt, max_time, record):
    """Integrate until the first event. hit_x is NaN when the plane is disabled.

    Returns (event code, elapsed time, 6-state, sample rows, sample count).
    """
    n_max = int(max_time / dt) + 3 if record else 1
    path = np.empty((n_max, 4))
    n = 0
    if record:
        path[0, 0], path[0, 1], path[0, 2], path[0, 3] = 0.0, s[0], s[1], s[2]
        n = 1
    t = 0.0
    cur = s
    while True:
        h = dt
        timeout = False
        if t + h >= max_time:
            h = max_time - t
            timeout = True
        nxt = _rk4(cur, wx, wy, wz, h, kd, km, g)
        if not (math.isfinite(nxt[0]) and math.isfinite(nxt[1]) and math.isfinite(nxt[2])
                and math.isfinite(nxt[3]) and math.isfinite(nxt[4]) and math.isfinite(nxt[5])):
            return -1, t + h, nxt, path, n

        code = _NONE
        best_tau = 2.0 * h
        best = nxt
        if (cur[0] - net_x) * (nxt[0] - net_x) < 0.0 or (nxt[0] == net_x and cur[0] != net_x):
            tau, e = _refine(cur, h, 0, net_x, wx, wy, wz, kd, km, g)
            if 0.0 < e[2] < net_h and abs(e[1]) <= net_hw and tau < best_tau:
                code, best_tau, best = _NET, tau, e
        if cur[2] > 0.0 >= nxt[2]:
            tau, e = _refine(cur, h, 2, 0.0, wx, wy, wz, kd, km, g)
            if 0.0 <= e[0] <= length and abs(e[1]) <= half_width and tau < best_tau:
                code, best_tau, best = _TABLE, tau, e
        if cur[0] > hit_x >= nxt[0]:  # always False for NaN
            tau, e = _refine(cur, h, 0, hit_x, wx, wy, wz, kd, km, g)
            if tau < best_tau:
                code, best_tau, best = _HIT, tau, e
        if nxt[2] <= floor_z < cur[2]:
            tau, e = _refine(cur, h, 2, floor_z, wx, wy, wz, kd, km, g)
            if tau < best_tau:
                code, best_tau, best = _FLOOR, tau, e

        if code != _NONE:
            t += best_tau
            cur = best
        else:
            t += h
            cur = nxt
        if record:
            path[n, 0], path[n, 1], path[n, 2], path[n, 3] = t, cur[0], cur[1], cur[2]
            n += 1
        if code != _NONE:
            return code, t, cur, path, n
        if timeout:
            return _TIMEOUT, t, cur, path, n


# ---------------------------------------------------------------------------
# public operations


def ball_acceleration(velocity, spin, params: PhysicsParams = PhysicsParams()) -> np.ndarray:
    """Right-hand side of the flight ODE: -k_D |v| v + k_M (w x v) - (0, 0, g)."""
    vx, vy, vz = (float(c) for c in velocity)
    wx, wy, wz = (float(c) for c in spin)
    return np.array(_accel(vx, vy, vz, wx, wy, wz, params.k_drag, params.k_magnus, params.gravity))


def rk4_step(state: BallState, dt: float, params: PhysicsParams = PhysicsParams()) -> BallState:
    """One classical Runge-Kutta step. Spin is carried through unchanged."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return state.copy()
    p, v, w = state.position, state.velocity, state.spin
    out = _rk4((*p.tolist(), *v.tolist()), *w.tolist(), float(dt),
               params.k_drag, params.k_magnus, params.gravity)
    return BallState(out[0:3], out[3:6], w, state.time + dt)


def table_bounce(state: BallState, surface_tol: float = 1e-5) -> BallState:
    """Elastic bounce off the table: v_z flips sign, everything else passes through."""
    if not state.velocity[2] < 0:
        raise NoContactError("ball is not moving down onto the table")
    if abs(state.position[2]) > surface_tol:
        raise NoContactError(f"ball is not at the table surface (z={state.position[2]:.3g})")
    v = state.velocity.copy()
    v[2] = -v[2]
    return BallState(state.position, v, state.spin, state.time)


def racket_bounce(ball_velocity, racket: RacketPose) -> np.ndarray:
    """Elastic bounce off an infinitely heavy racket.

    The velocity component along the racket normal becomes
    ``2 (v_r . n) - (v_b . n)``; tangential components are untouched.
    """
    vb = _vec(ball_velocity)
    n = racket.normal
    vb_n = float(vb @ n)
    vr_n = float(racket.velocity @ n)
    if not vb_n - vr_n < 0:
        raise NoContactError("ball is not approaching the racket face")
    return vb + (2.0 * vr_n - 2.0 * vb_n) * n


def simulate_until_event(
    state: BallState,
    geometry: TableGeometry = TableGeometry(),
    params: PhysicsParams = PhysicsParams(),
    dt: float = 1e-3,
    max_time: float = 3.0,
    record: bool = False,
) -> TrajectoryEvent:
    """Integrate a free flight until the first geometric event.

    Events, checked on every step and resolved to the earliest one inside the
    step: landing on the table surface, crossing the net plane below the net
    top, crossing ``geometry.hit_plane_x`` while moving towards the robot,
    reaching the floor, or running past ``max_time``. Event states are refined
    by bisection on the step length until the crossed coordinate is within
    1e-6 m of its plane.

    With ``record=True`` the returned event carries the sampled path as rows
    of ``(t, x, y, z)``, ending with the event state.
    """
    if not dt > 0 or not max_time > 0:
        raise ValueError("dt and max_time must be positive")
    g = geometry
    hit_x = math.nan if g.hit_plane_x is None else float(g.hit_plane_x)
    s = (*state.position.tolist(), *state.velocity.tolist())
    code, t, end, path, n = _fly(
        s, *state.spin.tolist(), params.k_drag, params.k_magnus, params.gravity,
        g.length, 0.5 * g.width, g.net_x, g.net_height, g.net_half_width, g.floor_z,
        hit_x, float(dt), float(max_time), bool(record),
    )
    if code < 0:
        raise IntegrationDiverged(f"non-finite ball state at t={state.time + t:.4f}s")
    samples = None
    if record:
        samples = path[:n].copy()
        samples[:, 0] += state.time
    ball = BallState(end[0:3], end[3:6], state.spin, state.time + t)
    return TrajectoryEvent(_KINDS[code], ball, samples)
