"""Nominal equilibrium trajectory generation.

A zero-force trajectory (ZFT) is the commanded equilibrium motion of the
end-effector: the pose sequence at which the interaction wrench vanishes in
free space.  It is produced by chaining waypoints with a quintic
minimum-jerk time profile for translation and SLERP for orientation, with
optional dwell at each waypoint.  Segment durations are snapped to the
sample grid so every waypoint pose lands exactly on a sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, OutOfDomain
from .geom import Pose, slerp

DEFAULT_DT = 0.005  # controller period, seconds


@dataclass
class Waypoint:
    pose: Pose
    dwell: float = 0.0  # seconds to hold the pose before departing

    def __post_init__(self):
        if not np.isfinite(self.dwell) or self.dwell < 0.0:
            raise ConfigError("waypoint dwell must be finite and >= 0")


@dataclass
class Trajectory:
    """Uniformly sampled pose sequence; C0-continuous by construction."""

    dt: float
    positions: np.ndarray  # (M, 3)
    quats: np.ndarray  # (M, 4), unit, serialization order (w, x, y, z)
    waypoint_indices: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt

    def pose(self, i: int) -> Pose:
        return Pose(self.positions[i], self.quats[i])


def min_jerk_scalar(tau):
    """Quintic minimum-jerk profile s(tau) = 10 t^3 - 15 t^4 + 6 t^5.

    Zero velocity and acceleration at both ends; s(0)=0, s(1)=1.
    Accepts scalars or arrays; raises OutOfDomain outside [0, 1].
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0.0) or np.any(tau > 1.0):
        raise OutOfDomain("normalized time outside [0, 1]")
    t3 = tau * tau * tau
    return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)


def generate_zft(
    waypoints: list[Waypoint],
    segment_durations: list[float],
    dt: float = DEFAULT_DT,
) -> Trajectory:
    """Chain waypoints into a sampled equilibrium trajectory.

    Each motion segment interpolates position with the minimum-jerk profile
    and orientation with SLERP driven by the same profile, so translation
    and rotation arrive together.  Dwell entries hold the waypoint pose for
    ``round(dwell/dt)`` samples before the segment departs.

    Raises:
        ConfigError: fewer than 2 waypoints, mismatched list lengths, or
            nonpositive durations/dt.
    """
    if len(waypoints) < 2:
        raise ConfigError("need at least 2 waypoints")
    if len(segment_durations) != len(waypoints) - 1:
        raise ConfigError(
            f"expected {len(waypoints) - 1} segment durations, "
            f"got {len(segment_durations)}"
        )
    if dt <= 0.0:
        raise ConfigError("dt must be > 0")
    if any(d <= 0.0 for d in segment_durations):
        raise ConfigError("segment durations must be > 0")

    positions = [waypoints[0].pose.p.copy()]
    quats = [waypoints[0].pose.q.copy()]
    waypoint_indices = [0]

    def _hold(pose: Pose, n: int):
        for _ in range(n):
            positions.append(pose.p.copy())
            quats.append(pose.q.copy())

    _hold(waypoints[0].pose, int(round(waypoints[0].dwell / dt)))

    for i, duration in enumerate(segment_durations):
        a, b = waypoints[i].pose, waypoints[i + 1].pose
        n = max(1, int(round(duration / dt)))
        s = min_jerk_scalar(np.arange(1, n + 1) / n)
        seg_p = a.p[None, :] + s[:, None] * (b.p - a.p)[None, :]
        seg_q = slerp(a.q[None, :], b.q[None, :], s)
        positions.extend(seg_p)
        quats.extend(seg_q)
        waypoint_indices.append(len(positions) - 1)
        _hold(b, int(round(waypoints[i + 1].dwell / dt)))

    return Trajectory(
        dt=dt,
        positions=np.asarray(positions, dtype=float),
        quats=np.asarray(quats, dtype=float),
        waypoint_indices=waypoint_indices,
    )
