"""Quaternion and pose primitives.

Conventions used everywhere in this package:

* Quaternions are scalar-first ``[w, x, y, z]`` unit quaternions (Hamilton
  product).  Serialization order is ``(w, x, y, z)`` in every file format.
* Canonical form resolves the double cover: ``w >= 0``, and when ``w == 0``
  the first nonzero of ``(x, y, z)`` is positive.
* Rotation vectors are axis-angle products ``u * theta`` with
  ``theta in [0, pi]``.
* A pose is a position (meters) plus a unit quaternion.

All functions are pure and broadcast over leading array dimensions: a
quaternion argument has shape ``(..., 4)``, a rotation vector ``(..., 3)``.
Rotation matrices are deliberately absent; test oracles build their own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateQuaternion, OutOfDomain

_NORM_EPS = 1e-12
_SLERP_NLERP_OMEGA = 1e-6  # below this geodesic angle, fall back to nlerp


@dataclass
class Pose:
    """Position (m) and orientation as a canonical unit quaternion."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.q = quat_canonical(np.asarray(self.q, dtype=float).reshape(4))

    def copy(self) -> "Pose":
        return Pose(self.p.copy(), self.q.copy())


@dataclass
class PoseError:
    """Pose displacement: translational part (m) and rotation vector (rad)."""

    e_t: np.ndarray
    e_r: np.ndarray


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Normalize a raw 4-vector and resolve the double cover.

    The returned quaternion has unit norm, ``w >= 0``, and when ``w == 0``
    the first nonzero vector component is positive, so equal rotations map
    to bit-equal representatives.

    Raises:
        DegenerateQuaternion: if the input norm is below 1e-12.
    """
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm <= _NORM_EPS):
        raise DegenerateQuaternion("quaternion norm below 1e-12")
    q = q / norm
    # Sign of the first component with magnitude above threshold decides the
    # hemisphere; exact w == 0 then defers to x, y, z in order.
    sign = np.where(q[..., 0:1] != 0.0, np.sign(q[..., 0:1]), 0.0)
    for i in (1, 2, 3):
        comp = q[..., i : i + 1]
        sign = np.where(sign == 0.0, np.where(comp != 0.0, np.sign(comp), 0.0), sign)
    sign = np.where(sign == 0.0, 1.0, sign)
    return q * sign


def quat_mul(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Hamilton product ``qa * qb`` (apply qb first, then qa)."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    w1, x1, y1, z1 = (qa[..., i] for i in range(4))
    w2, x2, y2, z2 = (qb[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    """Conjugate; equals the inverse for unit quaternions."""
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector ``u * theta`` of a unit quaternion, theta in [0, pi].

    Inputs are canonicalized first, which fixes the axis sign at the
    ``theta == pi`` boundary (the axis of a half-turn is unique only up to
    sign; the canonical hemisphere rule picks the representative whose
    largest-magnitude vector component is positive).
    """
    q = quat_canonical(q)
    w = q[..., 0]
    v = q[..., 1:4]
    s = np.linalg.norm(v, axis=-1)
    theta = 2.0 * np.arctan2(s, w)
    # u * theta = v * (theta / s); series expansion near s -> 0 where
    # theta/s -> 2/w (w -> 1 for canonical small rotations).
    small = s < 1e-8
    safe_s = np.where(small, 1.0, s)
    factor = np.where(small, 2.0 / np.where(w == 0.0, 1.0, w), theta / safe_s)
    return v * factor[..., None]


def quat_exp(v: np.ndarray) -> np.ndarray:
    """Unit quaternion ``(cos(theta/2), u sin(theta/2))`` for ``v = u*theta``.

    Raises:
        OutOfDomain: if ``norm(v) > pi`` (beyond the injectivity radius).
    """
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    if np.any(theta > np.pi + 1e-12):
        raise OutOfDomain("rotation vector magnitude exceeds pi")
    half = 0.5 * theta
    small = theta < 1e-8
    # sin(theta/2)/theta with series fallback 1/2 - theta^2/48 near zero.
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / safe)
    w = np.cos(half)
    return np.concatenate([w[..., None], v * k[..., None]], axis=-1)


def quat_pow(q: np.ndarray, s: float) -> np.ndarray:
    """Fractional rotation ``q**s`` via exp(s * log(q)); needs |s| <= 1."""
    return quat_exp(s * quat_log(q))


def slerp(qa: np.ndarray, qb: np.ndarray, mu) -> np.ndarray:
    """Spherical linear interpolation from ``qa`` (mu=0) to ``qb`` (mu=1).

    Walks the shorter geodesic: ``qb`` is negated when ``<qa, qb> < 0``.
    For geodesic angles below 1e-6 rad the sine ratio is ill-conditioned
    and normalized linear interpolation is used instead.
    """
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    mu = np.asarray(mu, dtype=float)
    dot = np.sum(qa * qb, axis=-1, keepdims=True)
    qb = np.where(dot < 0.0, -qb, qb)
    dot = np.abs(dot)
    omega = np.arccos(np.clip(dot, -1.0, 1.0))
    small = omega < _SLERP_NLERP_OMEGA
    safe_omega = np.where(small, 1.0, omega)
    sin_omega = np.sin(safe_omega)
    mu_ = mu[..., None] if mu.ndim < qa.ndim else mu
    wa = np.where(small, 1.0 - mu_, np.sin((1.0 - mu_) * safe_omega) / sin_omega)
    wb = np.where(small, mu_, np.sin(mu_ * safe_omega) / sin_omega)
    out = wa * qa + wb * qb
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def quat_angle(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Geodesic angle on the quaternion sphere, arccos|<qa, qb>|."""
    dot = np.abs(np.sum(np.asarray(qa) * np.asarray(qb), axis=-1))
    return np.arccos(np.clip(dot, -1.0, 1.0))


def rotation_angle(q: np.ndarray) -> np.ndarray:
    """Rotation angle theta in [0, pi] represented by a unit quaternion."""
    q = np.asarray(q, dtype=float)
    s = np.linalg.norm(q[..., 1:4], axis=-1)
    return 2.0 * np.arctan2(s, np.abs(q[..., 0]))


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate 3-vectors by unit quaternions: ``q v q^-1``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., 0:1]
    u = q[..., 1:4]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def pose_error(observed: Pose, equilibrium: Pose) -> PoseError:
    """Pose displacement between an observed and an equilibrium pose.

    Translational part is ``p - p0``; rotational part is the rotation
    vector of the error quaternion ``q0 * q^-1`` (the restoring-moment
    convention of the impedance controller).
    """
    e_t = observed.p - equilibrium.p
    e_r = quat_log(quat_mul(equilibrium.q, quat_conj(observed.q)))
    return PoseError(e_t=e_t, e_r=e_r)
