"""Task-space impedance law and stiffness-proportional damping design.

The controller renders a virtual spring-damper about an equilibrium pose:
restoring force ``f = K_t (p0 - p) - B_t pdot`` and restoring moment
``m = K_r theta0 u0 - B_r omega`` with ``(u0, theta0)`` the axis-angle of
the error quaternion ``q0 q^-1``.  The returned wrench is the actuation on
the end-effector; the simulator applies the environment reaction with the
opposite sign.

Damping is proportional to stiffness, ``B = lambda K``, with the scalar
time constant derived from the task-space inertia: an intermediate matrix
``b = sqrt(Lambda) D sqrt(K) + sqrt(K) D sqrt(Lambda)`` (damping-ratio
matrix ``D = d I``) gives ``lambda = 2 tr(b) / tr(K)``.  Translational and
rotational subspaces are designed independently.  All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStiffness
from .geom import Pose, quat_conj, quat_log, quat_mul

DEFAULT_DAMPING_RATIO = 0.7
INERTIA_REGULARIZATION = 1e-6  # damped least-squares floor for Lambda


@dataclass
class Wrench:
    f: np.ndarray  # (3,) N
    m: np.ndarray  # (3,) Nm

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.f, self.m])

    @staticmethod
    def zero() -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3))


@dataclass
class StiffnessState:
    """Diagonal stiffness/damping with their baselines; ``B = lambda K``
    holds exactly by construction."""

    K_t: np.ndarray  # (3,) diagonal, N/m
    K_r: np.ndarray  # (3,) diagonal, Nm/rad
    K_t_max: np.ndarray
    K_r_max: np.ndarray
    lambda_t: float
    lambda_r: float

    @property
    def B_t(self) -> np.ndarray:
        return self.lambda_t * self.K_t

    @property
    def B_r(self) -> np.ndarray:
        return self.lambda_r * self.K_r

    @staticmethod
    def from_baselines(K_t_max, K_r_max, inertia_t, inertia_r,
                       damping_ratio: float = DEFAULT_DAMPING_RATIO) -> "StiffnessState":
        K_t_max = np.asarray(K_t_max, dtype=float).reshape(3)
        K_r_max = np.asarray(K_r_max, dtype=float).reshape(3)
        lam_t, _ = damping_design(np.diag(K_t_max), inertia_t, damping_ratio)
        lam_r, _ = damping_design(np.diag(K_r_max), inertia_r, damping_ratio)
        return StiffnessState(
            K_t=K_t_max.copy(), K_r=K_r_max.copy(),
            K_t_max=K_t_max, K_r_max=K_r_max,
            lambda_t=lam_t, lambda_r=lam_r,
        )


def elastic_wrench(observed: Pose, zft: Pose, twist, stiffness: StiffnessState) -> Wrench:
    """Restoring spring-damper wrench applied to the end-effector.

    ``twist`` is ``(pdot, omega)`` in the base frame.  Zero displacement and
    zero twist give a zero wrench.
    """
    pdot, omega = (np.asarray(v, dtype=float).reshape(3) for v in twist)
    e_r0 = quat_log(quat_mul(zft.q, quat_conj(observed.q)))  # theta0 * u0
    f = stiffness.K_t * (zft.p - observed.p) - stiffness.B_t * pdot
    m = stiffness.K_r * e_r0 - stiffness.B_r * omega
    return Wrench(f=f, m=m)


def elastic_energy(observed: Pose, zft: Pose, stiffness: StiffnessState) -> float:
    """Potential energy of the virtual spring, 0.5 e' K e per subspace."""
    e_t = observed.p - zft.p
    e_r = quat_log(quat_mul(zft.q, quat_conj(observed.q)))
    return float(
        0.5 * np.dot(e_t, stiffness.K_t * e_t)
        + 0.5 * np.dot(e_r, stiffness.K_r * e_r)
    )


def damping_design(K: np.ndarray, inertia: np.ndarray, damping_ratio: float):
    """Scalar time constant and damping matrix from stiffness and inertia.

    ``sqrt(inertia)`` comes from an eigendecomposition (after additive
    damped least-squares regularization when needed), ``sqrt(K)`` is
    elementwise on the diagonal.  Returns ``(lambda, B)`` with
    ``B = lambda K``.

    Raises:
        DegenerateStiffness: tr(K) == 0.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim == 1:
        K = np.diag(K)
    inertia = np.asarray(inertia, dtype=float)
    k_diag = np.diag(K)
    tr_k = float(k_diag.sum())
    if tr_k <= 0.0:
        raise DegenerateStiffness("tr(K) must be > 0 for damping design")

    sym = 0.5 * (inertia + inertia.T)
    evals, evecs = np.linalg.eigh(sym)
    if np.any(evals <= 0.0):
        evals, evecs = np.linalg.eigh(sym + INERTIA_REGULARIZATION * np.eye(3))
        evals = np.maximum(evals, INERTIA_REGULARIZATION)
    sqrt_inertia = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    sqrt_k = np.diag(np.sqrt(np.maximum(k_diag, 0.0)))
    D = damping_ratio * np.eye(3)
    b = sqrt_inertia @ D @ sqrt_k + sqrt_k @ D @ sqrt_inertia
    lam = 2.0 * float(np.trace(b)) / tr_k
    return lam, lam * K
