"""Energy-based stiffness estimation and directional adaptation.

Per axis, the estimator equates the elastic energy of a virtual unit spring
with the work done by the measured wrench over the damped displacement
``e~ = kappa e - gamma edot``: below the wrench threshold (or with a
vanishing displacement) the reduction is zero, otherwise
``k* = max(0, 2 f e~ / (e~^2 + eps))``.  Reductions are aggregated by
arithmetic mean over a sliding window, weighted by the directional factors
``rho = 1 - psi`` (``psi_i = |e_i| / ||e||``, the per-axis contribution of
the reconstructed equilibrium displacement), and subtracted from the
baseline with clipping: ``K_i = clip(K_max_i - rho_i k*_i, 0, K_max_i)``.

Axes that carry the intended displacement keep their stiffness; axes that
contribute little but still transfer energy get softened.  Displacements
fed here are measured against the reconstructed equilibrium trajectory
(the observed pose relative to it), not the nominal one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DIRECTIONAL_EPS = 1e-6  # ||e|| below this: psi = 0, rho = 1 (no intent)


@dataclass
class EstimatorParams:
    kappa_t: float = 1.0  # N/m, unit translational stiffness
    kappa_r: float = 1.0  # Nm/rad, unit rotational stiffness
    gamma_t: float = 0.2  # N s/m, damping coefficient on the error rate
    gamma_r: float = 0.2  # Nm s/rad, damping coefficient on angular velocity
    f_thres: float = 1.0  # N, forces below are ignored
    m_thres: float = 1.0  # Nm, moments below are ignored
    epsilon: float = 1e-9  # regularizer in the energy quotient
    window: int = 16  # sliding-window length (samples)
    rate_hz: float = 200.0  # estimator sample rate
    translation_uses_velocity: bool = False  # damp with pdot instead of edot

    def __post_init__(self):
        if self.f_thres <= 0.0 or self.m_thres <= 0.0:
            raise ConfigError("wrench thresholds must be > 0")
        if self.epsilon <= 0.0:
            raise ConfigError("epsilon must be > 0")
        if self.window < 1:
            raise ConfigError("window length must be >= 1")


@dataclass
class DirectionalFactors:
    psi_t: np.ndarray  # (3,) per-axis contribution, in [0, 1]
    psi_r: np.ndarray
    rho_t: np.ndarray  # 1 - psi
    rho_r: np.ndarray


def _axis_reduction(e, rate, f, kappa, gamma, thres, eps):
    e_tilde = kappa * e - gamma * rate
    k = 2.0 * f * e_tilde / (e_tilde * e_tilde + eps)
    k = np.maximum(0.0, k)
    ignore = (np.abs(f) < thres) | (e_tilde * e_tilde < eps)
    return np.where(ignore, 0.0, k)


def stiffness_reduction(e_t, e_r, e_dot, omega, f_ext, m_ext,
                        params: EstimatorParams):
    """Per-axis stiffness reduction terms (k_t*, k_r*), each >= 0.

    ``e_dot`` is the translational error rate by default (absolute velocity
    when ``translation_uses_velocity`` is set by the caller passing pdot);
    rotations always damp with the angular velocity.
    """
    e_t, e_r, e_dot, omega, f_ext, m_ext = (
        np.asarray(v, dtype=float).reshape(3)
        for v in (e_t, e_r, e_dot, omega, f_ext, m_ext)
    )
    k_t = _axis_reduction(e_t, e_dot, f_ext, params.kappa_t, params.gamma_t,
                          params.f_thres, params.epsilon)
    k_r = _axis_reduction(e_r, omega, m_ext, params.kappa_r, params.gamma_r,
                          params.m_thres, params.epsilon)
    return k_t, k_r


def directional_factors(e_t, e_r, eps_dir: float = DIRECTIONAL_EPS) -> DirectionalFactors:
    """Per-axis alignment factors of the equilibrium displacement.

    ``psi_i = |e_i| / ||e||``; when the displacement norm is below
    ``eps_dir`` there is no motion intent and psi falls back to zero
    (full adaptation allowed on every axis).
    """
    e_t = np.asarray(e_t, dtype=float).reshape(3)
    e_r = np.asarray(e_r, dtype=float).reshape(3)

    def psi(e):
        n = np.linalg.norm(e)
        return np.abs(e) / n if n > eps_dir else np.zeros(3)

    psi_t, psi_r = psi(e_t), psi(e_r)
    return DirectionalFactors(
        psi_t=psi_t, psi_r=psi_r, rho_t=1.0 - psi_t, rho_r=1.0 - psi_r
    )


def adapt_stiffness(k_max, k_star, rho) -> np.ndarray:
    """Adapted diagonal: clip(K_max - rho * k*, 0, K_max) per axis."""
    k_max = np.asarray(k_max, dtype=float).reshape(3)
    k_star = np.asarray(k_star, dtype=float).reshape(3)
    rho = np.asarray(rho, dtype=float).reshape(3)
    return np.clip(k_max - rho * k_star, 0.0, k_max)


@dataclass
class EstimatorTick:
    k_t_star: np.ndarray  # window-aggregated reductions
    k_r_star: np.ndarray
    K_t: np.ndarray
    K_r: np.ndarray


class StiffnessAdapter:
    """Stateful sliding-window estimator for one control loop.

    Single writer: call ``windowed_update`` once per tick.  Reductions are
    computed per sample, averaged over the window (warm-up averages the
    samples present so far), then applied through the directional factors.
    """

    def __init__(self, params: EstimatorParams, K_t_max, K_r_max):
        self.params = params
        self.K_t_max = np.asarray(K_t_max, dtype=float).reshape(3)
        self.K_r_max = np.asarray(K_r_max, dtype=float).reshape(3)
        self._buf_t: deque = deque(maxlen=params.window)
        self._buf_r: deque = deque(maxlen=params.window)

    def windowed_update(self, e_t, e_r, e_dot, omega, f_ext, m_ext,
                        factors: DirectionalFactors) -> EstimatorTick:
        k_t, k_r = stiffness_reduction(e_t, e_r, e_dot, omega, f_ext, m_ext,
                                       self.params)
        self._buf_t.append(k_t)
        self._buf_r.append(k_r)
        k_t_mean = np.mean(self._buf_t, axis=0)
        k_r_mean = np.mean(self._buf_r, axis=0)
        return EstimatorTick(
            k_t_star=k_t_mean,
            k_r_star=k_r_mean,
            K_t=adapt_stiffness(self.K_t_max, k_t_mean, factors.rho_t),
            K_r=adapt_stiffness(self.K_r_max, k_r_mean, factors.rho_r),
        )

    def history(self):
        """Snapshot of the window buffers (copies; safe to read anytime)."""
        return list(self._buf_t), list(self._buf_r)
