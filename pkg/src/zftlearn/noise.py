"""Noise schedules and forward corruption of poses.

The variance schedule follows DDPM bookkeeping: per-step variances beta_t,
alpha_t = 1 - beta_t, cumulative products alpha_bar_t, and the signal-to-
noise ratio SNR_t = alpha_bar_t / (1 - alpha_bar_t), which must decay
strictly over steps.

Pose corruption works on the full displacement rather than on unit
Gaussians.  Translations: the target noise is ``p - p0 + eps_gauss`` and
step t mixes it in as ``p0 + frac(t) * noise`` where
``frac(t) = sqrt(1 - alpha_bar_t)`` so the injected fraction tracks the
DDPM marginal signal decay.  Rotations are corrupted on the quaternion
sphere with SLERP (additive noise would break the unit norm), with the
relative quaternion ``q * q0^-1`` as the prediction target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geom import Pose, quat_canonical, quat_conj, quat_exp, quat_mul, slerp

DEFAULT_STEPS = 50
DEFAULT_SIGMA_GAUSS = 0.0005  # meters; translational regularization noise
SCHEDULE_KINDS = ("linear", "cosine")


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable variance schedule over T diffusion steps.

    ``alpha_bar`` has length T and is indexed 1-based through the helpers
    (step t corresponds to ``alpha_bar[t-1]``); step 0 is the clean sample
    with alpha_bar = 1 by convention.
    """

    kind: str
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def noise_fraction(self, t: int) -> float:
        """Fraction of the full noise present at step t: sqrt(1 - abar_t)."""
        if t == 0:
            return 0.0
        return float(np.sqrt(1.0 - self.alpha_bar[t - 1]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T, "beta": self.beta.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "NoiseSchedule":
        beta = np.asarray(d["beta"], dtype=float)
        alpha = 1.0 - beta
        return NoiseSchedule(
            kind=d["kind"],
            T=int(d["T"]),
            beta=beta,
            alpha=alpha,
            alpha_bar=np.cumprod(alpha),
        )


@dataclass
class CorruptionSample:
    """One corrupted pose with its prediction targets at step t."""

    noisy: Pose
    target_translation: np.ndarray  # (3,) full translational noise, meters
    target_rotation: np.ndarray  # (4,) relative quaternion q * q0^-1
    t: int


def make_schedule(
    kind: str = "cosine",
    T: int = DEFAULT_STEPS,
    beta_min: float = 1e-4,
    beta_max: float = 0.3,
) -> NoiseSchedule:
    """Build a variance schedule.

    ``linear`` spaces beta_t evenly in [beta_min, beta_max]; ``cosine``
    derives beta_t from the squared-cosine alpha_bar curve (offset 0.008,
    beta clipped to 0.999) and ignores the beta range arguments.

    Raises:
        ConfigError: T < 1, invalid beta range, or unknown kind.
    """
    if T < 1:
        raise ConfigError("schedule needs T >= 1")
    if kind == "linear":
        if not (0.0 < beta_min <= beta_max < 1.0):
            raise ConfigError("need 0 < beta_min <= beta_max < 1")
        beta = np.linspace(beta_min, beta_max, T)
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1, dtype=float)
        f = np.cos((steps / T + s) / (1.0 + s) * np.pi / 2.0) ** 2
        beta = np.clip(1.0 - f[1:] / f[:-1], 1e-8, 0.999)
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    alpha = 1.0 - beta
    return NoiseSchedule(
        kind=kind, T=T, beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha)
    )


def snr(schedule: NoiseSchedule, t: int) -> float:
    """Signal-to-noise ratio alpha_bar_t / (1 - alpha_bar_t) at step t.

    Returns ``inf`` when alpha_bar_t == 1 (cannot occur for schedules built
    by make_schedule since beta_t > 0, but the sentinel is defined).
    """
    if not 1 <= t <= schedule.T:
        raise ConfigError(f"step {t} outside [1, {schedule.T}]")
    abar = schedule.alpha_bar[t - 1]
    if abar >= 1.0:
        return float("inf")
    return float(abar / (1.0 - abar))


def corrupt_translation(
    p0: np.ndarray,
    p_observed: np.ndarray,
    beta_scale: float,
    sigma_gauss: float = DEFAULT_SIGMA_GAUSS,
    rng: np.random.Generator | None = None,
):
    """Corrupt equilibrium positions toward the observed positions.

    The prediction target is the full noise ``p - p0 + eps`` with
    ``eps ~ N(0, sigma^2 I)`` (regularization, zero when sigma == 0); the
    corrupted position mixes it in linearly: ``p0 + beta_scale * target``.
    Broadcasts over leading dimensions.

    Returns:
        (p_noisy, target_noise)
    """
    p0 = np.asarray(p0, dtype=float)
    p_observed = np.asarray(p_observed, dtype=float)
    target = p_observed - p0
    if sigma_gauss > 0.0:
        if rng is None:
            raise ConfigError("sigma_gauss > 0 requires an rng")
        target = target + rng.normal(0.0, sigma_gauss, size=p0.shape)
    return p0 + beta_scale * target, target


def corrupt_rotation(
    q0: np.ndarray,
    q_observed: np.ndarray,
    beta_scale: float,
    sigma_rot: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Corrupt equilibrium orientations geodesically toward the observed.

    ``q_noisy = slerp(q0, q, beta_scale)`` stays on the unit sphere by
    construction; the prediction target is the relative quaternion
    ``q * q0^-1`` (canonicalized).  ``sigma_rot`` optionally applies
    tangent-space Gaussian regularization to the observed quaternion before
    corruption (off by default).  Broadcasts over leading dimensions.

    Returns:
        (q_noisy, target_noise_quat)
    """
    q0 = np.asarray(q0, dtype=float)
    q_observed = np.asarray(q_observed, dtype=float)
    if sigma_rot > 0.0:
        if rng is None:
            raise ConfigError("sigma_rot > 0 requires an rng")
        tangent = rng.normal(0.0, sigma_rot, size=q0.shape[:-1] + (3,))
        norm = np.linalg.norm(tangent, axis=-1, keepdims=True)
        cap = np.pi - 1e-6
        tangent = np.where(norm > cap, tangent * (cap / norm), tangent)
        q_observed = quat_mul(quat_exp(tangent), q_observed)
    q_noisy = slerp(q0, q_observed, beta_scale)
    target = quat_canonical(quat_mul(q_observed, quat_conj(q0)))
    return q_noisy, target
