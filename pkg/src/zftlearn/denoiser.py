"""Conditional Transformer diffusion model over pose windows.

Architecture: per-token 7D poses (3 translation + 4 quaternion) are
embedded and enriched with learned token-position and timestep embeddings;
the 6D wrench is projected to context tokens (sharing the position table);
one multi-head cross-attention layer integrates the context (trajectory
tokens are queries, context tokens keys/values); stacked pre-norm
self-attention + feed-forward blocks follow; an MLP head predicts the
per-token 7D noise (translational noise vector and relative quaternion).

Training minimizes the mean squared error between injected and predicted
noise, with a configurable weight on the quaternion scalar channel (the
rotation-magnitude carrier).  Reconstruction runs the reverse loop from the
observation (full noise by definition) down to the clean equilibrium:
translations subtract fractional noise, rotations unwind the predicted
relative quaternion through fractional left-inverse composition, which
inverts the corruption exactly when predictions are exact.

Two forward implementations exist: an autodiff path used for training and
gradient checks, and a plain-numpy path used at inference.  A unit test
pins them to agree bit-for-bit in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dataio
from .autodiff import Adam, Tensor, gather_rows, gelu, layer_norm, softmax_last
from .dataio import WindowSet
from .errors import ConfigError, NumericalError, ShapeError
from .geom import quat_canonical, quat_conj, quat_log, quat_mul, quat_pow, rotation_angle
from .noise import NoiseSchedule, corrupt_rotation, corrupt_translation, make_schedule

_LN_EPS = 1e-5


@dataclass
class DenoiserConfig:
    """Architecture, schedule, and corruption settings (checkpointed)."""

    hidden: int = 64
    heads: int = 4
    layers: int = 2
    tokens: int = 16
    steps: int = 50  # diffusion steps T
    schedule_kind: str = "cosine"
    beta_min: float = 1e-4
    beta_max: float = 0.3
    theta_weight: float = 5.0  # loss weight on the quaternion scalar channel
    sigma_gauss: float = 0.0005  # m, translational regularization noise
    sigma_rot: float = 0.0  # rad, optional tangent-space regularization
    dt: float = 0.005  # sample period the model was trained at, seconds

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ConfigError("hidden must be divisible by heads")

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden, "heads": self.heads, "layers": self.layers,
            "tokens": self.tokens, "steps": self.steps,
            "schedule_kind": self.schedule_kind,
            "beta_min": self.beta_min, "beta_max": self.beta_max,
            "theta_weight": self.theta_weight,
            "sigma_gauss": self.sigma_gauss, "sigma_rot": self.sigma_rot,
            "dt": self.dt,
        }

    @staticmethod
    def from_dict(d: dict) -> "DenoiserConfig":
        return DenoiserConfig(**d)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    clip_norm: float = 1.0
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    val_fraction: float = 0.15  # fraction of episodes held out; 0 disables
    val_subset: int = 256  # windows used for per-epoch validation metrics
    val_reverse_steps: int = 8  # reverse steps for per-epoch validation


@dataclass
class NormStats:
    """Per-channel standardization statistics from the training split."""

    pos_mean: np.ndarray
    pos_std: np.ndarray
    wrench_mean: np.ndarray
    wrench_std: np.ndarray
    noise_mean: np.ndarray  # (7,) targets: 3 translation + 4 quaternion
    noise_std: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in (
            "pos_mean", "pos_std", "wrench_mean", "wrench_std",
            "noise_mean", "noise_std")}

    @staticmethod
    def from_dict(d: dict) -> "NormStats":
        return NormStats(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


@dataclass
class TrajectoryWindow:
    """One model input window: N observed poses plus wrenches."""

    obs_p: np.ndarray  # (N, 3)
    obs_q: np.ndarray  # (N, 4)
    wrench: np.ndarray  # (N, 6)
    eq_p: np.ndarray | None = None  # training only
    eq_q: np.ndarray | None = None
    dt: float = 0.005


@dataclass
class ReconstructionMetrics:
    positional_mm: float
    theta_deg: float
    alpha_deg: float


def _expected_shapes(cfg: DenoiserConfig) -> dict:
    h, f = cfg.hidden, 4 * cfg.hidden
    shapes = {
        "pose_w": (7, h), "pose_b": (h,),
        "ctx_w": (6, h), "ctx_b": (h,),
        "pos_emb": (cfg.tokens, h),
        "time_emb": (cfg.steps, h),
        "cross_ln_q_g": (h,), "cross_ln_q_b": (h,),
        "cross_ln_kv_g": (h,), "cross_ln_kv_b": (h,),
    }
    for head in ("q", "k", "v", "o"):
        shapes[f"cross_w{head}"] = (h, h)
        shapes[f"cross_b{head}"] = (h,)
    for i in range(cfg.layers):
        shapes[f"L{i}_ln1_g"] = (h,)
        shapes[f"L{i}_ln1_b"] = (h,)
        for head in ("q", "k", "v", "o"):
            shapes[f"L{i}_w{head}"] = (h, h)
            shapes[f"L{i}_b{head}"] = (h,)
        shapes[f"L{i}_ln2_g"] = (h,)
        shapes[f"L{i}_ln2_b"] = (h,)
        shapes[f"L{i}_ff1_w"] = (h, f)
        shapes[f"L{i}_ff1_b"] = (f,)
        shapes[f"L{i}_ff2_w"] = (f, h)
        shapes[f"L{i}_ff2_b"] = (h,)
    shapes.update({
        "out_ln_g": (h,), "out_ln_b": (h,),
        "head1_w": (h, h), "head1_b": (h,),
        "head2_w": (h, 7), "head2_b": (7,),
    })
    return shapes


class DenoiserParams:
    """Model weights plus the schedule and normalization they were trained
    with.  Read-only after training; inference is concurrency-safe."""

    def __init__(self, config: DenoiserConfig, schedule: NoiseSchedule,
                 norm: NormStats, tensors: dict[str, Tensor]):
        self.config = config
        self.schedule = schedule
        self.norm = norm
        self.tensors = tensors

    @staticmethod
    def init(config: DenoiserConfig, seed: int = 0) -> "DenoiserParams":
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in _expected_shapes(config).items():
            if name.endswith("_g"):
                data = np.ones(shape)
            elif name.endswith(("_b", "_bq", "_bk", "_bv", "_bo")):
                data = np.zeros(shape)
            else:
                data = rng.normal(0.0, 0.02, size=shape)
            tensors[name] = Tensor(data, requires_grad=True)
        schedule = make_schedule(config.schedule_kind, config.steps,
                                 config.beta_min, config.beta_max)
        norm = NormStats(
            pos_mean=np.zeros(3), pos_std=np.ones(3),
            wrench_mean=np.zeros(6), wrench_std=np.ones(6),
            noise_mean=np.zeros(7), noise_std=np.ones(7),
        )
        return DenoiserParams(config, schedule, norm, tensors)

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def copy_weights(self) -> dict:
        return {k: v.data.copy() for k, v in self.tensors.items()}

    def load_weights(self, weights: dict):
        for k, v in weights.items():
            self.tensors[k].data = v.copy()

    def save(self, path):
        dataio.save_checkpoint(
            path, self.config.to_dict(), self.schedule.to_dict(),
            self.norm.to_dict(), {k: t.data for k, t in self.tensors.items()},
        )

    @staticmethod
    def load(path) -> "DenoiserParams":
        cfg_d, sched_d, norm_d, arrays = dataio.load_checkpoint(path)
        config = DenoiserConfig.from_dict(cfg_d)
        expected = _expected_shapes(config)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ConfigError(
                f"checkpoint tensor set mismatch: missing {missing}, extra {extra}"
            )
        tensors = {}
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise ShapeError(
                    f"tensor {name!r}: checkpoint shape {arrays[name].shape} "
                    f"!= expected {shape}"
                )
            tensors[name] = Tensor(arrays[name], requires_grad=True)
        return DenoiserParams(
            config, NoiseSchedule.from_dict(sched_d),
            NormStats.from_dict(norm_d), tensors,
        )

    # -- input standardization ------------------------------------------

    def standardize_inputs(self, noisy_p, noisy_q, wrench):
        n = self.norm
        pose7 = np.concatenate(
            [(noisy_p - n.pos_mean) / n.pos_std, noisy_q], axis=-1
        )
        ctx6 = (wrench - n.wrench_mean) / n.wrench_std
        return pose7, ctx6


# -- forward passes --------------------------------------------------------


def _check_batch_shapes(params: DenoiserParams, noisy_p, noisy_q, wrench):
    n_tok = params.config.tokens
    if noisy_p.shape[-2] != n_tok or wrench.shape[-2] != n_tok:
        raise ShapeError(
            f"window length {noisy_p.shape[-2]} != model tokens {n_tok}"
        )
    if noisy_p.shape[-1] != 3 or noisy_q.shape[-1] != 4 or wrench.shape[-1] != 6:
        raise ShapeError("expected channels (3, 4, 6) for pose/quat/wrench")


def _mha_np(x, kv, p, prefix, heads):
    B, N, h = x.shape
    dh = h // heads
    t = p.tensors

    def proj(src, w, b):
        y = src @ t[f"{prefix}_w{w}"].data + t[f"{prefix}_b{b}"].data
        return y.reshape(B, -1, heads, dh).transpose(0, 2, 1, 3)

    q = proj(x, "q", "q")
    k = proj(kv, "k", "k")
    v = proj(kv, "v", "v")
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    att = e / e.sum(axis=-1, keepdims=True)
    out = (att @ v).transpose(0, 2, 1, 3).reshape(B, N, h)
    return out @ t[f"{prefix}_wo"].data + t[f"{prefix}_bo"].data


def _ln_np(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / np.sqrt(var + _LN_EPS) * g + b


def _forward_np(params: DenoiserParams, pose7, ctx6, t_idx):
    """Plain-numpy forward; returns denormalized (B, N, 7) predictions.

    Raises NumericalError naming the first non-finite block.
    """
    t = params.tensors
    cfg = params.config
    x = pose7 @ t["pose_w"].data + t["pose_b"].data
    x = x + t["pos_emb"].data[None]
    x = x + t["time_emb"].data[t_idx][:, None, :]
    c = ctx6 @ t["ctx_w"].data + t["ctx_b"].data + t["pos_emb"].data[None]

    def check(arr, where):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite activations in {where}")

    check(x, "embedding")
    xq = _ln_np(x, t["cross_ln_q_g"].data, t["cross_ln_q_b"].data)
    ckv = _ln_np(c, t["cross_ln_kv_g"].data, t["cross_ln_kv_b"].data)
    x = x + _mha_np(xq, ckv, params, "cross", cfg.heads)
    check(x, "cross-attention")
    for i in range(cfg.layers):
        xa = _ln_np(x, t[f"L{i}_ln1_g"].data, t[f"L{i}_ln1_b"].data)
        x = x + _mha_np(xa, xa, params, f"L{i}", cfg.heads)
        xf = _ln_np(x, t[f"L{i}_ln2_g"].data, t[f"L{i}_ln2_b"].data)
        hmid = xf @ t[f"L{i}_ff1_w"].data + t[f"L{i}_ff1_b"].data
        inner = np.sqrt(2.0 / np.pi) * (hmid + 0.044715 * hmid**3)
        hmid = 0.5 * hmid * (1.0 + np.tanh(inner))
        x = x + hmid @ t[f"L{i}_ff2_w"].data + t[f"L{i}_ff2_b"].data
        check(x, f"layer {i}")
    x = _ln_np(x, t["out_ln_g"].data, t["out_ln_b"].data)
    o = x @ t["head1_w"].data + t["head1_b"].data
    inner = np.sqrt(2.0 / np.pi) * (o + 0.044715 * o**3)
    o = 0.5 * o * (1.0 + np.tanh(inner))
    o = o @ t["head2_w"].data + t["head2_b"].data
    check(o, "head")
    return o * params.norm.noise_std + params.norm.noise_mean


def _mha_t(x: Tensor, kv: Tensor, p: DenoiserParams, prefix: str, heads: int) -> Tensor:
    B, N, h = x.shape
    M = kv.shape[1]
    dh = h // heads
    t = p.tensors

    def proj(src, n_tokens, w, b):
        y = src @ t[f"{prefix}_w{w}"] + t[f"{prefix}_b{b}"]
        return y.reshape(B, n_tokens, heads, dh).transpose(0, 2, 1, 3)

    q = proj(x, N, "q", "q")
    k = proj(kv, M, "k", "k")
    v = proj(kv, M, "v", "v")
    att = softmax_last((q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh)))
    out = (att @ v).transpose(0, 2, 1, 3).reshape(B, N, h)
    return out @ t[f"{prefix}_wo"] + t[f"{prefix}_bo"]


def _forward_t(params: DenoiserParams, pose7: np.ndarray, ctx6: np.ndarray,
               t_idx: np.ndarray) -> Tensor:
    """Autodiff forward mirroring _forward_np exactly."""
    t = params.tensors
    cfg = params.config
    B, N, _ = pose7.shape
    x = Tensor(pose7) @ t["pose_w"] + t["pose_b"]
    x = x + t["pos_emb"].reshape(1, N, cfg.hidden)
    temb = gather_rows(t["time_emb"], t_idx).reshape(B, 1, cfg.hidden)
    x = x + temb
    c = Tensor(ctx6) @ t["ctx_w"] + t["ctx_b"] + t["pos_emb"].reshape(1, N, cfg.hidden)
    xq = layer_norm(x, t["cross_ln_q_g"], t["cross_ln_q_b"], _LN_EPS)
    ckv = layer_norm(c, t["cross_ln_kv_g"], t["cross_ln_kv_b"], _LN_EPS)
    x = x + _mha_t(xq, ckv, params, "cross", cfg.heads)
    for i in range(cfg.layers):
        xa = layer_norm(x, t[f"L{i}_ln1_g"], t[f"L{i}_ln1_b"], _LN_EPS)
        x = x + _mha_t(xa, xa, params, f"L{i}", cfg.heads)
        xf = layer_norm(x, t[f"L{i}_ln2_g"], t[f"L{i}_ln2_b"], _LN_EPS)
        x = x + gelu(xf @ t[f"L{i}_ff1_w"] + t[f"L{i}_ff1_b"]) @ t[f"L{i}_ff2_w"] + t[f"L{i}_ff2_b"]
    x = layer_norm(x, t["out_ln_g"], t["out_ln_b"], _LN_EPS)
    o = gelu(x @ t["head1_w"] + t["head1_b"]) @ t["head2_w"] + t["head2_b"]
    return o * Tensor(params.norm.noise_std) + Tensor(params.norm.noise_mean)


# -- public operations ------------------------------------------------------


def tokenize(params: DenoiserParams, window: TrajectoryWindow, t: int):
    """Embedded trajectory and context tokens for one window at step t.

    Deterministic given the parameters; trajectory tokens combine the
    embedded 7D pose with position and timestep embeddings, context tokens
    combine the projected wrench with the shared position table.
    """
    noisy_p = np.asarray(window.obs_p, dtype=float)[None]
    noisy_q = np.asarray(window.obs_q, dtype=float)[None]
    wrench = np.asarray(window.wrench, dtype=float)[None]
    _check_batch_shapes(params, noisy_p, noisy_q, wrench)
    if not 1 <= t <= params.config.steps:
        raise ConfigError(f"step {t} outside [1, {params.config.steps}]")
    pose7, ctx6 = params.standardize_inputs(noisy_p, noisy_q, wrench)
    tens = params.tensors
    traj = pose7 @ tens["pose_w"].data + tens["pose_b"].data
    traj = traj + tens["pos_emb"].data[None] + tens["time_emb"].data[t - 1][None, None, :]
    ctx = ctx6 @ tens["ctx_w"].data + tens["ctx_b"].data + tens["pos_emb"].data[None]
    return traj[0], ctx[0]


def predict_noise(params: DenoiserParams, noisy_p, noisy_q, wrench, t) -> np.ndarray:
    """Predict per-token 7D noise for a batch of (possibly partly denoised)
    windows at diffusion step(s) ``t`` (int or per-window array)."""
    noisy_p = np.asarray(noisy_p, dtype=float)
    noisy_q = np.asarray(noisy_q, dtype=float)
    wrench = np.asarray(wrench, dtype=float)
    single = noisy_p.ndim == 2
    if single:
        noisy_p, noisy_q, wrench = noisy_p[None], noisy_q[None], wrench[None]
    _check_batch_shapes(params, noisy_p, noisy_q, wrench)
    t_arr = np.atleast_1d(np.asarray(t, dtype=int))
    if t_arr.size == 1:
        t_arr = np.full(noisy_p.shape[0], int(t_arr[0]))
    if np.any(t_arr < 1) or np.any(t_arr > params.config.steps):
        raise ConfigError(f"step outside [1, {params.config.steps}]")
    pose7, ctx6 = params.standardize_inputs(noisy_p, noisy_q, wrench)
    out = _forward_np(params, pose7, ctx6, t_arr - 1)
    return out[0] if single else out


def corrupt_batch(schedule: NoiseSchedule, eq_p, eq_q, obs_p, obs_q,
                  t_arr: np.ndarray, sigma_gauss: float, sigma_rot: float,
                  rng: np.random.Generator | None):
    """Forward-corrupt a batch of windows at per-window steps ``t_arr``."""
    frac = np.sqrt(1.0 - schedule.alpha_bar[t_arr - 1])
    noisy_p, target_t = corrupt_translation(
        eq_p, obs_p, frac[:, None, None], sigma_gauss, rng
    )
    noisy_q, target_q = corrupt_rotation(
        eq_q, obs_q, frac[:, None], sigma_rot, rng
    )
    return noisy_p, noisy_q, target_t, target_q


def noise_mse(pred: np.ndarray, target_t: np.ndarray, target_q: np.ndarray,
              theta_weight: float) -> float:
    """Channel-weighted squared error between predicted and injected noise,
    averaged over windows and tokens (the quaternion scalar channel carries
    the rotation magnitude and gets ``theta_weight``)."""
    target = np.concatenate([target_t, target_q], axis=-1)
    weights = np.ones(7)
    weights[3] = theta_weight
    err = (pred - target) ** 2 * weights
    return float(err.sum() / (target.shape[0] * target.shape[1]))


def _loss_graph(params: DenoiserParams, noisy_p, noisy_q, wrench,
                target_t, target_q, t_arr) -> Tensor:
    _check_batch_shapes(params, noisy_p, noisy_q, wrench)
    pose7, ctx6 = params.standardize_inputs(noisy_p, noisy_q, wrench)
    pred = _forward_t(params, pose7, ctx6, t_arr - 1)
    target = np.concatenate([target_t, target_q], axis=-1)
    weights = np.ones(7)
    weights[3] = params.config.theta_weight
    err = pred - Tensor(target)
    weighted = err * err * Tensor(weights)
    count = target.shape[0] * target.shape[1]
    return weighted.sum() * (1.0 / count)


def loss(params: DenoiserParams, windows: WindowSet, schedule: NoiseSchedule,
         rng: np.random.Generator) -> float:
    """Noise-prediction loss over a batch of windows.

    Samples a uniform step per window, corrupts via the noise module, and
    returns the mean over windows and tokens of the channel-weighted squared
    error between injected and predicted noise.
    """
    if len(windows) == 0:
        raise ConfigError("empty window batch")
    t_arr = rng.integers(1, schedule.T + 1, size=len(windows))
    cfg = params.config
    noisy_p, noisy_q, target_t, target_q = corrupt_batch(
        schedule, windows.eq_p, windows.eq_q, windows.obs_p, windows.obs_q,
        t_arr, cfg.sigma_gauss, cfg.sigma_rot, rng,
    )
    g = _loss_graph(params, noisy_p, noisy_q, windows.wrench,
                    target_t, target_q, t_arr)
    return float(g.data)


def compute_norm_stats(windows: WindowSet, sigma_gauss: float) -> NormStats:
    """Standardization statistics from the training split."""
    flat_p = windows.obs_p.reshape(-1, 3)
    flat_w = windows.wrench.reshape(-1, 6)
    tnoise = (windows.obs_p - windows.eq_p).reshape(-1, 3)
    qnoise = quat_canonical(
        quat_mul(windows.obs_q, quat_conj(windows.eq_q))
    ).reshape(-1, 4)
    t_std = np.sqrt(tnoise.std(axis=0) ** 2 + sigma_gauss**2)
    noise_mean = np.concatenate([tnoise.mean(axis=0), qnoise.mean(axis=0)])
    noise_std = np.concatenate([t_std, qnoise.std(axis=0)])
    return NormStats(
        pos_mean=flat_p.mean(axis=0),
        pos_std=np.maximum(flat_p.std(axis=0), 1e-6),
        wrench_mean=flat_w.mean(axis=0),
        wrench_std=np.maximum(flat_w.std(axis=0), 1e-3),
        noise_mean=noise_mean,
        noise_std=np.maximum(noise_std, 1e-6),
    )


def split_by_episode(windows: WindowSet, val_fraction: float, seed: int):
    """Deterministic episode-level train/validation split."""
    episodes = np.unique(windows.episode)
    if val_fraction <= 0.0:
        return windows, None
    n_val = max(1, int(round(val_fraction * episodes.size)))
    if n_val >= episodes.size:
        raise ConfigError("validation split would consume every episode")
    order = np.random.default_rng(seed).permutation(episodes)
    val_eps = set(order[:n_val].tolist())
    val_mask = np.isin(windows.episode, list(val_eps))
    if not np.any(val_mask) or np.all(val_mask):
        raise ConfigError("empty train or validation split")
    return windows.subset(~val_mask), windows.subset(val_mask)


def train(windows: WindowSet, config: DenoiserConfig, tcfg: TrainConfig,
          checkpoint_path=None):
    """Train the denoiser; returns (params, log_rows).

    Each iteration samples a window batch and uniform timesteps, corrupts
    through the noise module, and takes one Adam step on the weighted
    noise-prediction loss.  Per-epoch rows carry the running train loss and
    validation reconstruction metrics; the returned parameters are the ones
    with the best validation positional loss (final weights when validation
    is disabled).  If ``checkpoint_path`` is given, the best weights are
    saved there.

    Raises:
        ConfigError: empty dataset or empty validation split.
        NumericalError: loss became non-finite (diagnostic included).
    """
    if len(windows) == 0:
        raise ConfigError("training requires at least one window")
    if windows.tokens != config.tokens:
        raise ShapeError(
            f"window length {windows.tokens} != configured tokens {config.tokens}"
        )
    config = replace(config, dt=windows.dt)
    train_ws, val_ws = split_by_episode(windows, tcfg.val_fraction, tcfg.seed)
    params = DenoiserParams.init(config, seed=tcfg.seed)
    params.norm = compute_norm_stats(train_ws, config.sigma_gauss)
    schedule = params.schedule
    opt = Adam(params.parameters(), lr=tcfg.lr, clip_norm=tcfg.clip_norm)
    rng = np.random.default_rng(tcfg.seed + 1)

    val_idx = None
    if val_ws is not None:
        n = min(tcfg.val_subset, len(val_ws))
        val_idx = np.linspace(0, len(val_ws) - 1, n).astype(int)

    log_rows = []
    best = {"positional": np.inf, "weights": params.copy_weights(), "epoch": -1}
    n_train = len(train_ws)
    for epoch in range(tcfg.epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, tcfg.batch_size):
            batch = train_ws.subset(order[start : start + tcfg.batch_size])
            t_arr = rng.integers(1, schedule.T + 1, size=len(batch))
            noisy_p, noisy_q, target_t, target_q = corrupt_batch(
                schedule, batch.eq_p, batch.eq_q, batch.obs_p, batch.obs_q,
                t_arr, config.sigma_gauss, config.sigma_rot, rng,
            )
            g = _loss_graph(params, noisy_p, noisy_q, batch.wrench,
                            target_t, target_q, t_arr)
            step_loss = float(g.data)
            if not np.isfinite(step_loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            opt.zero_grad()
            g.backward()
            opt.step()
            epoch_loss += step_loss
            n_batches += 1
        row = {
            "epoch": epoch,
            "loss": epoch_loss / max(1, n_batches),
            "positional_mm": float("nan"),
            "theta_deg": float("nan"),
            "alpha_deg": float("nan"),
        }
        if val_ws is not None:
            sub = val_ws.subset(val_idx)
            rec_p, rec_q = reconstruct_szft(
                params, sub.obs_p, sub.obs_q, sub.wrench,
                steps=tcfg.val_reverse_steps,
            )
            m = metrics(
                rec_p.reshape(-1, 3), rec_q.reshape(-1, 4),
                sub.eq_p.reshape(-1, 3), sub.eq_q.reshape(-1, 4),
                sub.obs_q.reshape(-1, 4),
            )
            row.update(positional_mm=m.positional_mm, theta_deg=m.theta_deg,
                       alpha_deg=m.alpha_deg)
            if m.positional_mm < best["positional"]:
                best = {"positional": m.positional_mm,
                        "weights": params.copy_weights(), "epoch": epoch}
        log_rows.append(row)

    if val_ws is not None and best["epoch"] >= 0:
        params.load_weights(best["weights"])
    if checkpoint_path is not None:
        params.save(checkpoint_path)
    return params, log_rows


def reverse_step_sequence(T: int, steps: int | None) -> list[int]:
    """Descending step ids for the reverse loop (evenly spaced subset)."""
    if steps is None or steps >= T:
        return list(range(T, 0, -1))
    if steps < 1:
        raise ConfigError("need at least one reverse step")
    ts = np.unique(np.round(np.linspace(T, 1, steps)).astype(int))
    return sorted(ts.tolist(), reverse=True)


def reconstruct_szft(params: DenoiserParams, obs_p, obs_q, wrench,
                     steps: int | None = None, predict_fn=None):
    """Reconstruct equilibrium poses from observed windows and wrenches.

    Runs the reverse loop from the observation (noise fraction 1 by
    definition) down to fraction 0.  At each retained step the model
    predicts the full noise; translations subtract the fractional
    difference, rotations compose the fractional inverse of the predicted
    relative quaternion on the left, then renormalize.  With an oracle
    ``predict_fn`` returning the exact injected noise the loop recovers the
    equilibrium exactly.

    Args:
        obs_p, obs_q, wrench: (N, ...) single window or (B, N, ...) batch.
        steps: number of reverse steps (default: full schedule length).
        predict_fn: optional override with signature
            ``(cur_p, cur_q, wrench, t) -> (B, N, 7)`` raw noise.

    Returns:
        (szft_p, szft_q) matching the input batch shape; quaternions are
        unit-norm and canonical.
    """
    obs_p = np.asarray(obs_p, dtype=float)
    obs_q = np.asarray(obs_q, dtype=float)
    wrench = np.asarray(wrench, dtype=float)
    single = obs_p.ndim == 2
    if single:
        obs_p, obs_q, wrench = obs_p[None], obs_q[None], wrench[None]
    _check_batch_shapes(params, obs_p, obs_q, wrench)
    if predict_fn is None:
        predict_fn = lambda cp, cq, w, t: predict_noise(params, cp, cq, w, t)

    schedule = params.schedule
    ts = reverse_step_sequence(schedule.T, steps)
    cur_p, cur_q = obs_p.copy(), obs_q.copy()
    frac = 1.0  # the observation carries the full noise by definition
    for i, t in enumerate(ts):
        pred = predict_fn(cur_p, cur_q, wrench, t)
        if not np.all(np.isfinite(pred)):
            raise NumericalError(f"non-finite prediction at reverse step t={t}")
        n_t = pred[..., :3]
        n_q = quat_canonical(pred[..., 3:])
        frac_next = schedule.noise_fraction(ts[i + 1]) if i + 1 < len(ts) else 0.0
        delta = frac - frac_next
        cur_p = cur_p - delta * n_t
        cur_q = quat_mul(quat_pow(n_q, -delta), cur_q)
        cur_q = cur_q / np.linalg.norm(cur_q, axis=-1, keepdims=True)
        frac = frac_next
    cur_q = quat_canonical(cur_q)
    return (cur_p[0], cur_q[0]) if single else (cur_p, cur_q)


def metrics(pred_p, pred_q, gt_p, gt_q, obs_q,
            axis_threshold: float = 1e-3) -> ReconstructionMetrics:
    """Reconstruction errors against the ground-truth equilibrium.

    * positional: mean Euclidean error in mm.
    * theta: mean absolute difference between the rotation magnitudes of
      the predicted and true displacement quaternions (observed relative to
      equilibrium), degrees.
    * alpha: mean angle between their rotation axes, degrees; a sample
      contributes 0 when either magnitude is below ``axis_threshold`` rad
      (the axis is undefined at zero rotation).
    """
    pred_p = np.asarray(pred_p, dtype=float)
    gt_p = np.asarray(gt_p, dtype=float)
    if pred_p.shape != gt_p.shape:
        raise ShapeError(f"length mismatch: {pred_p.shape} vs {gt_p.shape}")
    positional_mm = float(np.mean(np.linalg.norm(pred_p - gt_p, axis=-1)) * 1000.0)

    noise_pred = quat_canonical(quat_mul(obs_q, quat_conj(pred_q)))
    noise_gt = quat_canonical(quat_mul(obs_q, quat_conj(gt_q)))
    th_pred = rotation_angle(noise_pred)
    th_gt = rotation_angle(noise_gt)
    theta_deg = float(np.degrees(np.mean(np.abs(th_pred - th_gt))))

    defined = (th_pred >= axis_threshold) & (th_gt >= axis_threshold)
    axis_pred = quat_log(noise_pred)
    axis_gt = quat_log(noise_gt)
    dot = np.sum(axis_pred * axis_gt, axis=-1)
    norms = np.linalg.norm(axis_pred, axis=-1) * np.linalg.norm(axis_gt, axis=-1)
    cosang = np.clip(dot / np.where(norms > 0.0, norms, 1.0), -1.0, 1.0)
    alpha = np.where(defined, np.arccos(cosang), 0.0)
    alpha_deg = float(np.degrees(np.mean(alpha)))
    return ReconstructionMetrics(positional_mm, theta_deg, alpha_deg)
