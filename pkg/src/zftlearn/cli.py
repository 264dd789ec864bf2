"""Command-line entry point tying the pipeline together.

Subcommands: ``generate-data`` (simulate fixed-impedance episodes into a
JSONL dataset), ``train`` (fit the denoiser, write a checkpoint and a
per-epoch metrics CSV), ``eval`` (reconstruction metrics on a held-out
dataset, split into free-space and contact windows), ``run`` (one
closed-loop episode, writing the tick log CSV), and ``plot-csv`` (extract
per-axis wrench/stiffness/factor series from a tick log).

Every command honors ``--seed`` for end-to-end determinism.  Relative
output paths are placed under ``$ZFTLEARN_OUT_DIR`` when that variable is
set.  Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 I/O error.
"""

from __future__ import annotations

import functools
import os
import sys
from dataclasses import dataclass, field

import click
import numpy as np
import yaml

from . import dataio, denoiser, scenarios, sim
from .dataio import extract_windows, fmt, read_dataset, write_csv, write_dataset
from .denoiser import DenoiserConfig, DenoiserParams, TrainConfig
from .errors import ConfigError, NumericalError, ZftError

_RUN_KEYS = {"seed", "scenario", "mode", "episodes", "dataset", "checkpoint",
             "out", "model", "train", "estimator", "controller"}
_MODEL_KEYS = {"hidden", "heads", "layers", "tokens", "steps", "schedule_kind",
               "beta_min", "beta_max", "theta_weight", "sigma_gauss",
               "sigma_rot", "dt"}
_TRAIN_KEYS = {"lr", "clip_norm", "batch_size", "epochs", "seed",
               "val_fraction", "val_subset", "val_reverse_steps"}


@dataclass
class RunConfig:
    """Configuration shared by the subcommands; flags override file values."""

    seed: int = 0
    scenario: str = "parkour-data"
    mode: str = "fixed"
    episodes: int = 20
    dataset: str | None = None
    checkpoint: str | None = None
    out: str | None = None
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    @staticmethod
    def load(path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path!r}: expected a mapping")
        unknown = set(raw) - _RUN_KEYS
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path!r}")
        for section, keys in (("model", _MODEL_KEYS), ("train", _TRAIN_KEYS)):
            extra = set(raw.get(section, {})) - keys
            if extra:
                raise ConfigError(
                    f"unknown key(s) {sorted(extra)} in {path!r} section "
                    f"{section!r}"
                )
        cfg = RunConfig(**{k: v for k, v in raw.items()
                           if k in RunConfig.__dataclass_fields__})
        for name in ("dataset", "checkpoint"):
            value = getattr(cfg, name)
            if value is not None and not os.path.exists(value):
                raise ConfigError(f"{name} path {value!r} does not exist")
        return cfg


def _out_path(path: str) -> str:
    base = os.environ.get("ZFTLEARN_OUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(3)
        except OSError as exc:
            click.echo(f"io error: {exc}", err=True)
            sys.exit(4)
        except ZftError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _load_run_config(config, seed, mode, checkpoint, out, episodes):
    cfg = RunConfig.load(config) if config else RunConfig()
    if seed is not None:
        cfg.seed = seed
    if mode is not None:
        cfg.mode = mode
    if checkpoint is not None:
        if not os.path.exists(checkpoint):
            raise ConfigError(f"checkpoint path {checkpoint!r} does not exist")
        cfg.checkpoint = checkpoint
    if out is not None:
        cfg.out = out
    if episodes is not None:
        cfg.episodes = episodes
    return cfg


@click.group()
def main():
    """Equilibrium-trajectory learning and adaptive impedance toolkit."""


_shared = [
    click.option("--config", type=click.Path(), default=None,
                 help="Run configuration YAML."),
    click.option("--seed", type=int, default=None, help="Master seed."),
    click.option("--out", type=click.Path(), default=None, help="Output path."),
]


def _with_shared(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


@main.command("generate-data")
@_with_shared
@click.option("--scenario", default=None, help="Scenario name or file.")
@click.option("--episodes", type=int, default=None)
@click.option("--duration", type=float, default=None,
              help="Override episode duration (truncate), seconds.")
@_cli_errors
def cmd_generate_data(config, seed, out, scenario, episodes, duration):
    """Simulate fixed-impedance episodes into a JSONL dataset."""
    cfg = _load_run_config(config, seed, None, None, out, episodes)
    if scenario is not None:
        cfg.scenario = scenario
    out_path = _out_path(cfg.out or "dataset.jsonl")
    scen_cfg = scenarios.load_scenario_config(cfg.scenario)

    def build(ep_seed):
        scn = scenarios.build_scenario(scen_cfg, ep_seed)
        if duration is not None:
            n = int(round(duration / scn.dt)) + 1
            if n < len(scn.zft):
                scn.zft.positions = scn.zft.positions[:n]
                scn.zft.quats = scn.zft.quats[:n]
        return scn

    dataset = sim.generate_dataset(build, cfg.episodes, cfg.seed)
    write_dataset(out_path, dataset)
    click.echo(
        f"samples={len(dataset)} episodes={cfg.episodes} "
        f"contact_fraction={dataset.contact_fraction():.3f} out={out_path}"
    )


@main.command("train")
@_with_shared
@click.option("--dataset", type=click.Path(), default=None)
@click.option("--overfit", type=int, default=None,
              help="Memorization smoke test on N windows.")
@_cli_errors
def cmd_train(config, seed, out, dataset, overfit):
    """Train the denoiser; write checkpoint and per-epoch metrics CSV."""
    cfg = _load_run_config(config, seed, None, None, out, None)
    if dataset is not None:
        cfg.dataset = dataset
    if cfg.dataset is None:
        raise ConfigError("train needs --dataset or a dataset in the config")
    if not os.path.exists(cfg.dataset):
        raise OSError(f"dataset {cfg.dataset!r} not found")
    data = read_dataset(cfg.dataset)
    model_cfg = DenoiserConfig(**cfg.model)
    train_kwargs = dict(cfg.train)
    train_kwargs.setdefault("seed", cfg.seed)
    tcfg = TrainConfig(**train_kwargs)
    windows = extract_windows(data, model_cfg.tokens)

    out_path = _out_path(cfg.out or "model.ckpt")
    if overfit is not None:
        idx = np.arange(min(overfit, len(windows)))
        windows = windows.subset(idx)
        tcfg.val_fraction = 0.0
        params, log = denoiser.train(windows, model_cfg, tcfg, out_path)
        first, last = log[0]["loss"], log[-1]["loss"]
        click.echo(f"overfit windows={len(windows)} initial_loss={first:.6g} "
                   f"final_loss={last:.6g} ratio={last / first:.4f}")
        return
    params, log = denoiser.train(windows, model_cfg, tcfg, out_path)
    metrics_path = out_path + ".metrics.csv"
    write_csv(metrics_path,
              ["epoch", "loss", "positional_mm", "theta_deg", "alpha_deg"],
              [[r["epoch"], r["loss"], r["positional_mm"], r["theta_deg"],
                r["alpha_deg"]] for r in log])
    best = min((r for r in log if np.isfinite(r["positional_mm"])),
               key=lambda r: r["positional_mm"], default=log[-1])
    click.echo(
        f"checkpoint={out_path} epochs={len(log)} "
        f"best_positional_mm={best['positional_mm']:.4f} "
        f"best_theta_deg={best['theta_deg']:.4f} "
        f"best_alpha_deg={best['alpha_deg']:.4f} metrics={metrics_path}"
    )


def _eval_report(params, windows, steps=None):
    rec_p, rec_q = denoiser.reconstruct_szft(
        params, windows.obs_p, windows.obs_q, windows.wrench, steps=steps)
    return denoiser.metrics(
        rec_p.reshape(-1, 3), rec_q.reshape(-1, 4),
        windows.eq_p.reshape(-1, 3), windows.eq_q.reshape(-1, 4),
        windows.obs_q.reshape(-1, 4),
    )


@main.command("eval")
@_with_shared
@click.option("--dataset", type=click.Path(), default=None)
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--steps", type=int, default=None,
              help="Reverse steps (default: full schedule).")
@_cli_errors
def cmd_eval(config, seed, out, dataset, checkpoint, steps):
    """Reconstruction metrics per split (free-space vs contact)."""
    cfg = _load_run_config(config, seed, None, checkpoint, out, None)
    if dataset is not None:
        cfg.dataset = dataset
    if cfg.dataset is None or cfg.checkpoint is None:
        raise ConfigError("eval needs --dataset and --checkpoint")
    if not os.path.exists(cfg.dataset):
        raise OSError(f"dataset {cfg.dataset!r} not found")
    params = DenoiserParams.load(cfg.checkpoint)
    data = read_dataset(cfg.dataset)
    if abs(data.dt - params.config.dt) > 1e-12:
        raise ConfigError(
            f"dataset dt {data.dt} != checkpoint dt {params.config.dt}")
    windows = extract_windows(data, params.config.tokens)
    contact = windows.contact_mask()
    rows = []
    for label, mask in (("all", np.ones(len(windows), bool)),
                        ("free-space", ~contact), ("contact", contact)):
        if not np.any(mask):
            continue
        m = _eval_report(params, windows.subset(np.flatnonzero(mask)), steps)
        rows.append([label, m.positional_mm, m.theta_deg, m.alpha_deg])
        click.echo(f"{label}: positional_mm={m.positional_mm:.4f} "
                   f"theta_deg={m.theta_deg:.4f} alpha_deg={m.alpha_deg:.4f}")
    if cfg.out:
        write_csv(_out_path(cfg.out),
                  ["split", "positional_mm", "theta_deg", "alpha_deg"], rows)


@main.command("run")
@_with_shared
@click.option("--scenario", default=None, help="Scenario name or file.")
@click.option("--mode", type=click.Choice(sim.CONTROLLER_MODES), default=None)
@click.option("--checkpoint", type=click.Path(), default=None)
@_cli_errors
def cmd_run(config, seed, out, scenario, mode, checkpoint):
    """Run one closed-loop episode and write the tick log CSV."""
    cfg = _load_run_config(config, seed, mode, checkpoint, out, None)
    if scenario is not None:
        cfg.scenario = scenario
    params = DenoiserParams.load(cfg.checkpoint) if cfg.checkpoint else None
    scn = scenarios.build_scenario(cfg.scenario, cfg.seed)
    log = sim.run_episode(scn, cfg.mode, params=params, seed=cfg.seed)
    out_path = _out_path(cfg.out or "episode.csv")
    write_csv(out_path, log.columns, log.rows)
    click.echo(
        f"outcome={log.outcome} ticks={log.rows.shape[0]} "
        f"max_force={log.max_force:.3f} max_speed={log.max_speed:.3f} "
        f"log={out_path}"
    )


_PLOT_PREFIXES = ("f_ext", "m_ext", "K_t", "K_r", "rho_t", "rho_r",
                  "psi_t", "psi_r")


@main.command("plot-csv")
@click.argument("episode_csv", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
@_cli_errors
def cmd_plot_csv(episode_csv, out):
    """Per-axis wrench/stiffness/factor series from a tick log."""
    with open(episode_csv, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    wanted = ["time"] + [
        f"{p}_{a}" for p in _PLOT_PREFIXES
        for a in ("xyz" if not p.startswith("q") else "wxyz")
    ]
    missing = [c for c in wanted if c not in header]
    if missing:
        raise ConfigError(f"episode CSV lacks column(s) {missing}")
    idx = [header.index(c) for c in wanted]
    out_path = _out_path(out or episode_csv.replace(".csv", "") + ".series.csv")
    write_csv(out_path, wanted,
              [[float(r[i]) for i in idx] for r in rows])
    click.echo(f"series={out_path} rows={len(rows)}")


if __name__ == "__main__":
    main()
