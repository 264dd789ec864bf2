"""Dataset, checkpoint, and log-file persistence.

File formats, all deterministic byte-for-byte given equal inputs:

* Dataset: JSON Lines, one record per sample with keys
  ``episode, t, p, q, p0, q0, F_ext``.  Quaternions serialize as
  ``(w, x, y, z)``.  Floats are written with 17 significant digits, which
  round-trips IEEE float64 exactly.
* Checkpoint: magic ``ZFTCKPT\\x00``, an 8-byte little-endian header
  length, a canonical JSON header (format version, model config, schedule,
  normalization statistics, tensor index), then raw little-endian float32
  tensor payloads.  Version or shape mismatches fail loudly, naming the
  offending field.
* Tick logs and metrics: plain CSV with a fixed, documented column order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

CHECKPOINT_MAGIC = b"ZFTCKPT\x00"
CHECKPOINT_VERSION = 1


def fmt(x: float) -> str:
    """Format a float with 17 significant digits (lossless for float64)."""
    return format(float(x), ".17g")


def _fmt_list(values) -> str:
    return "[" + ",".join(fmt(v) for v in values) + "]"


@dataclass
class Dataset:
    """Flat sample arrays; ``episode`` marks episode membership per row."""

    t: np.ndarray  # (M,) seconds, nondecreasing within an episode
    p: np.ndarray  # (M, 3) observed position
    q: np.ndarray  # (M, 4) observed quaternion
    p0: np.ndarray  # (M, 3) equilibrium position
    q0: np.ndarray  # (M, 4) equilibrium quaternion
    wrench: np.ndarray  # (M, 6) external wrench (N, N, N, Nm, Nm, Nm)
    episode: np.ndarray  # (M,) int episode id

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def dt(self) -> float:
        for ep in np.unique(self.episode):
            idx = np.flatnonzero(self.episode == ep)
            if idx.size >= 2:
                return float(self.t[idx[1]] - self.t[idx[0]])
        raise ConfigError("dataset has no episode with >= 2 samples")

    def contact_fraction(self, force_threshold: float = 0.5) -> float:
        force = np.linalg.norm(self.wrench[:, :3], axis=1)
        return float(np.mean(force > force_threshold))


def write_dataset(path, dataset: Dataset):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(dataset)):
            fh.write(
                '{"episode":%d,"t":%s,"p":%s,"q":%s,"p0":%s,"q0":%s,"F_ext":%s}\n'
                % (
                    int(dataset.episode[i]),
                    fmt(dataset.t[i]),
                    _fmt_list(dataset.p[i]),
                    _fmt_list(dataset.q[i]),
                    _fmt_list(dataset.p0[i]),
                    _fmt_list(dataset.q0[i]),
                    _fmt_list(dataset.wrench[i]),
                )
            )


def read_dataset(path) -> Dataset:
    rows = {k: [] for k in ("episode", "t", "p", "q", "p0", "q0", "F_ext")}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                for k in rows:
                    rows[k].append(rec[k])
            except (json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"{path}: bad record on line {line_no}: {exc}")
    return Dataset(
        t=np.asarray(rows["t"], dtype=float),
        p=np.asarray(rows["p"], dtype=float),
        q=np.asarray(rows["q"], dtype=float),
        p0=np.asarray(rows["p0"], dtype=float),
        q0=np.asarray(rows["q0"], dtype=float),
        wrench=np.asarray(rows["F_ext"], dtype=float),
        episode=np.asarray(rows["episode"], dtype=int),
    )


@dataclass
class WindowSet:
    """Fixed-length sliding windows (stride 1) cut from dataset episodes."""

    obs_p: np.ndarray  # (W, N, 3)
    obs_q: np.ndarray  # (W, N, 4)
    eq_p: np.ndarray  # (W, N, 3)
    eq_q: np.ndarray  # (W, N, 4)
    wrench: np.ndarray  # (W, N, 6)
    episode: np.ndarray  # (W,)
    dt: float

    def __len__(self) -> int:
        return self.obs_p.shape[0]

    @property
    def tokens(self) -> int:
        return self.obs_p.shape[1]

    def subset(self, idx) -> "WindowSet":
        return WindowSet(
            obs_p=self.obs_p[idx],
            obs_q=self.obs_q[idx],
            eq_p=self.eq_p[idx],
            eq_q=self.eq_q[idx],
            wrench=self.wrench[idx],
            episode=self.episode[idx],
            dt=self.dt,
        )

    def contact_mask(self, force_threshold: float = 0.5) -> np.ndarray:
        """True for windows containing any tick with force above threshold."""
        force = np.linalg.norm(self.wrench[:, :, :3], axis=2)
        return np.any(force > force_threshold, axis=1)


def extract_windows(dataset: Dataset, tokens: int) -> WindowSet:
    """Cut every stride-1 window of length ``tokens`` inside each episode."""
    if tokens < 1:
        raise ConfigError("window length must be >= 1")
    obs_p, obs_q, eq_p, eq_q, wr, eps = [], [], [], [], [], []
    for ep in np.unique(dataset.episode):
        idx = np.flatnonzero(dataset.episode == ep)
        if idx.size < tokens:
            continue
        starts = np.arange(idx.size - tokens + 1)
        win = idx[starts[:, None] + np.arange(tokens)[None, :]]
        obs_p.append(dataset.p[win])
        obs_q.append(dataset.q[win])
        eq_p.append(dataset.p0[win])
        eq_q.append(dataset.q0[win])
        wr.append(dataset.wrench[win])
        eps.append(np.full(starts.size, ep, dtype=int))
    if not obs_p:
        raise ConfigError(f"no episode long enough for {tokens}-sample windows")
    return WindowSet(
        obs_p=np.concatenate(obs_p),
        obs_q=np.concatenate(obs_q),
        eq_p=np.concatenate(eq_p),
        eq_q=np.concatenate(eq_q),
        wrench=np.concatenate(wr),
        episode=np.concatenate(eps),
        dt=dataset.dt,
    )


def save_checkpoint(path, config_dict: dict, schedule_dict: dict, norm_dict: dict,
                    tensors: dict):
    """Write the versioned checkpoint container (little-endian float32)."""
    index = []
    payload = bytearray()
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        index.append(
            {"name": name, "shape": list(data.shape), "dtype": "<f4",
             "offset": len(payload), "nbytes": data.nbytes}
        )
        payload.extend(data.tobytes())
    header = {
        "format": "zftlearn-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": config_dict,
        "schedule": schedule_dict,
        "norm": norm_dict,
        "tensors": index,
        "payload_bytes": len(payload),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path):
    """Read a checkpoint; returns (config, schedule, norm, tensors as float64).

    Raises:
        ConfigError: wrong magic/version or truncated payload.
        ShapeError: tensor byte count inconsistent with its declared shape.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a zftlearn checkpoint")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(
                f"{path}: checkpoint version {header.get('version')} "
                f"!= supported {CHECKPOINT_VERSION}"
            )
        payload = fh.read(header["payload_bytes"])
        if len(payload) != header["payload_bytes"]:
            raise ConfigError(f"{path}: truncated payload")
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        expected = int(np.prod(shape)) * 4
        if entry["nbytes"] != expected:
            raise ShapeError(
                f"tensor {entry['name']!r}: {entry['nbytes']} bytes "
                f"inconsistent with shape {shape}"
            )
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        tensors[entry["name"]] = (
            np.frombuffer(raw, dtype="<f4").reshape(shape).astype(float)
        )
    return header["config"], header["schedule"], header["norm"], tensors


def write_csv(path, columns: list[str], rows):
    """Write a CSV with 17-significant-digit floats; ints pass through."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = [
                str(v) if isinstance(v, (int, str)) else fmt(v) for v in row
            ]
            fh.write(",".join(cells) + "\n")
