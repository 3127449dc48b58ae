"""ADAM training loop, checkpointing, and the training log.

Determinism contract: (seed, config, manifest) fixes the whole trajectory
bitwise. The data-sampling RNG state rides along in every checkpoint, so an
interrupted run resumed from disk replays the exact same batches.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .config import HipaConfig, config_to_text, parse_config_text
from .data import SRDataset, augment, sample_crop, stack_pairs
from .errors import (
    ConfigError,
    ConfigMismatch,
    CorruptCheckpoint,
    MissingGrad,
    NanLossError,
)
from .model import HipaModel
from .nn import ParamStore
from .rng import Xoshiro256

DATA_STREAM = 1  # rng stream id for batch sampling/augmentation

CHECKPOINT_MAGIC = b"HIPA"
CHECKPOINT_VERSION = 1


class Adam:
    """ADAM with bias correction over a ParamStore, updating in place."""

    def __init__(self, params: ParamStore, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                raise MissingGrad(f"parameter {name} has no gradient")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / corr1) / (np.sqrt(v / corr2) + self.eps)
            p.data -= (self.lr * update).astype(p.data.dtype, copy=False)


# ---------------------------------------------------------------------------
# checkpoint binary format
# ---------------------------------------------------------------------------
# magic "HIPA" | u32 version | u32 config-blob length | config text (UTF-8)
# | u32 tensor count | tensors | u32 adam tensor count | adam tensors
# | u64 step | 32-byte RNG state
# tensor framing: u16 name length | name UTF-8 | u8 ndim | u32 dims LE
# | float32 LE data


@dataclass
class Checkpoint:
    config: HipaConfig
    params: dict
    adam_m: dict
    adam_v: dict
    step: int
    rng_state: bytes


def _write_tensor(out: bytearray, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    out += struct.pack("<H", len(encoded))
    out += encoded
    out += struct.pack("<B", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += np.ascontiguousarray(arr, dtype="<f4").tobytes()


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptCheckpoint(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.blob) - self.pos}"
            )
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def _read_tensor(r: _Reader) -> tuple:
    name = r.take(r.u16()).decode("utf-8")
    ndim = r.u8()
    dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
    count = 1
    for d in dims:
        count *= d
    data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).copy()
    return name, data


def serialize_checkpoint(ckpt: Checkpoint) -> bytes:
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    blob = config_to_text(ckpt.config).encode("utf-8")
    out += struct.pack("<I", len(blob))
    out += blob
    out += struct.pack("<I", len(ckpt.params))
    for name, arr in ckpt.params.items():
        _write_tensor(out, name, arr)
    out += struct.pack("<I", len(ckpt.adam_m) + len(ckpt.adam_v))
    for name, arr in ckpt.adam_m.items():
        _write_tensor(out, f"{name}.m", arr)
    for name, arr in ckpt.adam_v.items():
        _write_tensor(out, f"{name}.v", arr)
    out += struct.pack("<Q", ckpt.step)
    if len(ckpt.rng_state) != Xoshiro256.STATE_BYTES:
        raise ValueError("rng state must be 32 bytes")
    out += ckpt.rng_state
    return bytes(out)


def deserialize_checkpoint(blob: bytes) -> Checkpoint:
    r = _Reader(blob)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("bad magic; not a checkpoint file")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    try:
        config = parse_config_text(r.take(r.u32()).decode("utf-8"))
    except ConfigError as exc:
        raise CorruptCheckpoint(f"embedded config unreadable: {exc}")
    params = {}
    for _ in range(r.u32()):
        name, arr = _read_tensor(r)
        params[name] = arr
    adam_m, adam_v = {}, {}
    for _ in range(r.u32()):
        name, arr = _read_tensor(r)
        if name.endswith(".m"):
            adam_m[name[:-2]] = arr
        elif name.endswith(".v"):
            adam_v[name[:-2]] = arr
        else:
            raise CorruptCheckpoint(f"unexpected optimizer tensor {name!r}")
    step = r.u64()
    rng_state = r.take(Xoshiro256.STATE_BYTES)
    if r.pos != len(blob):
        raise CorruptCheckpoint(f"{len(blob) - r.pos} trailing bytes")

    ckpt = Checkpoint(config, params, adam_m, adam_v, step, rng_state)
    _validate_against_config(ckpt)
    return ckpt


def _validate_against_config(ckpt: Checkpoint) -> None:
    """Tensor names/shapes must match a model built from the embedded config."""
    reference = HipaModel(ckpt.config).params
    if list(ckpt.params) != reference.names():
        raise ConfigMismatch(
            "checkpoint parameter set does not match its embedded config"
        )
    for name, arr in ckpt.params.items():
        if arr.shape != reference[name].shape:
            raise ConfigMismatch(
                f"checkpoint tensor {name} has shape {arr.shape}, "
                f"config implies {reference[name].shape}"
            )
    for table in (ckpt.adam_m, ckpt.adam_v):
        if list(table) != list(ckpt.params):
            raise ConfigMismatch("optimizer state does not cover the parameter set")
        for name, arr in table.items():
            if arr.shape != ckpt.params[name].shape:
                raise ConfigMismatch(f"optimizer tensor {name} shape mismatch")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(serialize_checkpoint(ckpt))
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return deserialize_checkpoint(path.read_bytes())


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    losses: list


def _snapshot(model: HipaModel, adam: Adam, rng: Xoshiro256, step: int) -> Checkpoint:
    return Checkpoint(
        config=model.config,
        params=model.params.export_arrays(),
        adam_m={k: v.copy() for k, v in adam.m.items()},
        adam_v={k: v.copy() for k, v in adam.v.items()},
        step=step,
        rng_state=rng.state_bytes(),
    )


def restore_training_state(model: HipaModel, adam: Adam, rng: Xoshiro256,
                           ckpt: Checkpoint) -> int:
    """Load checkpoint contents into live objects; returns the step count."""
    model.params.load_arrays(ckpt.params)
    for name in adam.m:
        adam.m[name] = ckpt.adam_m[name].copy()
        adam.v[name] = ckpt.adam_v[name].copy()
    adam.t = ckpt.step
    rng.set_state_bytes(ckpt.rng_state)
    return ckpt.step


def sample_batch(dataset: SRDataset, config: HipaConfig, rng: Xoshiro256):
    """Draw, crop and augment one batch. Draw order is part of the
    determinism contract: index, crop offsets, augmentation, per sample."""
    pairs = []
    ids = []
    for _ in range(config.batch_size):
        pair = dataset[rng.randint(len(dataset))]
        pair = sample_crop(pair, config.lr_crop, rng)
        pair = augment(pair, rng)
        pairs.append(pair)
        ids.append(pair.id)
    lr, hr = stack_pairs(pairs)
    return lr, hr, ids


def train(config: HipaConfig, manifest, steps: int, out_dir,
          resume=None, log_name: str = "train_log.csv") -> TrainResult:
    """Optimize for `steps` total steps; returns paths of the final artifacts.

    `manifest` is a DatasetManifest or an SRDataset. With `resume`, training
    continues from the checkpoint's step counter up to `steps`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = manifest if isinstance(manifest, SRDataset) else SRDataset(manifest)

    model = HipaModel(config)
    adam = Adam(model.params, lr=config.lr)
    rng = Xoshiro256(config.seed, stream=DATA_STREAM)
    start = 0
    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        if config_to_text(ckpt.config) != config_to_text(config):
            raise ConfigMismatch("resume checkpoint was written with a different config")
        start = restore_training_state(model, adam, rng, ckpt)

    losses = []
    log_rows = []
    for step in range(start + 1, steps + 1):
        t0 = time.perf_counter()
        lr_batch, hr_batch, ids = sample_batch(dataset, config, rng)
        with Tape() as tape:
            preds = model.forward(lr_batch)
            loss = model.loss(preds, hr_batch)
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise NanLossError(step, ids)
        tape.backward(loss)
        adam.step()
        model.params.zero_grads()
        elapsed = time.perf_counter() - t0
        losses.append(loss_value)
        log_rows.append(f"{step},{loss_value:.8f},{elapsed:.4f}")
        if step % config.checkpoint_every == 0 and step < steps:
            save_checkpoint(_snapshot(model, adam, rng, step),
                            out_dir / f"ckpt_{step:06d}.bin")

    final_path = out_dir / "ckpt_final.bin"
    save_checkpoint(_snapshot(model, adam, rng, steps), final_path)

    log_path = out_dir / log_name
    tmp = log_path.with_name(log_path.name + ".tmp")
    tmp.write_text("step,loss,seconds\n" + "\n".join(log_rows) + "\n", encoding="utf-8")
    tmp.replace(log_path)
    return TrainResult(checkpoint_path=final_path, log_path=log_path, losses=losses)


def model_from_checkpoint(ckpt: Checkpoint) -> HipaModel:
    model = HipaModel(ckpt.config)
    model.params.load_arrays(ckpt.params)
    return model
