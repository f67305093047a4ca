"""Binary training checkpoints.

Layout (all integers little-endian):

    8 bytes   magic b"KIDOTCKP"
    uint32    format version
    uint64    length of the JSON block, then the block (UTF-8): config snapshot,
              completed epoch, history, early-stopping state and parameter layouts
    uint32    number of segments, then per segment:
                  uint16 name length, name (UTF-8), uint64 value count,
                  value count × float64
    uint32    CRC-32 of everything above
"""

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from shared.autodiff.params import ParamLayout, ParamVector
from shared.exceptions import CheckpointError, KidotError
from shared.models.configs import TrainConfig
from shared.models.records import TrainHistory
from shared.networks.convnets import layout_for
from shared.utils.logging import get_logger
from services.training.optimizer import RMSPropState

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b"KIDOTCKP"
CHECKPOINT_VERSION = 1
CHECKPOINT_FILE = "checkpoint.kdt"


@dataclass
class Checkpoint:
    hphi: ParamVector
    critic: ParamVector
    hphi_opt: RMSPropState
    critic_opt: RMSPropState
    cfg: TrainConfig
    epoch: int = 0
    history: TrainHistory = field(default_factory=TrainHistory)
    best_psnr: Optional[float] = None
    stale_epochs: int = 0


def _segment(name: str, values: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    values = np.asarray(values, dtype="<f8").reshape(-1)
    return struct.pack("<H", len(encoded)) + encoded + struct.pack("<Q", values.size) + values.tobytes()


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = {
        "config": ckpt.cfg.model_dump(mode="json", by_alias=True),
        "epoch": ckpt.epoch,
        "history": ckpt.history.model_dump(mode="json"),
        "best_psnr": ckpt.best_psnr,
        "stale_epochs": ckpt.stale_epochs,
        "layouts": {"hphi": ckpt.hphi.layout.to_dict(), "critic": ckpt.critic.layout.to_dict()},
        "optimizer_steps": {"hphi": ckpt.hphi_opt.steps, "critic": ckpt.critic_opt.steps},
    }
    block = json.dumps(header, sort_keys=True).encode("utf-8")
    segments = {
        "hphi": ckpt.hphi.values,
        "critic": ckpt.critic.values,
        "hphi_opt_v": ckpt.hphi_opt.v,
        "critic_opt_v": ckpt.critic_opt.v,
    }
    body = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION) + struct.pack("<Q", len(block)) + block
    body += struct.pack("<I", len(segments))
    for name, values in segments.items():
        body += _segment(name, values)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            raise CheckpointError(f"{self.source}: truncated checkpoint (needed {size} bytes at {self.offset})")
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(blob) < len(CHECKPOINT_MAGIC) + 4 or blob[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    if len(blob) < 16:
        raise CheckpointError(f"{source}: truncated checkpoint")
    reader = _Reader(blob[:-4], source)
    reader.take(8)
    version = reader.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{source}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        header = json.loads(reader.take(reader.unpack("<Q")).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: unreadable config block: {e}")
    segments: Dict[str, np.ndarray] = {}
    for _ in range(reader.unpack("<I")):
        name = reader.take(reader.unpack("<H")).decode("utf-8")
        count = reader.unpack("<Q")
        segments[name] = np.frombuffer(reader.take(8 * count), dtype="<f8").astype(np.float64)
    if reader.offset != len(reader.blob):
        raise CheckpointError(f"{source}: {len(reader.blob) - reader.offset} trailing bytes")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointError(f"{source}: checksum mismatch")

    missing = {"hphi", "critic", "hphi_opt_v", "critic_opt_v"} - set(segments)
    if missing:
        raise CheckpointError(f"{source}: missing segments {sorted(missing)}")
    try:
        cfg = TrainConfig.model_validate(header["config"])
        history = TrainHistory.model_validate(header["history"])
        hphi_layout = ParamLayout.from_dict(header["layouts"]["hphi"])
        critic_layout = ParamLayout.from_dict(header["layouts"]["critic"])
        hphi = ParamVector(segments["hphi"], hphi_layout)
        critic = ParamVector(segments["critic"], critic_layout)
    except (KeyError, TypeError, ValueError, KidotError) as e:
        raise CheckpointError(f"{source}: inconsistent checkpoint contents: {e}")
    if segments["hphi_opt_v"].size != hphi.values.size or segments["critic_opt_v"].size != critic.values.size:
        raise CheckpointError(f"{source}: optimizer state does not match parameter sizes")
    steps = header.get("optimizer_steps", {})
    return Checkpoint(
        hphi=hphi,
        critic=critic,
        hphi_opt=RMSPropState(segments["hphi_opt_v"], cfg.rmsprop_rho, cfg.rmsprop_eps, steps.get("hphi", 0)),
        critic_opt=RMSPropState(segments["critic_opt_v"], cfg.rmsprop_rho, cfg.rmsprop_eps, steps.get("critic", 0)),
        cfg=cfg,
        epoch=int(header.get("epoch", 0)),
        history=history,
        best_psnr=header.get("best_psnr"),
        stale_epochs=int(header.get("stale_epochs", 0)),
    )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """Write atomically: a temporary file is renamed over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(ckpt))
    os.replace(tmp, path)
    logger.info("checkpoint written", path=str(path), epoch=ckpt.epoch)
    return path


def load_checkpoint(path: Union[str, Path], expected: Optional[TrainConfig] = None) -> Checkpoint:
    """Read a checkpoint; with `expected`, refuse one whose parameter layouts differ"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    ckpt = decode_checkpoint(path.read_bytes(), source=str(path))
    if expected is not None:
        if ckpt.hphi.layout != layout_for(expected.regularizer) or ckpt.critic.layout != layout_for(expected.critic):
            raise CheckpointError(
                f"{path}: parameter layout does not match the configured architecture",
                details={"hphi": ckpt.hphi.layout.to_dict(), "critic": ckpt.critic.layout.to_dict()},
            )
    return ckpt
