"""Binary ``.indm`` checkpoints.

Layout (little-endian): magic ``b"INDM"``, u32 format version, u64 length
plus UTF-8 YAML config snapshot, u64 step counter, u32 array count, then per
array: u32 name length, name, u32 ndim, u64 per dimension, and the f64 data.
"""

import io
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, Optional, Union

import numpy as np
import yaml

from indm_core.autodiff.optim import Adam
from indm_core.config import dump_run_config, run_config_from_dict
from indm_core.exceptions.indm_exceptions import CheckpointException, ConfigException
from indm_core.models.config import RunConfig
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreField

logger = logging.getLogger(__name__)

MAGIC = b"INDM"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Everything needed to resume training or evaluate a run."""

    config: RunConfig
    step: int
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def section(self, prefix: str) -> Dict[str, np.ndarray]:
        """Arrays stored under ``prefix/``, keyed by the remaining name."""
        head = prefix + "/"
        return {k[len(head):]: v for k, v in self.arrays.items() if k.startswith(head)}

    def restore(
        self,
        flow: FlowTransform,
        score: ScoreField,
        flow_opt: Optional[Adam] = None,
        score_opt: Optional[Adam] = None,
    ) -> None:
        """Load parameters, the EMA shadow and optimizer moments into live objects."""
        flow.params.load_state_dict(self.section("flow"))
        score.params.load_state_dict(self.section("score"))
        ema = self.section("ema")
        score.ema = {name: ema[name].copy() for name in score.params.names()} if ema else score.params.state_dict()
        for opt, prefix in ((flow_opt, "flow_opt"), (score_opt, "score_opt")):
            if opt is None:
                continue
            step = self.arrays.get(f"{prefix}.step")
            opt.load_state_dict(
                {
                    "step": int(step) if step is not None else 0,
                    "m": self.section(f"{prefix}.m"),
                    "v": self.section(f"{prefix}.v"),
                }
            )


def collect_arrays(
    flow: FlowTransform,
    score: ScoreField,
    flow_opt: Optional[Adam] = None,
    score_opt: Optional[Adam] = None,
) -> Dict[str, np.ndarray]:
    arrays: Dict[str, np.ndarray] = {}
    arrays.update({f"flow/{k}": v for k, v in flow.params.state_dict().items()})
    arrays.update({f"score/{k}": v for k, v in score.params.state_dict().items()})
    arrays.update({f"ema/{k}": np.asarray(v) for k, v in score.ema.items()})
    for opt, prefix in ((flow_opt, "flow_opt"), (score_opt, "score_opt")):
        if opt is None:
            continue
        state = opt.state_dict()
        arrays[f"{prefix}.step"] = np.asarray(float(state["step"]))
        arrays.update({f"{prefix}.m/{k}": v for k, v in state["m"].items()})
        arrays.update({f"{prefix}.v/{k}": v for k, v in state["v"].items()})
    return arrays


def _write_bytes(handle: BinaryIO, payload: bytes) -> None:
    handle.write(struct.pack("<Q", len(payload)))
    handle.write(payload)


def encode(checkpoint: Checkpoint) -> bytes:
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack("<I", FORMAT_VERSION))
    _write_bytes(buffer, dump_run_config(checkpoint.config).encode("utf-8"))
    buffer.write(struct.pack("<Q", int(checkpoint.step)))
    buffer.write(struct.pack("<I", len(checkpoint.arrays)))
    for name, array in checkpoint.arrays.items():
        array = np.asarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        buffer.write(struct.pack("<I", len(encoded)))
        buffer.write(encoded)
        buffer.write(struct.pack("<I", array.ndim))
        for dim in array.shape:
            buffer.write(struct.pack("<Q", dim))
        buffer.write(array.tobytes(order="C"))
    return buffer.getvalue()


def _read(handle: BinaryIO, size: int, path: str) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise CheckpointException("Truncated checkpoint", path)
    return data


def decode(payload: bytes, path: str = "<memory>") -> Checkpoint:
    """Parse checkpoint bytes.

    Raises:
        CheckpointException: On a bad magic, a version mismatch or truncation
    """
    handle = io.BytesIO(payload)
    if _read(handle, 4, path) != MAGIC:
        raise CheckpointException("Not an INDM checkpoint (bad magic)", path)
    (version,) = struct.unpack("<I", _read(handle, 4, path))
    if version != FORMAT_VERSION:
        raise CheckpointException(
            f"Unsupported checkpoint format version {version} (expected {FORMAT_VERSION})",
            path,
            context={"expected_version": FORMAT_VERSION, "actual_version": version},
        )
    (length,) = struct.unpack("<Q", _read(handle, 8, path))
    try:
        config = run_config_from_dict(yaml.safe_load(_read(handle, length, path).decode("utf-8")))
    except (yaml.YAMLError, ConfigException) as e:
        raise CheckpointException(f"Invalid config snapshot: {e}", path)
    (step,) = struct.unpack("<Q", _read(handle, 8, path))
    (count,) = struct.unpack("<I", _read(handle, 4, path))
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", _read(handle, 4, path))
        name = _read(handle, name_len, path).decode("utf-8")
        (ndim,) = struct.unpack("<I", _read(handle, 4, path))
        shape = struct.unpack(f"<{ndim}Q", _read(handle, 8 * ndim, path)) if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(_read(handle, 8 * size, path), dtype="<f8")
        arrays[name] = data.astype(np.float64).reshape(shape)
    return Checkpoint(config=config, step=int(step), arrays=arrays)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    """Write atomically: a temporary file in the target directory, then rename.

    Raises:
        CheckpointException: If the file cannot be written
    """
    path = Path(path)
    payload = encode(checkpoint)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as e:
        logger.error(f"Could not write checkpoint {path}: {e}")
        raise CheckpointException(f"Could not write checkpoint: {e}", str(path))
    logger.debug(f"Saved checkpoint at step {checkpoint.step} to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        CheckpointException: If the file is missing or malformed
    """
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise CheckpointException(f"Could not read checkpoint: {e}", str(path))
    return decode(payload, str(path))
