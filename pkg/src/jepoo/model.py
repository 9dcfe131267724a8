"""The joint pitch/onset/offset network.

A shared bottom of residual-conv (ReConv) blocks feeds three task stacks
(ReConv blocks, (1,2) max pool, frequency flatten, BiLSTM, sigmoid head).
The final pitch output fuses the three stack outputs through one more
BiLSTM; onset/offset outputs come straight from their stacks. Fusion can be
disabled or extended to all tasks with a scaled pitch feature, matching the
ablation configurations.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .errors import ArtifactMismatchError, ConfigError, ShapeError
from .frontend import MelSpectrogram
from .notes import N_KEYS, Prediction

ALL_TASKS = ("pitch", "onset", "offset")
FUSION_MODES = ("pitch_only", "none", "all_tasks")

CHECKPOINT_MAGIC = b"JPCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    mel_bins: int = 229
    shared_conv_layers: int = 6
    stack_conv_layers: int = 8
    skip_connection: bool = True
    bilstm_hidden: int = 64
    shared_channels: tuple = (16, 32, 64)
    stack_channels: int = 64
    fusion_mode: str = "pitch_only"
    fusion_weight: float = 0.5
    tasks: tuple = ALL_TASKS

    def __post_init__(self):
        self.shared_channels = tuple(self.shared_channels)
        self.tasks = tuple(self.tasks)
        if self.shared_conv_layers % 2 or self.stack_conv_layers % 2:
            raise ConfigError("conv layer counts must be even (two per ReConv block)")
        if len(self.shared_channels) != self.shared_conv_layers // 2:
            raise ConfigError(
                f"{self.shared_conv_layers // 2} shared blocks need as many channel widths, "
                f"got {self.shared_channels}"
            )
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}")
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ConfigError(f"fusion weight must be in [0, 1], got {self.fusion_weight}")
        if not self.tasks or any(t not in ALL_TASKS for t in self.tasks):
            raise ConfigError(f"tasks must be a non-empty subset of {ALL_TASKS}")

    @property
    def joint(self) -> bool:
        return len(self.tasks) == 3

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        # The production-sized preset; desk-scale work overrides bilstm_hidden.
        return cls(**{"bilstm_hidden": 768, **overrides})

    def to_dict(self) -> dict:
        return {
            "mel_bins": self.mel_bins,
            "shared_conv_layers": self.shared_conv_layers,
            "stack_conv_layers": self.stack_conv_layers,
            "skip_connection": self.skip_connection,
            "bilstm_hidden": self.bilstm_hidden,
            "shared_channels": list(self.shared_channels),
            "stack_channels": self.stack_channels,
            "fusion_mode": self.fusion_mode,
            "fusion_weight": self.fusion_weight,
            "tasks": list(self.tasks),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ReConvBlock:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ws: Tensor | None = None
    bs: Tensor | None = None


@dataclass
class LstmDir:
    w_ih: Tensor
    w_hh: Tensor
    b: Tensor

    def as_tuple(self):
        return (self.w_ih, self.w_hh, self.b)


@dataclass
class BiLstmHead:
    """BiLSTM over features plus a dense sigmoid head to 88 keys."""

    fwd: LstmDir
    bwd: LstmDir
    w_out: Tensor
    b_out: Tensor


@dataclass
class TaskStack:
    blocks: list
    head: BiLstmHead


@dataclass
class PmlHead:
    """Learnable map from Pareto weights to final task weights (before softmax)."""

    w: Tensor
    b: Tensor


class ModelParams:
    """All learnable tensors, in a fixed declaration order for serialization."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.all: list[Tensor] = []
        self._rng = rng

        in_ch = 1
        self.shared: list[ReConvBlock] = []
        for i, out_ch in enumerate(cfg.shared_channels):
            self.shared.append(self._reconv(f"shared.{i}", in_ch, out_ch))
            in_ch = out_ch
        shared_out = in_ch

        lstm_in = cfg.stack_channels * (cfg.mel_bins // 2)
        self.stacks: dict[str, TaskStack] = {}
        for task in cfg.tasks:
            blocks = []
            ch = shared_out
            for j in range(cfg.stack_conv_layers // 2):
                blocks.append(self._reconv(f"{task}.{j}", ch, cfg.stack_channels))
                ch = cfg.stack_channels
            head = self._bilstm_head(task, lstm_in)
            self.stacks[task] = TaskStack(blocks, head)

        self.fusion: dict[str, BiLstmHead] = {}
        if cfg.joint and cfg.fusion_mode != "none":
            self.fusion["pitch"] = self._bilstm_head("fusion.pitch", 3 * N_KEYS)
            if cfg.fusion_mode == "all_tasks":
                self.fusion["onset"] = self._bilstm_head("fusion.onset", 2 * N_KEYS)
                self.fusion["offset"] = self._bilstm_head("fusion.offset", 2 * N_KEYS)

        self.pml_head: PmlHead | None = None
        if cfg.joint:
            n = len(cfg.tasks)
            self.pml_head = PmlHead(
                self._param("pml.w", (n, n), kind="zeros"),
                self._param("pml.b", (n,), kind="zeros"),
            )

        self.shared_tensors: list[Tensor] = [
            t for t in self.all if t.name.startswith("shared.")
        ]

    def _param(self, name, shape, kind="conv", fan_in=None) -> Tensor:
        if self._rng is None or kind == "zeros":
            data = np.zeros(shape)
        elif kind == "conv":
            fan = fan_in if fan_in is not None else int(np.prod(shape[1:]))
            data = self._rng.standard_normal(shape) * np.sqrt(2.0 / fan)
        elif kind == "uniform":
            bound = 1.0 / np.sqrt(fan_in)
            data = self._rng.uniform(-bound, bound, shape)
        else:
            raise ValueError(kind)
        t = Tensor(data, requires_grad=True, name=name)
        self.all.append(t)
        return t

    def _reconv(self, prefix, in_ch, out_ch) -> ReConvBlock:
        blk = ReConvBlock(
            self._param(f"{prefix}.w1", (out_ch, in_ch, 3, 3)),
            self._param(f"{prefix}.b1", (out_ch,), kind="zeros"),
            self._param(f"{prefix}.w2", (out_ch, out_ch, 3, 3)),
            self._param(f"{prefix}.b2", (out_ch,), kind="zeros"),
        )
        if self.cfg.skip_connection:
            blk.ws = self._param(f"{prefix}.ws", (out_ch, in_ch, 1, 1))
            blk.bs = self._param(f"{prefix}.bs", (out_ch,), kind="zeros")
        return blk

    def _lstm_dir(self, prefix, input_dim) -> LstmDir:
        h = self.cfg.bilstm_hidden
        d = LstmDir(
            self._param(f"{prefix}.w_ih", (input_dim, 4 * h), kind="uniform", fan_in=h),
            self._param(f"{prefix}.w_hh", (h, 4 * h), kind="uniform", fan_in=h),
            self._param(f"{prefix}.b", (4 * h,), kind="zeros"),
        )
        if self._rng is not None:
            d.b.data[h : 2 * h] = 1.0  # open the forget gate at init
        return d

    def _bilstm_head(self, prefix, input_dim) -> BiLstmHead:
        h = self.cfg.bilstm_hidden
        return BiLstmHead(
            self._lstm_dir(f"{prefix}.f", input_dim),
            self._lstm_dir(f"{prefix}.r", input_dim),
            self._param(f"{prefix}.w_out", (2 * h, N_KEYS), kind="uniform", fan_in=2 * h),
            self._param(f"{prefix}.b_out", (N_KEYS,), kind="zeros"),
        )

    def zero_grads(self):
        for t in self.all:
            t.grad = None

    def shared_grad_vector(self) -> np.ndarray:
        chunks = []
        for t in self.shared_tensors:
            chunks.append(
                np.zeros(t.size) if t.grad is None else t.grad.ravel()
            )
        return np.concatenate(chunks)

    def copy(self) -> "ModelParams":
        out = ModelParams(self.cfg, rng=None)
        for dst, src in zip(out.all, self.all):
            dst.data[...] = src.data
        return out


def reconv_forward(x: Tensor, block: ReConvBlock, skip_connection: bool) -> Tensor:
    """Two 3x3 convs (ReLU between), optional 1x1 skip path, summed, then ReLU."""
    h = ops.relu(ops.conv2d(x, block.w1, block.b1))
    h = ops.conv2d(h, block.w2, block.b2)
    if skip_connection:
        if block.ws is None:
            raise ConfigError("skip_connection enabled but block has no skip params")
        h = ops.add(h, ops.conv2d(x, block.ws, block.bs))
    return ops.relu(h)


def _run_bilstm_head(x: Tensor, head: BiLstmHead) -> Tensor:
    h = ops.bilstm(x, head.fwd.as_tuple(), head.bwd.as_tuple())
    return ops.sigmoid(ops.linear(h, head.w_out, head.b_out))


def _stack_forward(x: Tensor, stack: TaskStack, cfg: ModelConfig) -> Tensor:
    h = x
    for block in stack.blocks:
        h = reconv_forward(h, block, cfg.skip_connection)
    h = ops.maxpool12(h)
    n, c, t, f2 = h.shape
    h = ops.reshape(ops.transpose(h, (0, 2, 1, 3)), (n, t, c * f2))
    return _run_bilstm_head(h, stack.head)


def forward(x: Tensor, params: ModelParams, cfg: ModelConfig) -> dict[str, Tensor]:
    """Batched forward pass: x[N, 1, T, F] -> per-task probabilities [N, T, 88]."""
    if x.shape[3] != cfg.mel_bins:
        raise ShapeError(f"input has {x.shape[3]} mel bins, model expects {cfg.mel_bins}")
    h = x
    for block in params.shared:
        h = reconv_forward(h, block, cfg.skip_connection)

    stack_out = {task: _stack_forward(h, params.stacks[task], cfg) for task in cfg.tasks}
    out = dict(stack_out)

    if cfg.joint and cfg.fusion_mode != "none":
        fused_in = ops.concat(
            [stack_out["pitch"], stack_out["onset"], stack_out["offset"]], axis=-1
        )
        out["pitch"] = _run_bilstm_head(fused_in, params.fusion["pitch"])
        if cfg.fusion_mode == "all_tasks":
            scaled_pitch = ops.scale(stack_out["pitch"], cfg.fusion_weight)
            for task in ("onset", "offset"):
                fused = ops.concat([stack_out[task], scaled_pitch], axis=-1)
                out[task] = _run_bilstm_head(fused, params.fusion[task])
    return out


def predict(mel: MelSpectrogram, params: ModelParams, cfg: ModelConfig) -> Prediction:
    """Single-clip inference (no gradients recorded)."""
    x = Tensor(mel.values[None, None, :, :])
    out = forward(x, params, cfg)
    return Prediction(
        out["pitch"].data[0],
        out["onset"].data[0] if "onset" in out else None,
        out["offset"].data[0] if "offset" in out else None,
    )


def save_checkpoint(path, params: ModelParams) -> None:
    """Header (magic, version, config JSON) + raw little-endian float64 tensors."""
    header = json.dumps(params.cfg.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for t in params.all:
            fh.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ArtifactMismatchError(f"{path}: not a checkpoint (magic {magic!r})")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ArtifactMismatchError(f"{path}: unsupported checkpoint version {version}")
        cfg = ModelConfig.from_dict(json.loads(fh.read(header_len).decode()))
        params = ModelParams(cfg, rng=None)
        for t in params.all:
            raw = fh.read(8 * t.size)
            if len(raw) != 8 * t.size:
                raise ArtifactMismatchError(
                    f"{path}: truncated at tensor {t.name} "
                    f"(wanted {t.size} values, file ended early)"
                )
            t.data[...] = np.frombuffer(raw, dtype="<f8").reshape(t.shape)
        trailing = fh.read(1)
    if trailing:
        raise ArtifactMismatchError(f"{path}: trailing bytes after final tensor")
    return params
