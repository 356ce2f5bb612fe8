"""U-Net scorer producing one edit logit per (time, pitch) cell.

The network reads a binary roll as a 1-channel image and emits a linear
activation per cell; softmax over all cells gives the next-edit
distribution. Down blocks run batch norm -> conv -> ReLU -> conv ->
ReLU, tap a skip connection, then max-pool and dropout; up blocks
upsample (nearest x2), concatenate the mirrored skip, and repeat the
norm/conv stack. Filter counts double per down block, starting from
``base_filters``, and halve back up. The head is a linear 1x1 conv.

Rolls whose sides are not divisible by 2**depth are zero-padded up; the
padded border is cropped off before the logits leave the graph, so the
softmax never sees it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import PianoRoll
from ..errors import NumericError, ShapeError
from . import tensor as T
from .tensor import Tensor

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def _pad_up(n: int, multiple: int) -> int:
    return ((n + multiple - 1) // multiple) * multiple


@dataclass(frozen=True)
class UNetConfig:
    """Architecture geometry; ``depth`` down and up blocks."""

    time_steps: int
    pitch_count: int
    depth: int = 3
    base_filters: int = 16
    kernel_size: int = 3
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.depth < 1:
            raise ShapeError("depth must be at least 1")
        if self.kernel_size % 2 != 1:
            raise ShapeError("kernel size must be odd (same padding)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ShapeError("dropout rate must be in [0, 1)")

    @property
    def padded_time(self) -> int:
        return _pad_up(self.time_steps, 1 << self.depth)

    @property
    def padded_pitch(self) -> int:
        return _pad_up(self.pitch_count, 1 << self.depth)

    @property
    def channels(self) -> list[int]:
        return [self.base_filters << i for i in range(self.depth)]

    def to_json_dict(self) -> dict:
        return {
            "time_steps": self.time_steps,
            "pitch_count": self.pitch_count,
            "depth": self.depth,
            "base_filters": self.base_filters,
            "kernel_size": self.kernel_size,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> UNetConfig:
        return cls(
            time_steps=int(obj["time_steps"]),
            pitch_count=int(obj["pitch_count"]),
            depth=int(obj["depth"]),
            base_filters=int(obj["base_filters"]),
            kernel_size=int(obj["kernel_size"]),
            dropout_rate=float(obj["dropout_rate"]),
        )


# desk-scale default, and the full-size configuration from the source setup
DESK_CONFIG = UNetConfig(time_steps=32, pitch_count=48, depth=3, base_filters=16)
PAPER_CONFIG = UNetConfig(time_steps=128, pitch_count=46, depth=5, base_filters=32)


class ScorerModel:
    """Parameter store: float32 trainables plus float32 running stats."""

    def __init__(self, config: UNetConfig, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self.buffers = buffers

    def param_names(self) -> list[str]:
        return list(self.params.keys())

    def copy(self) -> ScorerModel:
        return ScorerModel(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScorerModel):
            return NotImplemented
        if self.config != other.config:
            return False
        if self.params.keys() != other.params.keys() or self.buffers.keys() != other.buffers.keys():
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params) and all(
            np.array_equal(self.buffers[k], other.buffers[k]) for k in self.buffers
        )


def _block_channel_plan(cfg: UNetConfig) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """(in, out) channels for each down block and each up block (deep first)."""
    chans = cfg.channels
    down = []
    c_in = 1
    for c_out in chans:
        down.append((c_in, c_out))
        c_in = c_out
    up = []
    below = chans[-1]  # bottleneck = deepest pooled feature map
    for level in range(cfg.depth - 1, -1, -1):
        skip = chans[level]
        up.append((below + skip, skip))
        below = skip
    return down, up


def init_model(cfg: UNetConfig, seed: int = 0) -> ScorerModel:
    """Fan-in-scaled uniform init for convs; batch norm starts at identity."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    k = cfg.kernel_size

    def add_bn(name: str, channels: int) -> None:
        params[f"{name}.gamma"] = np.ones(channels, dtype=np.float32)
        params[f"{name}.beta"] = np.zeros(channels, dtype=np.float32)
        buffers[f"{name}.running_mean"] = np.zeros(channels, dtype=np.float32)
        buffers[f"{name}.running_var"] = np.ones(channels, dtype=np.float32)

    def add_conv(name: str, c_in: int, c_out: int, kernel: int) -> None:
        bound = float(np.sqrt(1.0 / (c_in * kernel * kernel)))
        params[f"{name}.w"] = rng.uniform(-bound, bound, size=(c_out, c_in, kernel, kernel)).astype(np.float32)
        params[f"{name}.b"] = rng.uniform(-bound, bound, size=c_out).astype(np.float32)

    down, up = _block_channel_plan(cfg)
    for i, (c_in, c_out) in enumerate(down):
        add_bn(f"down{i}.bn", c_in)
        add_conv(f"down{i}.conv1", c_in, c_out, k)
        add_conv(f"down{i}.conv2", c_out, c_out, k)
    for i, (c_in, c_out) in enumerate(up):
        add_bn(f"up{i}.bn", c_in)
        add_conv(f"up{i}.conv1", c_in, c_out, k)
        add_conv(f"up{i}.conv2", c_out, c_out, k)
    add_conv("head", cfg.channels[0], 1, 1)
    return ScorerModel(cfg, params, buffers)


def zero_model(cfg: UNetConfig) -> ScorerModel:
    """All parameters zero; useful as a degenerate fixture."""
    model = init_model(cfg, seed=0)
    for v in model.params.values():
        v[...] = 0
    return model


def _check_finite(t: Tensor, layer: str) -> None:
    if not np.isfinite(t.data).all():
        raise NumericError(f"non-finite activation leaving {layer}")


def build_graph(
    model: ScorerModel,
    batch: np.ndarray,
    training: bool,
    rng: np.random.Generator | None,
    update_stats: bool = True,
) -> tuple[Tensor, dict[str, Tensor]]:
    """Assemble the forward graph for a [N, T, P] batch of rolls.

    Returns the cropped [N, 1, T, P] logit tensor plus the parameter
    tensors keyed by name so gradients can be read back after
    ``backward``.
    """
    cfg = model.config
    n, t_in, p_in = batch.shape
    if (t_in, p_in) != (cfg.time_steps, cfg.pitch_count):
        raise ShapeError(
            f"roll is {t_in}x{p_in} but the model expects {cfg.time_steps}x{cfg.pitch_count}"
        )
    if training and cfg.dropout_rate > 0.0 and rng is None:
        raise ShapeError("training forward with dropout needs an rng")

    handles = {name: Tensor(value, requires_grad=True) for name, value in model.params.items()}

    hp, wp = cfg.padded_time, cfg.padded_pitch
    x_np = np.zeros((n, 1, hp, wp), dtype=np.float64)
    x_np[:, 0, :t_in, :p_in] = batch
    x = Tensor(x_np)

    def bn(name: str, h: Tensor) -> Tensor:
        out = T.batch_norm2d(
            h,
            handles[f"{name}.gamma"],
            handles[f"{name}.beta"],
            model.buffers[f"{name}.running_mean"],
            model.buffers[f"{name}.running_var"],
            training=training,
            momentum=BN_MOMENTUM,
            eps=BN_EPS,
            update_stats=training and update_stats,
        )
        _check_finite(out, name)
        return out

    def convs(name: str, h: Tensor) -> Tensor:
        h = T.relu(T.conv2d(h, handles[f"{name}.conv1.w"], handles[f"{name}.conv1.b"]))
        h = T.relu(T.conv2d(h, handles[f"{name}.conv2.w"], handles[f"{name}.conv2.b"]))
        _check_finite(h, name)
        return h

    skips: list[Tensor] = []
    h = x
    for i in range(cfg.depth):
        h = bn(f"down{i}.bn", h)
        h = convs(f"down{i}", h)
        skips.append(h)
        h = T.max_pool2(h)
        h = T.dropout(h, cfg.dropout_rate, rng, training)

    for i in range(cfg.depth):
        h = T.upsample2(h)
        h = T.concat_channels(h, skips[cfg.depth - 1 - i])
        h = bn(f"up{i}.bn", h)
        h = convs(f"up{i}", h)
        h = T.dropout(h, cfg.dropout_rate, rng, training)

    logits = T.conv2d(h, handles["head.w"], handles["head.b"])  # linear head
    _check_finite(logits, "head")
    logits = T.crop2d(logits, cfg.time_steps, cfg.pitch_count)
    return logits, handles


def forward(
    model: ScorerModel,
    roll: PianoRoll,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Score one roll: (T, P) float64 logits, one per cell.

    ``training=False`` disables dropout and uses the running batch-norm
    statistics, so the result is a pure function of (model, roll).
    """
    batch = roll.cells[None].astype(np.float64)
    logits, _ = build_graph(model, batch, training=training, rng=rng, update_stats=False)
    return logits.data[0, 0]


def kl_uniform_loss(logits: np.ndarray, target_mass: np.ndarray) -> float:
    """KL(U || softmax(logits)) over one grid; U given as a mass grid."""
    if logits.shape != target_mass.shape:
        raise ShapeError(f"logit grid {logits.shape} vs target grid {target_mass.shape}")
    if not (target_mass > 0).any():
        raise ShapeError("target distribution has empty support")
    logp = T.log_softmax_grid(np.asarray(logits, dtype=np.float64))
    mass = np.asarray(target_mass, dtype=np.float64)
    support = mass > 0
    u_logu = np.where(support, mass * np.log(np.where(support, mass, 1.0)), 0.0)
    return float(u_logu.sum() - (mass * logp).sum())


def loss_and_grads(
    model: ScorerModel,
    batch: np.ndarray,
    masses: np.ndarray,
    rng: np.random.Generator | None = None,
    training: bool = True,
    update_stats: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and one gradient array per parameter."""
    logits, handles = build_graph(model, batch, training=training, rng=rng, update_stats=update_stats)
    loss = T.kl_uniform_batch(logits, masses)
    loss.backward()
    grads = {name: handle.grad if handle.grad is not None else np.zeros_like(handle.data) for name, handle in handles.items()}
    return float(loss.data), grads
