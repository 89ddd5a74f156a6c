"""The five benchmarked models, built as graphs over the autodiff core.

Families:

* ``pulsenet`` -- three parallel 1-D conv branches with distinct kernel
  sizes, each globally max-pooled, concatenated into a small dense head.
  The stock kernel sizes are (50, 30, 20); the ``_var1`` (50, 10, 4) and
  ``_var2`` (15, 8, 2) presets probe shorter time correlations, the latter
  sized for 0.4 s inputs.
* ``vgg16_inv`` -- a 1-D VGG16: five conv blocks (2-2-3-3-3 layers of
  kernel 3) with halving max-pools and an inverted (wide-early) channel
  progression, plus three dense layers: 16 weight layers total.
* ``cnn2d`` -- three conv(3x3)/pool(2x2) blocks over the log-magnitude
  spectrogram, global max-pool, one dense output layer.

All convolutions are valid (no padding). A halving pool is skipped when the
remaining extent is shorter than the pool, so a 1-second window at 200 Hz
is a legal vgg16_inv input; builders raise a shape error (reporting the
required minimum) when a convolution itself would not fit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .autodiff import (
    Graph,
    Tensor,
    concat,
    dense,
    global_maxpool,
    init_uniform,
    maxpool,
    relu,
    reshape,
    _conv1d_batched,
    _conv2d_batched,
)
from .errors import ShapeError, ValidationError
from .seeding import derive_seed

FAMILIES = ("pulsenet", "vgg16_inv", "cnn2d")

_VGG_BLOCK_CONVS = (2, 2, 3, 3, 3)


@dataclass(frozen=True)
class ArchitectureSpec:
    family: str
    kernel_sizes: tuple[int, int, int] = (50, 30, 20)
    branch_channels: int = 32
    hidden_units: int = 64
    channel_sequence: tuple[int, ...] = (512, 512, 256, 128, 64)
    block_channels: tuple[int, ...] = (16, 32, 64)
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, "channel_sequence", tuple(int(c) for c in self.channel_sequence))
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        if self.family not in FAMILIES:
            raise ValidationError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if len(self.kernel_sizes) != 3 or any(k < 2 for k in self.kernel_sizes):
            raise ValidationError("kernel_sizes must be three integers >= 2")
        if self.branch_channels < 1 or self.hidden_units < 1 or self.n_classes < 2:
            raise ValidationError("channel, hidden and class counts must be positive")
        if len(self.channel_sequence) != len(_VGG_BLOCK_CONVS):
            raise ValidationError(
                f"channel_sequence must list {len(_VGG_BLOCK_CONVS)} block widths"
            )
        if any(c < 1 for c in self.channel_sequence) or any(c < 1 for c in self.block_channels):
            raise ValidationError("all channel counts must be >= 1")
        if not self.block_channels:
            raise ValidationError("block_channels must be non-empty")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ArchitectureSpec":
        return cls(**doc)


PRESETS = {
    "pulsenet": ArchitectureSpec("pulsenet", kernel_sizes=(50, 30, 20)),
    "pulsenet_var1": ArchitectureSpec("pulsenet", kernel_sizes=(50, 10, 4)),
    "pulsenet_var2": ArchitectureSpec("pulsenet", kernel_sizes=(15, 8, 2)),
    "vgg16_inv": ArchitectureSpec("vgg16_inv"),
    "cnn2d": ArchitectureSpec("cnn2d"),
}


def preset(name: str) -> ArchitectureSpec:
    if name not in PRESETS:
        raise ValidationError(
            f"unknown architecture {name!r}; valid names: {', '.join(sorted(PRESETS))}"
        )
    return PRESETS[name]


def arch_name(spec: ArchitectureSpec) -> str:
    if spec.family == "pulsenet":
        return "pulsenet[%d,%d,%d]" % spec.kernel_sizes
    return spec.family


def _ensure_batched_1d(x: Tensor) -> Tensor:
    if x.values.ndim == 2:
        return reshape(x, (1,) + x.values.shape)
    if x.values.ndim != 3:
        raise ShapeError("model input must be [C, L] or [B, C, L]")
    return x


def _ensure_batched_2d(x: Tensor) -> Tensor:
    if x.values.ndim == 3:
        return reshape(x, (1,) + x.values.shape)
    if x.values.ndim != 4:
        raise ShapeError("model input must be [C, H, W] or [B, C, H, W]")
    return x


def build_pulsenet(spec: ArchitectureSpec, input_len: int, seed: int = 0) -> Graph:
    """Three parallel conv branches -> global max-pool -> dense head."""
    if max(spec.kernel_sizes) > input_len:
        raise ShapeError(
            f"kernel size {max(spec.kernel_sizes)} exceeds input length {input_len}"
        )
    rng = np.random.default_rng(derive_seed(seed, "init", arch_name(spec)))
    bc, hidden = spec.branch_channels, spec.hidden_units
    params: dict[str, Tensor] = {}
    for bi, k in enumerate(spec.kernel_sizes):
        params[f"branch{bi}.conv.weight"] = Tensor(init_uniform(rng, (bc, 1, k), fan_in=k))
        params[f"branch{bi}.conv.bias"] = Tensor(np.zeros(bc))
    params["head.dense1.weight"] = Tensor(init_uniform(rng, (hidden, 3 * bc), fan_in=3 * bc))
    params["head.dense1.bias"] = Tensor(np.zeros(hidden))
    params["head.dense2.weight"] = Tensor(init_uniform(rng, (spec.n_classes, hidden), fan_in=hidden))
    params["head.dense2.bias"] = Tensor(np.zeros(spec.n_classes))

    def forward(x: Tensor) -> Tensor:
        x = _ensure_batched_1d(x)
        feats = []
        for bi in range(3):
            h = _conv1d_batched(
                x, params[f"branch{bi}.conv.weight"], params[f"branch{bi}.conv.bias"]
            )
            feats.append(global_maxpool(relu(h)))
        h = concat(feats, axis=1)
        h = relu(dense(h, params["head.dense1.weight"], params["head.dense1.bias"]))
        return dense(h, params["head.dense2.weight"], params["head.dense2.bias"])

    return Graph(forward, params, name=arch_name(spec))


def _vgg_plan(input_len: int) -> tuple[list, int] | None:
    """Static per-block plan of (n_convs, pool applied) plus the final length,
    or None when some convolution does not fit."""
    plan = []
    length = input_len
    for n_convs in _VGG_BLOCK_CONVS:
        for _ in range(n_convs):
            if length < 3:
                return None
            length -= 2
        pooled = length >= 2
        if pooled:
            length //= 2
        plan.append((n_convs, pooled))
    return plan, length


@lru_cache(maxsize=1)
def vgg_min_input_len() -> int:
    for n in range(3, 4096):
        if _vgg_plan(n) is not None:
            return n
    raise RuntimeError("unreachable")


def build_vgg16_inv(spec: ArchitectureSpec, input_len: int, seed: int = 0) -> Graph:
    """Five conv blocks (2-2-3-3-3, kernel 3) + three dense layers."""
    planned = _vgg_plan(input_len)
    if planned is None:
        raise ShapeError(
            f"input length {input_len} too short for vgg16_inv; "
            f"minimum is {vgg_min_input_len()} samples"
        )
    plan, final_len = planned
    rng = np.random.default_rng(derive_seed(seed, "init", arch_name(spec)))
    params: dict[str, Tensor] = {}
    c_in = 1
    for bi, (n_convs, _) in enumerate(plan):
        c_out = spec.channel_sequence[bi]
        for li in range(n_convs):
            name = f"block{bi}.conv{li}"
            params[f"{name}.weight"] = Tensor(init_uniform(rng, (c_out, c_in, 3), fan_in=c_in * 3))
            params[f"{name}.bias"] = Tensor(np.zeros(c_out))
            c_in = c_out
    flat_width = c_in * final_len
    hidden = spec.hidden_units
    dense_dims = [(hidden, flat_width), (hidden, hidden), (spec.n_classes, hidden)]
    for di, (n_out, n_in) in enumerate(dense_dims):
        params[f"head.dense{di}.weight"] = Tensor(init_uniform(rng, (n_out, n_in), fan_in=n_in))
        params[f"head.dense{di}.bias"] = Tensor(np.zeros(n_out))

    def forward(x: Tensor) -> Tensor:
        x = _ensure_batched_1d(x)
        h = x
        for bi, (n_convs, pooled) in enumerate(plan):
            for li in range(n_convs):
                name = f"block{bi}.conv{li}"
                h = relu(_conv1d_batched(h, params[f"{name}.weight"], params[f"{name}.bias"]))
            if pooled:
                h = maxpool(h, 2, dims=1)
        h = reshape(h, (h.values.shape[0], -1))
        for di in range(2):
            h = relu(dense(h, params[f"head.dense{di}.weight"], params[f"head.dense{di}.bias"]))
        return dense(h, params["head.dense2.weight"], params["head.dense2.bias"])

    return Graph(forward, params, name=arch_name(spec))


def build_cnn2d(spec: ArchitectureSpec, input_shape: tuple[int, int], seed: int = 0) -> Graph:
    """Conv(3x3)/pool(2x2) blocks over a spectrogram, global max-pool head."""
    h, w = int(input_shape[0]), int(input_shape[1])
    plan = []
    for _ in spec.block_channels:
        if h < 3 or w < 3:
            raise ShapeError(
                f"spectrogram {input_shape[0]}x{input_shape[1]} too small for "
                f"{len(spec.block_channels)} conv(3x3) blocks"
            )
        h, w = h - 2, w - 2
        pooled = h >= 2 and w >= 2
        if pooled:
            h, w = h // 2, w // 2
        plan.append(pooled)

    rng = np.random.default_rng(derive_seed(seed, "init", arch_name(spec)))
    params: dict[str, Tensor] = {}
    c_in = 1
    for bi, c_out in enumerate(spec.block_channels):
        params[f"block{bi}.conv.weight"] = Tensor(
            init_uniform(rng, (c_out, c_in, 3, 3), fan_in=c_in * 9)
        )
        params[f"block{bi}.conv.bias"] = Tensor(np.zeros(c_out))
        c_in = c_out
    params["head.dense.weight"] = Tensor(init_uniform(rng, (spec.n_classes, c_in), fan_in=c_in))
    params["head.dense.bias"] = Tensor(np.zeros(spec.n_classes))

    def forward(x: Tensor) -> Tensor:
        x = _ensure_batched_2d(x)
        hcur = x
        for bi, pooled in enumerate(plan):
            hcur = relu(
                _conv2d_batched(hcur, params[f"block{bi}.conv.weight"], params[f"block{bi}.conv.bias"])
            )
            if pooled:
                hcur = maxpool(hcur, (2, 2), dims=2)
        hcur = global_maxpool(hcur)
        return dense(hcur, params["head.dense.weight"], params["head.dense.bias"])

    return Graph(forward, params, name=arch_name(spec))


def build_from_spec(spec: ArchitectureSpec, input_shape, seed: int = 0) -> Graph:
    """Dispatch on family; input_shape is a length for 1-D families and an
    (H, W) pair for cnn2d."""
    if spec.family == "pulsenet":
        return build_pulsenet(spec, int(input_shape), seed=seed)
    if spec.family == "vgg16_inv":
        return build_vgg16_inv(spec, int(input_shape), seed=seed)
    return build_cnn2d(spec, tuple(input_shape), seed=seed)


def param_count(graph: Graph) -> int:
    return int(sum(t.values.size for t in graph.parameters.values()))


def weight_layer_count(graph: Graph) -> int:
    """Number of weight-bearing layers (parameters named ``*.weight``)."""
    return sum(1 for name in graph.parameters if name.endswith(".weight"))


# ---------------------------------------------------------------------------
# Checkpoints: shape manifest + flat value arrays, architecture embedded
# ---------------------------------------------------------------------------


def save_checkpoint(path, graph: Graph, spec: ArchitectureSpec, input_shape) -> None:
    doc = {
        "architecture": spec.to_dict(),
        "input_shape": list(np.atleast_1d(input_shape).astype(int).tolist()),
        "parameters": {
            name: {"shape": list(t.values.shape),
                   "values": [float(v) for v in t.values.ravel()]}
            for name, t in graph.parameters.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[ArchitectureSpec, tuple, dict[str, np.ndarray]]:
    with open(path) as fh:
        doc = json.load(fh)
    spec = ArchitectureSpec.from_dict(doc["architecture"])
    input_shape = tuple(doc["input_shape"])
    state = {
        name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["parameters"].items()
    }
    return spec, input_shape, state


def restore_checkpoint(path, seed: int = 0) -> tuple[Graph, ArchitectureSpec]:
    """Rebuild the graph a checkpoint describes and load its parameters."""
    spec, input_shape, state = load_checkpoint(path)
    shape = input_shape[0] if len(input_shape) == 1 else input_shape
    graph = build_from_spec(spec, shape, seed=seed)
    graph.load_state(state)
    return graph, spec
