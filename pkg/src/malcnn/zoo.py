"""The seven convolutional architectures as explicit layer graphs.

Each model is first described symbolically (:class:`ModelSpec`): a
topologically ordered list of layers with exact input/output shapes and
closed-form parameter counts.  :class:`GraphNet` then interprets that
graph with torch modules for training and inference, so the symbolic
description and the runnable network can never drift apart.

Input is a 120x45 process-by-feature matrix: single channel for the
shallow baseline, replicated to 3 channels for the residual and densely
connected families.  Every model ends in a 2-logit benign/malicious
head.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import CheckpointError, ConfigurationError, ShapeMismatchError

BUILDER_VERSION = "1.0"
CHECKPOINT_MAGIC = b"MALCNNCKPT1\n"

MODEL_NAMES = (
    "lenet5",
    "resnet50",
    "resnet101",
    "resnet152",
    "densenet121",
    "densenet169",
    "densenet201",
)

MODEL_INPUT_CHANNELS = {name: (1 if name == "lenet5" else 3) for name in MODEL_NAMES}

LAYER_KINDS = (
    "convolution",
    "max-pool",
    "average-pool",
    "global-average-pool",
    "fully-connected",
    "batch-norm",
    "activation",
    "add-junction",
    "concat-junction",
)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...]
    out_shape: tuple[int, ...]
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    padding: tuple[int, int] | None = None
    ceil_mode: bool = False
    in_channels: int | None = None
    out_channels: int | None = None
    in_features: int | None = None
    out_features: int | None = None
    bias: bool = False

    @property
    def param_count(self) -> int:
        if self.kind == "convolution":
            kh, kw = self.kernel
            n = kh * kw * self.in_channels * self.out_channels
            return n + (self.out_channels if self.bias else 0)
        if self.kind == "fully-connected":
            return (self.in_features + 1) * self.out_features
        if self.kind == "batch-norm":
            return 2 * self.in_channels
        return 0


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    output: str
    residual_blocks: tuple["ResidualBlockInfo", ...] = ()
    dense_blocks: tuple["DenseBlockInfo", ...] = ()

    @property
    def param_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)


@dataclass(frozen=True)
class ResidualBlockInfo:
    """Where one bottleneck block sits and how it is shaped."""

    prefix: str
    in_channels: int
    mid_channels: int
    out_channels: int
    stride: int
    projection: bool
    in_hw: tuple[int, int]


@dataclass(frozen=True)
class DenseBlockInfo:
    """Channel bookkeeping for one dense block."""

    prefix: str
    entry_channels: int
    growth: int
    n_layers: int
    layer_in_channels: tuple[int, ...]


def count_params(spec: ModelSpec) -> int:
    """Exact trainable-parameter count from the layer graph alone."""
    return spec.param_count


def _pair(v) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else tuple(v)


def _window_out(size, k, s, p, ceil_mode):
    raw = (size + 2 * p - k) / s
    n = math.ceil(raw) if ceil_mode else math.floor(raw)
    return n + 1


class GraphBuilder:
    """Incrementally wires a shape-checked layer graph."""

    INPUT = "input"

    def __init__(self, name: str, input_shape: tuple[int, int, int]):
        self.name = name
        self.input_shape = tuple(input_shape)
        self._layers: list[LayerSpec] = []
        self._shapes: dict[str, tuple[int, ...]] = {self.INPUT: self.input_shape}
        self.last: str = self.INPUT

    def shape(self, node: str) -> tuple[int, ...]:
        return self._shapes[node]

    def _register(self, layer: LayerSpec) -> str:
        if "." in layer.name:
            raise ConfigurationError(f"layer name {layer.name!r} must not contain '.'")
        if layer.name in self._shapes:
            raise ConfigurationError(f"duplicate layer name {layer.name!r}")
        for src in layer.inputs:
            if src not in self._shapes:
                raise ConfigurationError(
                    f"layer {layer.name!r} references unknown input {src!r}"
                )
        self._layers.append(layer)
        self._shapes[layer.name] = layer.out_shape
        self.last = layer.name
        return layer.name

    def _src(self, src: str | None) -> str:
        return self.last if src is None else src

    def conv(self, name, out_channels, kernel, stride=1, padding=0, bias=False, src=None):
        src = self._src(src)
        c, h, w = self._shapes[src]
        k, s, p = _pair(kernel), _pair(stride), _pair(padding)
        out_shape = (
            out_channels,
            _window_out(h, k[0], s[0], p[0], False),
            _window_out(w, k[1], s[1], p[1], False),
        )
        return self._register(
            LayerSpec(
                name=name,
                kind="convolution",
                inputs=(src,),
                out_shape=out_shape,
                kernel=k,
                stride=s,
                padding=p,
                in_channels=c,
                out_channels=out_channels,
                bias=bias,
            )
        )

    def _pool(self, kind, name, kernel, stride, padding, ceil_mode, src):
        src = self._src(src)
        c, h, w = self._shapes[src]
        k = _pair(kernel)
        s = _pair(stride) if stride is not None else k
        p = _pair(padding)
        out_shape = (
            c,
            _window_out(h, k[0], s[0], p[0], ceil_mode),
            _window_out(w, k[1], s[1], p[1], ceil_mode),
        )
        return self._register(
            LayerSpec(
                name=name,
                kind=kind,
                inputs=(src,),
                out_shape=out_shape,
                kernel=k,
                stride=s,
                padding=p,
                ceil_mode=ceil_mode,
                in_channels=c,
            )
        )

    def maxpool(self, name, kernel=2, stride=None, padding=0, ceil_mode=False, src=None):
        return self._pool("max-pool", name, kernel, stride, padding, ceil_mode, src)

    def avgpool(self, name, kernel=2, stride=None, padding=0, ceil_mode=False, src=None):
        return self._pool("average-pool", name, kernel, stride, padding, ceil_mode, src)

    def gap(self, name, src=None):
        src = self._src(src)
        c, _, _ = self._shapes[src]
        return self._register(
            LayerSpec(
                name=name,
                kind="global-average-pool",
                inputs=(src,),
                out_shape=(c,),
                in_channels=c,
            )
        )

    def fc(self, name, out_features, src=None):
        src = self._src(src)
        shape = self._shapes[src]
        in_features = int(np.prod(shape))
        return self._register(
            LayerSpec(
                name=name,
                kind="fully-connected",
                inputs=(src,),
                out_shape=(out_features,),
                in_features=in_features,
                out_features=out_features,
                bias=True,
            )
        )

    def bn(self, name, src=None):
        src = self._src(src)
        shape = self._shapes[src]
        return self._register(
            LayerSpec(
                name=name,
                kind="batch-norm",
                inputs=(src,),
                out_shape=shape,
                in_channels=shape[0],
            )
        )

    def relu(self, name, src=None):
        src = self._src(src)
        return self._register(
            LayerSpec(
                name=name,
                kind="activation",
                inputs=(src,),
                out_shape=self._shapes[src],
            )
        )

    def add(self, name, a, b):
        sa, sb = self._shapes[a], self._shapes[b]
        if sa != sb:
            raise ConfigurationError(
                f"add-junction {name!r} inputs disagree on shape: {sa} vs {sb}"
            )
        return self._register(
            LayerSpec(name=name, kind="add-junction", inputs=(a, b), out_shape=sa)
        )

    def concat(self, name, srcs):
        shapes = [self._shapes[s] for s in srcs]
        if any(s[1:] != shapes[0][1:] for s in shapes):
            raise ConfigurationError(
                f"concat-junction {name!r} inputs disagree on spatial shape: {shapes}"
            )
        out_shape = (sum(s[0] for s in shapes),) + shapes[0][1:]
        return self._register(
            LayerSpec(name=name, kind="concat-junction", inputs=tuple(srcs), out_shape=out_shape)
        )

    def build(
        self,
        output: str | None = None,
        residual_blocks=(),
        dense_blocks=(),
    ) -> ModelSpec:
        output = self._src(output)
        return ModelSpec(
            name=self.name,
            input_shape=self.input_shape,
            layers=tuple(self._layers),
            output=output,
            residual_blocks=tuple(residual_blocks),
            dense_blocks=tuple(dense_blocks),
        )


# ---------------------------------------------------------------------------
# block helpers (shared by the full builders and downsized test instances)
# ---------------------------------------------------------------------------

def add_bottleneck_block(
    gb: GraphBuilder, prefix: str, mid_channels: int, out_channels: int, stride: int = 1
) -> ResidualBlockInfo:
    """1x1 -> 3x3 -> 1x1 bottleneck with identity or projected shortcut;
    the output activation runs after the junction."""
    src = gb.last
    in_channels, h, w = gb.shape(src)
    gb.conv(f"{prefix}_conv1", mid_channels, 1, src=src)
    gb.bn(f"{prefix}_bn1")
    gb.relu(f"{prefix}_relu1")
    gb.conv(f"{prefix}_conv2", mid_channels, 3, stride=stride, padding=1)
    gb.bn(f"{prefix}_bn2")
    gb.relu(f"{prefix}_relu2")
    gb.conv(f"{prefix}_conv3", out_channels, 1)
    branch = gb.bn(f"{prefix}_bn3")
    projection = stride != 1 or in_channels != out_channels
    if projection:
        gb.conv(f"{prefix}_proj_conv", out_channels, 1, stride=stride, src=src)
        shortcut = gb.bn(f"{prefix}_proj_bn")
    else:
        shortcut = src
    gb.add(f"{prefix}_add", branch, shortcut)
    gb.relu(f"{prefix}_out")
    return ResidualBlockInfo(
        prefix=prefix,
        in_channels=in_channels,
        mid_channels=mid_channels,
        out_channels=out_channels,
        stride=stride,
        projection=projection,
        in_hw=(h, w),
    )


def add_dense_layer(gb: GraphBuilder, prefix: str, growth: int, bn_size: int = 4) -> str:
    """Pre-activation 1x1 -> 3x3 composite whose output is concatenated
    onto its own input, growing the channel count by ``growth``."""
    src = gb.last
    gb.bn(f"{prefix}_bn1", src=src)
    gb.relu(f"{prefix}_relu1")
    gb.conv(f"{prefix}_conv1", bn_size * growth, 1)
    gb.bn(f"{prefix}_bn2")
    gb.relu(f"{prefix}_relu2")
    new = gb.conv(f"{prefix}_conv2", growth, 3, padding=1)
    return gb.concat(f"{prefix}_cat", (src, new))


def add_dense_block(
    gb: GraphBuilder, prefix: str, n_layers: int, growth: int, bn_size: int = 4
) -> DenseBlockInfo:
    entry = gb.shape(gb.last)[0]
    layer_in = []
    for i in range(n_layers):
        layer_in.append(gb.shape(gb.last)[0])
        add_dense_layer(gb, f"{prefix}_layer{i + 1}", growth, bn_size)
    return DenseBlockInfo(
        prefix=prefix,
        entry_channels=entry,
        growth=growth,
        n_layers=n_layers,
        layer_in_channels=tuple(layer_in),
    )


def add_transition(gb: GraphBuilder, prefix: str, compression: float = 0.5) -> str:
    """1x1 channel compression followed by 2x2 average pooling."""
    channels = gb.shape(gb.last)[0]
    gb.bn(f"{prefix}_bn")
    gb.relu(f"{prefix}_relu")
    gb.conv(f"{prefix}_conv", int(channels * compression), 1)
    return gb.avgpool(f"{prefix}_pool", kernel=2, stride=2)


# ---------------------------------------------------------------------------
# the seven architectures
# ---------------------------------------------------------------------------

def build_lenet5(input_hw: tuple[int, int] = (120, 45)) -> ModelSpec:
    """Shallow baseline: two 5x5 conv/pool stages into a 1024-512-2 head.

    Pooling uses ceiling semantics so odd spatial sizes round up
    (45 -> 23 -> 12), and 5x5 convolutions are shape-preserving.
    """
    gb = GraphBuilder("lenet5", (1, *input_hw))
    gb.conv("conv1", 32, 5, padding=2, bias=True)
    gb.relu("relu1")
    gb.maxpool("pool1", 2, ceil_mode=True)
    gb.conv("conv2", 64, 5, padding=2, bias=True)
    gb.relu("relu2")
    gb.maxpool("pool2", 2, ceil_mode=True)
    gb.fc("fc1", 1024)
    gb.relu("relu3")
    gb.fc("fc2", 512)
    gb.relu("relu4")
    gb.fc("fc3", 2)
    return gb.build()


_RESNET_STAGES = {50: (3, 4, 6, 3), 101: (3, 4, 23, 3), 152: (3, 8, 36, 3)}


def build_resnet(depth: int, input_hw: tuple[int, int] = (120, 45)) -> ModelSpec:
    """Bottleneck residual network with global average pooling head."""
    if depth not in _RESNET_STAGES:
        raise ConfigurationError(
            f"unsupported resnet depth {depth}; choose one of {sorted(_RESNET_STAGES)}"
        )
    gb = GraphBuilder(f"resnet{depth}", (3, *input_hw))
    gb.conv("stem_conv", 64, 7, stride=2, padding=3)
    gb.bn("stem_bn")
    gb.relu("stem_relu")
    gb.maxpool("stem_pool", 3, stride=2, padding=1)
    blocks = []
    for s, n_blocks in enumerate(_RESNET_STAGES[depth]):
        mid = 64 * 2**s
        out = mid * 4
        for b in range(n_blocks):
            stride = 2 if (s > 0 and b == 0) else 1
            blocks.append(add_bottleneck_block(gb, f"stage{s + 1}_block{b + 1}", mid, out, stride))
    gb.gap("gap")
    gb.fc("fc", 2)
    return gb.build(residual_blocks=blocks)


_DENSENET_BLOCKS = {121: (6, 12, 24, 16), 169: (6, 12, 32, 32), 201: (6, 12, 48, 32)}
DENSENET_GROWTH = 32
DENSENET_BN_SIZE = 4
DENSENET_COMPRESSION = 0.5


def build_densenet(depth: int, input_hw: tuple[int, int] = (120, 45)) -> ModelSpec:
    """Densely connected network: every layer consumes the concatenation
    of all earlier layers in its block; transitions halve channels and
    spatial size between blocks."""
    if depth not in _DENSENET_BLOCKS:
        raise ConfigurationError(
            f"unsupported densenet depth {depth}; choose one of {sorted(_DENSENET_BLOCKS)}"
        )
    gb = GraphBuilder(f"densenet{depth}", (3, *input_hw))
    gb.conv("stem_conv", 64, 7, stride=2, padding=3)
    gb.bn("stem_bn")
    gb.relu("stem_relu")
    gb.maxpool("stem_pool", 3, stride=2, padding=1)
    block_sizes = _DENSENET_BLOCKS[depth]
    blocks = []
    for b, n_layers in enumerate(block_sizes):
        blocks.append(
            add_dense_block(gb, f"block{b + 1}", n_layers, DENSENET_GROWTH, DENSENET_BN_SIZE)
        )
        if b < len(block_sizes) - 1:
            add_transition(gb, f"trans{b + 1}", DENSENET_COMPRESSION)
    gb.bn("final_bn")
    gb.relu("final_relu")
    gb.gap("gap")
    gb.fc("fc", 2)
    return gb.build(dense_blocks=blocks)


def build_model(name: str, input_hw: tuple[int, int] = (120, 45)) -> ModelSpec:
    if name == "lenet5":
        return build_lenet5(input_hw)
    if name.startswith("resnet") and name in MODEL_NAMES:
        return build_resnet(int(name[len("resnet"):]), input_hw)
    if name.startswith("densenet") and name in MODEL_NAMES:
        return build_densenet(int(name[len("densenet"):]), input_hw)
    raise ConfigurationError(f"unknown model {name!r}; choose one of {MODEL_NAMES}")


# ---------------------------------------------------------------------------
# torch interpreter
# ---------------------------------------------------------------------------

class GraphNet(nn.Module):
    """Executes a :class:`ModelSpec` layer graph with torch modules."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.init_seed: int | None = None
        mods = {}
        for layer in spec.layers:
            if layer.kind == "convolution":
                mods[layer.name] = nn.Conv2d(
                    layer.in_channels,
                    layer.out_channels,
                    layer.kernel,
                    stride=layer.stride,
                    padding=layer.padding,
                    bias=layer.bias,
                )
            elif layer.kind == "batch-norm":
                mods[layer.name] = nn.BatchNorm2d(layer.in_channels)
            elif layer.kind == "fully-connected":
                mods[layer.name] = nn.Linear(layer.in_features, layer.out_features)
            elif layer.kind == "max-pool":
                mods[layer.name] = nn.MaxPool2d(
                    layer.kernel, layer.stride, layer.padding, ceil_mode=layer.ceil_mode
                )
            elif layer.kind == "average-pool":
                mods[layer.name] = nn.AvgPool2d(
                    layer.kernel, layer.stride, layer.padding, ceil_mode=layer.ceil_mode
                )
        self.ops = nn.ModuleDict(mods)
        consumers: dict[str, int] = {}
        for layer in spec.layers:
            for src in layer.inputs:
                consumers[src] = consumers.get(src, 0) + 1
        consumers[spec.output] = consumers.get(spec.output, 0) + 1
        self._consumers = consumers

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise ShapeMismatchError(
                f"layer {self.spec.layers[0].name!r} of {self.spec.name} expects input "
                f"{self.spec.input_shape}, got {tuple(x.shape[1:])}"
            )
        cache: dict[str, torch.Tensor] = {GraphBuilder.INPUT: x}
        remaining = dict(self._consumers)

        def take(src):
            value = cache[src]
            remaining[src] -= 1
            if remaining[src] == 0:
                del cache[src]
            return value

        for layer in self.spec.layers:
            kind = layer.kind
            if kind == "activation":
                out = F.relu(take(layer.inputs[0]))
            elif kind == "add-junction":
                out = take(layer.inputs[0]) + take(layer.inputs[1])
            elif kind == "concat-junction":
                out = torch.cat([take(s) for s in layer.inputs], dim=1)
            elif kind == "global-average-pool":
                out = take(layer.inputs[0]).mean(dim=(2, 3))
            elif kind == "fully-connected":
                out = self.ops[layer.name](take(layer.inputs[0]).flatten(1))
            else:
                out = self.ops[layer.name](take(layer.inputs[0]))
            cache[layer.name] = out
        return cache[self.spec.output]


def initialize_weights(net: GraphNet, seed: int) -> GraphNet:
    """Fan-in-scaled normal init for conv/linear weights, unit batch norm.

    Draws come from one seeded generator walked in graph order, so a
    (spec, seed) pair always produces the same starting weights.
    """
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for layer in net.spec.layers:
            if layer.kind == "convolution":
                mod = net.ops[layer.name]
                fan_in = layer.in_channels * layer.kernel[0] * layer.kernel[1]
                mod.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
                if layer.bias:
                    mod.bias.zero_()
            elif layer.kind == "fully-connected":
                mod = net.ops[layer.name]
                mod.weight.normal_(0.0, math.sqrt(2.0 / layer.in_features), generator=g)
                mod.bias.zero_()
            elif layer.kind == "batch-norm":
                mod = net.ops[layer.name]
                mod.weight.fill_(1.0)
                mod.bias.zero_()
    net.init_seed = seed
    return net


def build_network(
    model: str | ModelSpec, seed: int = 0, input_hw: tuple[int, int] = (120, 45)
) -> GraphNet:
    spec = build_model(model, input_hw) if isinstance(model, str) else model
    return initialize_weights(GraphNet(spec), seed)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Checkpoint:
    """Snapshot of a model: weights plus enough metadata to rebuild it."""

    model_name: str
    builder_version: str
    init_seed: int
    epoch: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_network(cls, net: GraphNet, epoch: int = 0) -> "Checkpoint":
        tensors = {}
        for key, value in net.state_dict().items():
            # torch keys look like "ops.<layer>.<param>"
            _, layer, param = key.split(".", 2)
            tensors[f"{layer}/{param}"] = value.detach().cpu().numpy().copy()
        return cls(
            model_name=net.spec.name,
            builder_version=BUILDER_VERSION,
            init_seed=net.init_seed if net.init_seed is not None else -1,
            epoch=epoch,
            tensors=tensors,
        )

    def apply_to(self, net: GraphNet) -> GraphNet:
        if net.spec.name != self.model_name:
            raise CheckpointError(
                f"checkpoint is for {self.model_name!r}, network is {net.spec.name!r}"
            )
        state = net.state_dict()
        expected = {f"{k.split('.', 2)[1]}/{k.split('.', 2)[2]}": k for k in state}
        if set(expected) != set(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise CheckpointError(
                f"checkpoint tensors do not match the model "
                f"(missing: {missing or 'none'}, unexpected: {extra or 'none'})"
            )
        for key, torch_key in expected.items():
            value = torch.from_numpy(self.tensors[key])
            if tuple(value.shape) != tuple(state[torch_key].shape):
                raise CheckpointError(
                    f"tensor {key!r} has shape {tuple(value.shape)}, model expects "
                    f"{tuple(state[torch_key].shape)}"
                )
            state[torch_key] = value
        net.load_state_dict(state)
        net.init_seed = self.init_seed
        return net


def network_from_checkpoint(
    ckpt: Checkpoint, input_hw: tuple[int, int] = (120, 45)
) -> GraphNet:
    net = GraphNet(build_model(ckpt.model_name, input_hw))
    return ckpt.apply_to(net)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Byte-deterministic binary: JSON header + raw little-endian tensors."""
    path = Path(path)
    keys = sorted(ckpt.tensors)
    header = {
        "format_version": 1,
        "model_name": ckpt.model_name,
        "builder_version": ckpt.builder_version,
        "init_seed": ckpt.init_seed,
        "epoch": ckpt.epoch,
        "tensors": [
            {
                "key": k,
                "dtype": str(ckpt.tensors[k].dtype),
                "shape": list(ckpt.tensors[k].shape),
            }
            for k in keys
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for k in keys:
            fh.write(np.ascontiguousarray(ckpt.tensors[k]).tobytes())
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    header_len = int.from_bytes(data[offset : offset + 8], "little")
    offset += 8
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {exc}") from exc
    offset += header_len
    if header.get("format_version") != 1:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format_version')!r}")
    tensors = {}
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        raw = data[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"checkpoint {path} truncated at tensor {entry['key']!r}")
        tensors[entry["key"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return Checkpoint(
        model_name=header["model_name"],
        builder_version=header["builder_version"],
        init_seed=header["init_seed"],
        epoch=header["epoch"],
        tensors=tensors,
    )
