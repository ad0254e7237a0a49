"""Layer specifications for sequential stacks.

Supported kinds: conv2d, maxpool2x2, relu, flatten, linear, softmax.
Spatial tensors are NHWC; flat tensors are (N, features).
"""

from dataclasses import dataclass, field

from ..errors import ConfigError, ShapeError


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    sizes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "conv2d":
            k = self.sizes["kernel"]
            if k < 1 or self.sizes["stride"] < 1:
                raise ConfigError("conv2d kernel and stride must be >= 1")
        elif self.kind == "linear":
            if self.sizes["in_features"] < 1 or self.sizes["out_features"] < 1:
                raise ConfigError("linear fan-in/out must be positive")
        elif self.kind not in ("maxpool2x2", "relu", "flatten", "softmax"):
            raise ConfigError(f"unknown layer kind {self.kind!r}")


def conv2d(in_channels, out_channels, kernel=3, stride=1):
    return LayerSpec("conv2d", {
        "in_channels": in_channels,
        "out_channels": out_channels,
        "kernel": kernel,
        "stride": stride,
    })


def maxpool2x2():
    return LayerSpec("maxpool2x2")


def relu():
    return LayerSpec("relu")


def flatten():
    return LayerSpec("flatten")


def linear(in_features, out_features):
    return LayerSpec("linear", {
        "in_features": in_features,
        "out_features": out_features,
    })


def softmax():
    return LayerSpec("softmax")


def output_shape(spec: LayerSpec, in_shape: tuple) -> tuple:
    """Per-sample output shape for a per-sample input shape."""
    if spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        if c != spec.sizes["in_channels"]:
            raise ShapeError(
                f"conv2d expects {spec.sizes['in_channels']} input channels, got {c}"
            )
        k, s = spec.sizes["kernel"], spec.sizes["stride"]
        p = k // 2
        return ((h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1,
                spec.sizes["out_channels"])
    if spec.kind == "maxpool2x2":
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2x2 expects (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        if h < 2 or w < 2:
            raise ShapeError(f"maxpool2x2 needs H, W >= 2, got {in_shape}")
        return (h // 2, w // 2, c)
    if spec.kind in ("relu", "softmax"):
        return in_shape
    if spec.kind == "flatten":
        n = 1
        for d in in_shape:
            n *= d
        return (n,)
    if spec.kind == "linear":
        if len(in_shape) != 1 or in_shape[0] != spec.sizes["in_features"]:
            raise ShapeError(
                f"linear expects ({spec.sizes['in_features']},) input, got {in_shape}"
            )
        return (spec.sizes["out_features"],)
    raise ConfigError(f"unknown layer kind {spec.kind!r}")


def stack_output_shape(stack, in_shape):
    shape = in_shape
    for spec in stack:
        shape = output_shape(spec, shape)
    return shape
