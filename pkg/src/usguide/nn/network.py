"""Sequential network execution: parameters, forward/backward, SGD.

Parameters live in a ParamStore keyed by "<prefix><layer_index>.w"/".b".
Initialization is He-uniform (+-sqrt(6/fan_in), zero bias) drawn from a
seeded generator, so (stack, seed) fully determines the weights.
"""

import io

import numpy as np

from ..errors import InvalidHyperparameterError, ShapeError, StateError, UsguideError
from . import kernels
from .layers import LayerSpec, output_shape
from .losses import softmax_probs

_MAGIC = b"USGW1"


class ParamStore:
    """Named parameter tensors with matching gradient slots."""

    def __init__(self, rng_seed=0):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.rng_seed = int(rng_seed)

    def add(self, name, value):
        value = np.ascontiguousarray(value, dtype=np.float32)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def zero_grads(self):
        for g in self.grads.values():
            g[...] = 0.0

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def copy(self):
        other = ParamStore(self.rng_seed)
        for name, p in self.params.items():
            other.params[name] = p.copy()
            other.grads[name] = self.grads[name].copy()
        return other

    def allclose_bitwise(self, other):
        if self.params.keys() != other.params.keys():
            return False
        return all(
            np.array_equal(self.params[k].view(np.uint32),
                           other.params[k].view(np.uint32))
            for k in self.params
        )


def _fan_in(spec: LayerSpec):
    if spec.kind == "conv2d":
        return spec.sizes["kernel"] ** 2 * spec.sizes["in_channels"]
    if spec.kind == "linear":
        return spec.sizes["in_features"]
    return None


def init_stack_params(store: ParamStore, stack, prefix, rng):
    """Append parameters for every conv/linear layer in `stack`."""
    for i, spec in enumerate(stack):
        fan = _fan_in(spec)
        if fan is None:
            continue
        # He-uniform: keeps activation variance stable through relu stacks
        bound = np.sqrt(6.0 / fan)
        if spec.kind == "conv2d":
            k = spec.sizes["kernel"]
            shape = (k, k, spec.sizes["in_channels"], spec.sizes["out_channels"])
            nb = spec.sizes["out_channels"]
        else:
            shape = (spec.sizes["in_features"], spec.sizes["out_features"])
            nb = spec.sizes["out_features"]
        store.add(f"{prefix}{i}.w", rng.uniform(-bound, bound, shape).astype(np.float32))
        store.add(f"{prefix}{i}.b", np.zeros(nb, dtype=np.float32))


class Network:
    """A sequential stack bound to a parameter prefix inside a ParamStore."""

    def __init__(self, stack, in_shape, prefix=""):
        self.stack = list(stack)
        self.in_shape = tuple(in_shape)
        self.prefix = prefix
        # validate adjacent-layer compatibility eagerly
        shape = self.in_shape
        self.shapes = [shape]
        for spec in self.stack:
            shape = output_shape(spec, shape)
            self.shapes.append(shape)
        self.out_shape = shape
        self._last_caches = None

    def init_params(self, store, rng):
        init_stack_params(store, self.stack, self.prefix, rng)

    def _param(self, store, i, which, dtype):
        p = store.params[f"{self.prefix}{i}.{which}"]
        return p if p.dtype == dtype else p.astype(dtype)

    def forward(self, store, x, keep_cache=True):
        """Run the stack on a batch (N, *in_shape); returns the output batch."""
        x = np.asarray(x)
        if tuple(x.shape[1:]) != self.in_shape:
            raise ShapeError(
                f"input shape {tuple(x.shape[1:])} does not match "
                f"stack input {self.in_shape}"
            )
        caches = []
        for i, spec in enumerate(self.stack):
            if spec.kind == "conv2d":
                w = self._param(store, i, "w", x.dtype)
                b = self._param(store, i, "b", x.dtype)
                y = kernels.conv2d_forward(x, w, b, spec.sizes["stride"])
                caches.append(("conv2d", i, x))
            elif spec.kind == "maxpool2x2":
                y, idx = kernels.maxpool2x2_forward(x)
                caches.append(("maxpool2x2", i, (idx, x.shape)))
            elif spec.kind == "relu":
                y = np.maximum(x, 0)
                caches.append(("relu", i, x > 0))
            elif spec.kind == "flatten":
                y = np.ascontiguousarray(x).reshape(x.shape[0], -1)
                caches.append(("flatten", i, x.shape))
            elif spec.kind == "linear":
                w = self._param(store, i, "w", x.dtype)
                b = self._param(store, i, "b", x.dtype)
                y = x @ w + b
                caches.append(("linear", i, x))
            elif spec.kind == "softmax":
                y = softmax_probs(x)
                caches.append(("softmax", i, y))
            x = y
        if not np.isfinite(x).all():
            raise UsguideError("non-finite values in forward output")
        if keep_cache:
            self._last_caches = caches
        return x

    def backward(self, store, dy, caches=None):
        """Backpropagate dL/dout; accumulates parameter grads, returns dL/din."""
        if caches is None:
            caches = self._last_caches
        if caches is None:
            raise StateError("backward called before forward")
        dy = np.asarray(dy)
        for kind, i, cache in reversed(caches):
            if kind == "conv2d":
                x = cache
                w = self._param(store, i, "w", dy.dtype)
                dx, dw, db = kernels.conv2d_backward(
                    x, w, np.ascontiguousarray(dy), self.stack[i].sizes["stride"]
                )
                store.grads[f"{self.prefix}{i}.w"] += dw
                store.grads[f"{self.prefix}{i}.b"] += db
                dy = dx
            elif kind == "maxpool2x2":
                idx, in_shape = cache
                dy = kernels.maxpool2x2_backward(np.ascontiguousarray(dy), idx, in_shape)
            elif kind == "relu":
                dy = dy * cache
            elif kind == "flatten":
                dy = dy.reshape(cache)
            elif kind == "linear":
                x = cache
                store.grads[f"{self.prefix}{i}.w"] += x.T @ dy
                store.grads[f"{self.prefix}{i}.b"] += dy.sum(axis=0)
                dy = dy @ self._param(store, i, "w", dy.dtype).T
            elif kind == "softmax":
                y = cache
                dy = y * (dy - (dy * y).sum(axis=-1, keepdims=True))
        self._last_caches = None
        return dy


def sgd_step(store: ParamStore, lr):
    """Plain SGD update; zeroes gradients afterwards."""
    if not lr > 0:
        raise InvalidHyperparameterError(f"learning rate must be positive, got {lr}")
    for name, p in store.params.items():
        p -= np.float32(lr) * store.grads[name]
    store.zero_grads()
    return store


def grad_check(stack, store, x, eps=1e-3):
    """Max relative error between analytic and central-difference gradients.

    The check runs in float64 so it measures the correctness of the
    backward math rather than float32 roundoff. Loss is a fixed linear
    functional of the output to make every output coordinate matter.
    """
    x = np.asarray(x, dtype=np.float64)[None]  # single sample -> batch of 1
    net = Network(stack, x.shape[1:])

    store64 = ParamStore(store.rng_seed)
    for name, p in store.params.items():
        store64.params[name] = p.astype(np.float64)
        store64.grads[name] = np.zeros(p.shape, dtype=np.float64)
    if store64.n_params() > 10_000:
        raise InvalidHyperparameterError("grad_check limited to <= 10^4 parameters")

    def loss_of(y):
        c = np.cos(0.7 * np.arange(y.size) + 0.3).reshape(y.shape)
        return float((c * y).sum()), c

    y = net.forward(store64, x)
    loss, c = loss_of(y)
    net.backward(store64, c)

    worst = 0.0
    for name, p in store64.params.items():
        flat = p.reshape(-1)
        gflat = store64.grads[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp, _ = loss_of(net.forward(store64, x, keep_cache=False))
            flat[j] = orig - eps
            lm, _ = loss_of(net.forward(store64, x, keep_cache=False))
            flat[j] = orig
            num = (lp - lm) / (2 * eps)
            ana = gflat[j]
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, rel)
    return worst


def save_params(store: ParamStore, path):
    """USGW1 container: magic, then (name, rank, dims, f32 payload) records."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(np.uint64(len(store.params)).tobytes())
    for name, p in store.params.items():
        nb = name.encode("utf-8")
        buf.write(np.uint64(len(nb)).tobytes())
        buf.write(nb)
        buf.write(np.uint64(p.ndim).tobytes())
        buf.write(np.asarray(p.shape, dtype="<u8").tobytes())
        buf.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    data = buf.getvalue()
    if hasattr(path, "write"):
        path.write(data)
    else:
        with open(path, "wb") as f:
            f.write(data)
    return data


def load_params(source) -> ParamStore:
    """Inverse of save_params; accepts a path, file object, or bytes."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as f:
            data = f.read()
    from ..errors import TruncatedFileError, VersionError

    if data[:5] != _MAGIC:
        raise VersionError(f"bad parameter-file magic {data[:5]!r}")
    off = 5

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise TruncatedFileError("parameter file ends mid-record")
        chunk = data[off : off + n]
        off += n
        return chunk

    count = int(np.frombuffer(take(8), dtype="<u8")[0])
    store = ParamStore()
    for _ in range(count):
        nlen = int(np.frombuffer(take(8), dtype="<u8")[0])
        name = take(nlen).decode("utf-8")
        rank = int(np.frombuffer(take(8), dtype="<u8")[0])
        dims = tuple(int(d) for d in np.frombuffer(take(8 * rank), dtype="<u8"))
        size = 1
        for d in dims:
            size *= d
        payload = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
        store.add(name, payload.copy())
    return store
