"""Micro UNet-style binary segmentation network in plain numpy.

Tensors are ``(batch, channels, height, width)`` arrays, float32 by default.
The network is::

    for each level l < depth:   conv3x3+ReLU, conv3x3+ReLU  (width base * 2**l), maxpool 2x2
    bottleneck:                  conv3x3+ReLU, conv3x3+ReLU  (width base * 2**depth)
    for each level l, deepest first:
                                 nearest upsample x2, concat skip l,
                                 conv3x3+ReLU, conv3x3+ReLU  (width base * 2**l)
    head:                        conv1x1 -> sigmoid          (1 channel)

Backpropagation is written by hand; :func:`backward` returns the gradient of a
scalar loss w.r.t. every parameter given the gradient w.r.t. the output
probabilities.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"CNET"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 3
    base_width: int = 8
    depth: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")

    def width(self, level: int) -> int:
        return self.base_width * 2**level

    def layer_shapes(self) -> dict[str, tuple[int, ...]]:
        """Ordered weight shapes ``(out, in, k, k)`` keyed by layer name."""
        shapes = {}
        c_in = self.in_channels
        for lvl in range(self.depth):
            w = self.width(lvl)
            shapes[f"enc{lvl}.conv1"] = (w, c_in, 3, 3)
            shapes[f"enc{lvl}.conv2"] = (w, w, 3, 3)
            c_in = w
        w = self.width(self.depth)
        shapes["mid.conv1"] = (w, c_in, 3, 3)
        shapes["mid.conv2"] = (w, w, 3, 3)
        c_in = w
        for lvl in reversed(range(self.depth)):
            w = self.width(lvl)
            shapes[f"dec{lvl}.conv1"] = (w, c_in + w, 3, 3)
            shapes[f"dec{lvl}.conv2"] = (w, w, 3, 3)
            c_in = w
        shapes["head"] = (1, c_in, 1, 1)
        return shapes


# --------------------------------------------------------------------------
# layer primitives


def conv2d_forward(x, w, b, pad):
    """Stride-1 cross-correlation on a channel-major ``(C, N, H, W)`` tensor.

    Returns the output and the im2col matrix ``(C * k * k, N * Ho * Wo)``.
    """
    c, n, h, wd = x.shape
    o, ci, k, _ = w.shape
    if ci != c:
        raise ValueError(f"conv expects {ci} input channels, got {c}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    if k == 1:
        cols = xp.reshape(c, n * ho * wo)
    else:
        cols = np.stack(
            [xp[:, :, i : i + ho, j : j + wo] for i in range(k) for j in range(k)], axis=1
        ).reshape(c * k * k, n * ho * wo)
    y = w.reshape(o, -1) @ cols
    y += b[:, None]
    return y.reshape(o, n, ho, wo), cols


def conv2d_backward(dy, cols, x_shape, w, pad, need_dx=True):
    """Gradients ``(dx, dw, db)`` for :func:`conv2d_forward`; ``dx`` is None unless needed."""
    c, n, h, wd = x_shape
    o, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dyr = dy.reshape(o, -1)
    w2 = w.reshape(o, -1)
    dw = (dyr @ cols.T).reshape(w.shape)
    db = dyr.sum(axis=1)
    if not need_dx:
        return None, dw, db
    dcols = w2.T @ dyr
    if k == 1:
        return dcols.reshape(c, n, ho, wo), dw, db
    dcols = dcols.reshape(c, k * k, n, ho, wo)
    dxp = np.zeros((c, n, h + 2 * pad, wd + 2 * pad), dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + ho, j : j + wo] += dcols[:, i * k + j]
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return dx, dw, db


def maxpool2_forward(x):
    """2x2 max pooling over the last two axes."""
    blocks = _pool_blocks(x)
    idx = np.argmax(blocks, axis=-1)  # first maximum wins ties
    y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return y, idx


def _pool_blocks(x):
    a, b_, h, w = x.shape
    blocks = x.reshape(a, b_, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(a, b_, h // 2, w // 2, 4)


def maxpool2_apply(x, idx):
    """Select the 2x2-block entries given by ``idx`` (a fixed pooling decision)."""
    return np.take_along_axis(_pool_blocks(x), idx[..., None], axis=-1)[..., 0]


def maxpool2_backward(dy, idx):
    a, b_, h2, w2 = dy.shape
    d = np.zeros((a, b_, h2, w2, 4), dtype=dy.dtype)
    np.put_along_axis(d, idx[..., None], dy[..., None], axis=-1)
    d = d.reshape(a, b_, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return d.reshape(a, b_, h2 * 2, w2 * 2)


def upsample2_forward(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(dy):
    a, b_, h, w = dy.shape
    return dy.reshape(a, b_, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# --------------------------------------------------------------------------
# network


class UNet:
    """Parameter container plus forward/backward for the micro UNet."""

    def __init__(self, config: NetConfig, params: dict[str, np.ndarray]):
        expected = [n for name in config.layer_shapes() for n in (name + ".w", name + ".b")]
        if list(params) != expected:
            raise ValueError("parameter names do not match the configuration")
        for name, shape in config.layer_shapes().items():
            if params[name + ".w"].shape != shape or params[name + ".b"].shape != (shape[0],):
                raise ValueError(f"bad parameter shape for {name}")
        self.config = config
        self.params = params
        self.generation = 0

    @property
    def dtype(self):
        return self.params["head.w"].dtype

    def astype(self, dtype) -> "UNet":
        return UNet(self.config, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> "UNet":
        return self.astype(self.dtype)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def forward(self, x, gates=None):
        return forward(self, x, gates)

    def backward(self, cache, grad_output):
        return backward(self, cache, grad_output)

    def predict(self, x, batch_size: int = 8):
        x = np.asarray(x)
        outs = [forward(self, x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    def step(self, grads, state: "AdamState") -> None:
        """Apply one Adam update in place; invalidates earlier forward caches."""
        adam_step(self.params, grads, state)
        self.generation += 1


def init_params(config: NetConfig, dtype=np.float32) -> UNet:
    """He-normal weights (std ``sqrt(2 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in config.layer_shapes().items():
        fan_in = shape[1] * shape[2] * shape[3]
        w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        params[name + ".w"] = w.astype(dtype)
        params[name + ".b"] = np.zeros(shape[0], dtype=dtype)
    return UNet(config, params)


def zero_params(config: NetConfig, dtype=np.float32) -> UNet:
    params = {}
    for name, shape in config.layer_shapes().items():
        params[name + ".w"] = np.zeros(shape, dtype=dtype)
        params[name + ".b"] = np.zeros(shape[0], dtype=dtype)
    return UNet(config, params)


@dataclass
class ForwardCache:
    net_id: int
    generation: int
    input_shape: tuple
    probs: np.ndarray
    layers: dict = field(default_factory=dict)
    pools: dict = field(default_factory=dict)


def _check_input(net: UNet, x):
    cfg = net.config
    if x.ndim != 4:
        raise ValueError(f"expected (batch, channels, height, width), got shape {x.shape}")
    if x.shape[1] != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels} input channels, got {x.shape[1]}")
    step = 2**cfg.depth
    if x.shape[2] % step or x.shape[3] % step:
        raise ValueError(f"spatial dims {x.shape[2:]} not divisible by 2**depth = {step}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")


def forward(net: UNet, x, gates: ForwardCache | None = None):
    """Run the network. Returns ``(probs, cache)`` with probs of shape (B, 1, H, W).

    If ``gates`` (the cache of an earlier call on an input of the same shape) is
    given, its ReLU masks and max-pool choices are replayed instead of being
    recomputed, which evaluates the smooth piece of the network active there.
    """
    x = np.asarray(x)
    _check_input(net, x)
    if gates is not None and gates.input_shape != x.shape:
        raise ValueError("gates come from a forward pass on a different input shape")
    cache = ForwardCache(id(net), net.generation, x.shape, None)
    # channel-major (C, N, H, W) internally keeps im2col and concat contiguous
    x = np.ascontiguousarray(x.astype(net.dtype, copy=False).transpose(1, 0, 2, 3))
    P = net.params

    def conv_relu(name, h):
        z, cols = conv2d_forward(h, P[name + ".w"], P[name + ".b"], 1)
        active = z > 0 if gates is None else gates.layers[name][2]
        cache.layers[name] = (h.shape, cols, active)
        return z * active

    h = x
    skips = []
    for lvl in range(net.config.depth):
        h = conv_relu(f"enc{lvl}.conv1", h)
        h = conv_relu(f"enc{lvl}.conv2", h)
        skips.append(h)
        if gates is None:
            h, idx = maxpool2_forward(h)
        else:
            idx = gates.pools[lvl]
            h = maxpool2_apply(h, idx)
        cache.pools[lvl] = idx
    h = conv_relu("mid.conv1", h)
    h = conv_relu("mid.conv2", h)
    for lvl in reversed(range(net.config.depth)):
        h = np.concatenate([upsample2_forward(h), skips[lvl]], axis=0)
        h = conv_relu(f"dec{lvl}.conv1", h)
        h = conv_relu(f"dec{lvl}.conv2", h)
    z, cols = conv2d_forward(h, P["head.w"], P["head.b"], 0)
    cache.layers["head"] = (h.shape, cols, None)
    probs = sigmoid(z)
    cache.probs = probs
    return probs.transpose(1, 0, 2, 3), cache


def backward(net: UNet, cache: ForwardCache, grad_output) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every parameter, keyed like ``net.params``.

    ``grad_output`` is d(loss)/d(probs), shaped like the forward output.
    """
    if cache.net_id != id(net) or cache.generation != net.generation:
        raise ValueError("stale forward cache: parameters changed since the forward pass")
    grad_output = np.asarray(grad_output)
    out_shape = (cache.probs.shape[1], 1) + cache.probs.shape[2:]
    if grad_output.shape != out_shape:
        raise ValueError(f"grad_output shape {grad_output.shape} != output {out_shape}")
    grad_output = grad_output.transpose(1, 0, 2, 3)
    P = net.params
    dt = net.dtype
    grads = {}

    def conv_relu_back(name, d, need_dx=True):
        x_shape, cols, active = cache.layers[name]
        d = d * active
        dx, dw, db = conv2d_backward(d, cols, x_shape, P[name + ".w"], 1, need_dx)
        grads[name + ".w"] = dw
        grads[name + ".b"] = db
        return dx

    p = cache.probs
    dz = (grad_output.astype(dt) * p * (1 - p)).astype(dt, copy=False)
    x_shape, cols, _ = cache.layers["head"]
    d, grads["head.w"], grads["head.b"] = conv2d_backward(dz, cols, x_shape, P["head.w"], 0)

    depth = net.config.depth
    dskips = {}
    for lvl in range(depth):
        d = conv_relu_back(f"dec{lvl}.conv2", d)
        d = conv_relu_back(f"dec{lvl}.conv1", d)
        c_up = d.shape[0] - net.config.width(lvl)
        dskips[lvl] = d[c_up:]
        d = upsample2_backward(d[:c_up])
    d = conv_relu_back("mid.conv2", d)
    d = conv_relu_back("mid.conv1", d)
    for lvl in reversed(range(depth)):
        d = maxpool2_backward(d, cache.pools[lvl]) + dskips[lvl]
        d = conv_relu_back(f"enc{lvl}.conv2", d)
        d = conv_relu_back(f"enc{lvl}.conv1", d, need_dx=lvl > 0)
    return {k: grads[k] for k in P}


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {k}: {grads[k].shape} vs {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for k, p in params.items():
        g = grads[k].astype(p.dtype, copy=False)
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return params, state


# --------------------------------------------------------------------------
# checkpoints


def _write_array(buf, a):
    buf.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def save_checkpoint(path, net: UNet, state: AdamState | None = None) -> None:
    buf = io.BytesIO()
    cfg = net.config
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<HIIIq", CHECKPOINT_VERSION, cfg.in_channels, cfg.base_width,
                          cfg.depth, cfg.seed))
    buf.write(struct.pack("<I", len(net.params)))
    for name, arr in net.params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        _write_array(buf, arr)
    if state is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01")
        buf.write(struct.pack("<ddddq", state.lr, state.beta1, state.beta2, state.eps, state.t))
        for name, arr in net.params.items():
            _write_array(buf, state.m.get(name, np.zeros_like(arr)))
            _write_array(buf, state.v.get(name, np.zeros_like(arr)))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> tuple[UNet, AdamState | None]:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return _decode_checkpoint(data, path)
    except struct.error:
        raise ValueError(f"{path}: truncated checkpoint") from None


def _decode_checkpoint(data: bytes, path):
    view = memoryview(data)
    pos = 0

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, view, pos)
        pos += struct.calcsize(fmt)
        return vals

    def take_array(shape):
        nonlocal pos
        n = int(np.prod(shape))
        arr = np.frombuffer(view, dtype="<f4", count=n, offset=pos).reshape(shape)
        pos += 4 * n
        return arr.astype(np.float32)

    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint (bad magic)")
    pos = 4
    version, c_in, base, depth, seed = take("<HIIIq")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    cfg = NetConfig(in_channels=c_in, base_width=base, depth=depth, seed=seed)
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = bytes(view[pos : pos + nlen]).decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        params[name] = take_array(shape)
    net = UNet(cfg, params)
    (has_state,) = take("<B")
    state = None
    if has_state:
        lr, b1, b2, eps, t = take("<ddddq")
        state = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps, t=t)
        for name, arr in params.items():
            state.m[name] = take_array(arr.shape)
            state.v[name] = take_array(arr.shape)
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return net, state
