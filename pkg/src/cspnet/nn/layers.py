"""Layer zoo for 4-axis activations (batch, maps, height, width).

For EEG inputs, height is the electrode axis and width the time axis.
Convolution is cross-correlation (no kernel flip); "same-width" padding
zero-fills the time axis only, so channel-axis kernels always run in
valid mode. Everything is float64.

Each kind implements: output-shape propagation, parameter creation,
forward (returning a cache), and backward (consuming it). The public
`permute` swap of the maps and height axes is not a user-facing kind;
it exists so a bank of spatial projections can be re-read as channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import BuildError, ParameterError

KINDS = (
    "conv2d",
    "batchnorm",
    "elu",
    "square",
    "safelog",
    "avgpool",
    "maxpool",
    "dropout",
    "flatten",
    "dense",
    "permute",
)

BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.1
SAFELOG_CLAMP = 1e-6


@dataclass
class LayerSpec:
    kind: str
    name: str | None = None
    # conv2d
    out_maps: int | None = None
    kernel: tuple[int, int] | None = None
    groups: int = 1
    padding: str = "valid"  # "valid" or "same-width"
    bias: bool = True
    # pooling
    window: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    # dropout
    p: float = 0.25
    # dense
    units: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise BuildError(f"unknown layer kind {self.kind!r}")


def _need_3d(spec: LayerSpec, shape) -> None:
    if len(shape) != 3:
        raise BuildError(f"{spec.kind} expects a maps x height x width input, "
                         f"got shape {shape}")


def _pool_geometry(spec: LayerSpec, shape):
    _need_3d(spec, shape)
    m, h, w = shape
    if spec.window is None:
        raise BuildError(f"{spec.kind} needs a window")
    ph, pw = spec.window
    sh, sw = spec.stride if spec.stride is not None else spec.window
    if ph < 1 or pw < 1 or sh < 1 or sw < 1:
        raise BuildError(f"pool window/stride must be >= 1, got {spec.window} "
                         f"and stride {(sh, sw)}")
    if ph > h or pw > w:
        raise BuildError(f"pool window {spec.window} exceeds input {h}x{w}")
    return m, h, w, ph, pw, sh, sw, (h - ph) // sh + 1, (w - pw) // sw + 1


def out_shape(spec: LayerSpec, in_shape) -> tuple:
    """Symbolic shape propagation; raises BuildError on any mismatch."""
    if spec.kind == "conv2d":
        _need_3d(spec, in_shape)
        m, h, w = in_shape
        if spec.out_maps is None or spec.kernel is None:
            raise BuildError("conv2d needs out_maps and kernel")
        kh, kw = spec.kernel
        if kh < 1 or kw < 1:
            raise BuildError(f"kernel {spec.kernel} must be >= 1 in both axes")
        if spec.groups < 1 or m % spec.groups or spec.out_maps % spec.groups:
            raise BuildError(
                f"groups {spec.groups} must divide input maps {m} "
                f"and output maps {spec.out_maps}"
            )
        if spec.padding not in ("valid", "same-width"):
            raise BuildError(f"unknown padding {spec.padding!r}")
        if kh > h:
            raise BuildError(f"kernel height {kh} exceeds input height {h}")
        if spec.padding == "valid":
            if kw > w:
                raise BuildError(f"kernel width {kw} exceeds input width {w}")
            return (spec.out_maps, h - kh + 1, w - kw + 1)
        return (spec.out_maps, h - kh + 1, w)
    if spec.kind == "batchnorm":
        _need_3d(spec, in_shape)
        return tuple(in_shape)
    if spec.kind in ("elu", "square", "safelog"):
        return tuple(in_shape)
    if spec.kind in ("avgpool", "maxpool"):
        m, _, _, _, _, _, _, ho, wo = _pool_geometry(spec, in_shape)
        if ho < 1 or wo < 1:
            raise BuildError(f"pool {spec.window} empties the input {in_shape}")
        return (m, ho, wo)
    if spec.kind == "dropout":
        if not 0.0 <= spec.p < 1.0:
            raise BuildError(f"drop probability must be in [0, 1), got {spec.p}")
        return tuple(in_shape)
    if spec.kind == "flatten":
        _need_3d(spec, in_shape)
        return (int(np.prod(in_shape)),)
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise BuildError(f"dense expects a flat input, got shape {in_shape}")
        if spec.units is None or spec.units < 1:
            raise BuildError("dense needs a positive unit count")
        return (spec.units,)
    if spec.kind == "permute":
        _need_3d(spec, in_shape)
        m, h, w = in_shape
        return (h, m, w)
    raise BuildError(f"unknown layer kind {spec.kind!r}")


def _glorot(shape, fan_in, fan_out, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(spec: LayerSpec, in_shape, rng: np.random.Generator) -> dict:
    """Fresh parameter values keyed by local name (weight/bias/gamma/beta)."""
    if spec.kind == "conv2d":
        m = in_shape[0]
        kh, kw = spec.kernel
        shape = (spec.out_maps, m // spec.groups, kh, kw)
        params = {"weight": _glorot(shape, shape[1] * kh * kw,
                                    shape[0] * kh * kw, rng)}
        if spec.bias:
            params["bias"] = np.zeros(spec.out_maps)
        return params
    if spec.kind == "batchnorm":
        m = in_shape[0]
        return {"gamma": np.ones(m), "beta": np.zeros(m)}
    if spec.kind == "dense":
        shape = (in_shape[0], spec.units)
        return {
            "weight": _glorot(shape, shape[0], shape[1], rng),
            "bias": np.zeros(spec.units),
        }
    return {}


def decay_exempt_names(spec: LayerSpec) -> set:
    """Local parameter names excluded from weight decay."""
    if spec.kind == "batchnorm":
        return {"gamma", "beta"}
    return {"bias"}


def init_buffers(spec: LayerSpec, in_shape) -> dict:
    if spec.kind == "batchnorm":
        m = in_shape[0]
        return {"running_mean": np.zeros(m), "running_var": np.ones(m)}
    return {}


# ---------------------------------------------------------------------------
# forward / backward per kind


def _conv_pad(spec: LayerSpec, x: np.ndarray) -> np.ndarray:
    if spec.padding == "same-width":
        kw = spec.kernel[1]
        left = (kw - 1) // 2
        return np.pad(x, ((0, 0), (0, 0), (0, 0), (left, kw - 1 - left)))
    return x


def _conv_forward(spec, values, x):
    w = values["weight"]
    o, mg, kh, kw = w.shape
    g = spec.groups
    og = o // g
    xp = _conv_pad(spec, x)
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    n, m, ho, wo = windows.shape[:4]
    out = np.empty((x.shape[0], o, ho, wo))
    for gi in range(g):
        out[:, gi * og : (gi + 1) * og] = np.einsum(
            "nmhwij,omij->nohw",
            windows[:, gi * mg : (gi + 1) * mg],
            w[gi * og : (gi + 1) * og],
            optimize=True,
        )
    if spec.bias:
        out += values["bias"][None, :, None, None]
    return out, {"xp": xp}


def _conv_backward(spec, values, cache, gy, want_param_grads):
    w = values["weight"]
    o, mg, kh, kw = w.shape
    g = spec.groups
    og = o // g
    xp = cache["xp"]
    ho, wo = gy.shape[2], gy.shape[3]
    grads = {}
    if want_param_grads:
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        gw = np.empty_like(w)
        for gi in range(g):
            gw[gi * og : (gi + 1) * og] = np.einsum(
                "nmhwij,nohw->omij",
                windows[:, gi * mg : (gi + 1) * mg],
                gy[:, gi * og : (gi + 1) * og],
                optimize=True,
            )
        grads["weight"] = gw
        if spec.bias:
            grads["bias"] = gy.sum(axis=(0, 2, 3))
    gxp = np.zeros_like(xp)
    for gi in range(g):
        gyg = gy[:, gi * og : (gi + 1) * og]
        wg = w[gi * og : (gi + 1) * og]
        sl = slice(gi * mg, (gi + 1) * mg)
        for i in range(kh):
            for j in range(kw):
                gxp[:, sl, i : i + ho, j : j + wo] += np.einsum(
                    "nohw,om->nmhw", gyg, wg[:, :, i, j], optimize=True
                )
    if spec.padding == "same-width":
        left = (kw - 1) // 2
        gx = gxp[:, :, :, left : gxp.shape[3] - (kw - 1 - left)]
    else:
        gx = gxp
    return gx, grads


def _bn_forward(spec, values, buffers, x, mode):
    gamma = values["gamma"][None, :, None, None]
    beta = values["beta"][None, :, None, None]
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        buffers["running_mean"] *= 1.0 - BATCHNORM_MOMENTUM
        buffers["running_mean"] += BATCHNORM_MOMENTUM * mean
        buffers["running_var"] *= 1.0 - BATCHNORM_MOMENTUM
        buffers["running_var"] += BATCHNORM_MOMENTUM * var
    else:
        mean = buffers["running_mean"]
        var = buffers["running_var"]
    invstd = 1.0 / np.sqrt(var + BATCHNORM_EPS)
    xhat = (x - mean[None, :, None, None]) * invstd[None, :, None, None]
    return gamma * xhat + beta, {"xhat": xhat, "invstd": invstd}


def _bn_backward(spec, values, cache, gy, want_param_grads):
    xhat = cache["xhat"]
    invstd = cache["invstd"][None, :, None, None]
    gamma = values["gamma"][None, :, None, None]
    n = gy.shape[0] * gy.shape[2] * gy.shape[3]
    gxhat = gy * gamma
    sum_g = gxhat.sum(axis=(0, 2, 3), keepdims=True)
    sum_gx = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    gx = invstd / n * (n * gxhat - sum_g - xhat * sum_gx)
    grads = {}
    if want_param_grads:
        grads["gamma"] = (gy * xhat).sum(axis=(0, 2, 3))
        grads["beta"] = gy.sum(axis=(0, 2, 3))
    return gx, grads


def _pool_windows(spec, x):
    _, _, _, ph, pw, sh, sw, ho, wo = _pool_geometry(spec, x.shape[1:])
    win = sliding_window_view(x, (ph, pw), axis=(2, 3))[:, :, ::sh, ::sw]
    return win, ph, pw, sh, sw, ho, wo


def _avgpool_backward(spec, cache, gy):
    x_shape, (ph, pw, sh, sw, ho, wo) = cache["x_shape"], cache["geom"]
    gx = np.zeros(x_shape)
    share = gy / (ph * pw)
    for i in range(ph):
        for j in range(pw):
            gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += share
    return gx


def _maxpool_backward(spec, cache, gy):
    x_shape, (ph, pw, sh, sw, ho, wo) = cache["x_shape"], cache["geom"]
    idx = cache["argmax"]
    gx = np.zeros(x_shape)
    for i in range(ph):
        for j in range(pw):
            mask = idx == (i * pw + j)
            gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gy * mask
    return gx


def forward(spec: LayerSpec, values: dict, buffers: dict, x: np.ndarray,
            mode: str, rng: np.random.Generator | None):
    """One layer forward pass; returns (output, cache-for-backward)."""
    if spec.kind == "conv2d":
        return _conv_forward(spec, values, x)
    if spec.kind == "batchnorm":
        return _bn_forward(spec, values, buffers, x, mode)
    if spec.kind == "elu":
        out = np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
        return out, {"x": x}
    if spec.kind == "square":
        return x * x, {"x": x}
    if spec.kind == "safelog":
        return np.log(np.maximum(x, SAFELOG_CLAMP)), {"x": x}
    if spec.kind in ("avgpool", "maxpool"):
        win, ph, pw, sh, sw, ho, wo = _pool_windows(spec, x)
        cache = {"x_shape": x.shape, "geom": (ph, pw, sh, sw, ho, wo)}
        if spec.kind == "avgpool":
            return win.mean(axis=(-2, -1)), cache
        flat = win.reshape(win.shape[:4] + (ph * pw,))
        cache["argmax"] = flat.argmax(axis=-1)
        return flat.max(axis=-1), cache
    if spec.kind == "dropout":
        if mode != "train" or spec.p == 0.0:
            return x, {"mask": None}
        if rng is None:
            raise ParameterError("dropout in train mode needs a random stream")
        mask = (rng.random(x.shape) >= spec.p) / (1.0 - spec.p)
        return x * mask, {"mask": mask}
    if spec.kind == "flatten":
        return x.reshape(x.shape[0], -1), {"x_shape": x.shape}
    if spec.kind == "dense":
        out = x @ values["weight"] + values["bias"]
        return out, {"x": x}
    if spec.kind == "permute":
        return np.ascontiguousarray(x.transpose(0, 2, 1, 3)), {}
    raise BuildError(f"unknown layer kind {spec.kind!r}")


def backward(spec: LayerSpec, values: dict, cache: dict, gy: np.ndarray,
             want_param_grads: bool):
    """One layer backward pass; returns (input gradient, parameter grads)."""
    if spec.kind == "conv2d":
        return _conv_backward(spec, values, cache, gy, want_param_grads)
    if spec.kind == "batchnorm":
        return _bn_backward(spec, values, cache, gy, want_param_grads)
    if spec.kind == "elu":
        x = cache["x"]
        return gy * np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0))), {}
    if spec.kind == "square":
        return gy * 2.0 * cache["x"], {}
    if spec.kind == "safelog":
        x = cache["x"]
        gx = np.where(x > SAFELOG_CLAMP, gy / np.maximum(x, SAFELOG_CLAMP), 0.0)
        return gx, {}
    if spec.kind == "avgpool":
        return _avgpool_backward(spec, cache, gy), {}
    if spec.kind == "maxpool":
        return _maxpool_backward(spec, cache, gy), {}
    if spec.kind == "dropout":
        mask = cache["mask"]
        return (gy if mask is None else gy * mask), {}
    if spec.kind == "flatten":
        return gy.reshape(cache["x_shape"]), {}
    if spec.kind == "dense":
        grads = {}
        if want_param_grads:
            grads["weight"] = cache["x"].T @ gy
            grads["bias"] = gy.sum(axis=0)
        return gy @ values["weight"].T, grads
    if spec.kind == "permute":
        return np.ascontiguousarray(gy.transpose(0, 2, 1, 3)), {}
    raise BuildError(f"unknown layer kind {spec.kind!r}")


def layer_forward(spec: LayerSpec, params: dict, x: np.ndarray,
                  mode: str = "eval", rng: np.random.Generator | None = None,
                  buffers: dict | None = None) -> np.ndarray:
    """Standalone single-layer application (testing convenience)."""
    if buffers is None:
        buffers = init_buffers(spec, x.shape[1:])
    out, _ = forward(spec, params, buffers, x, mode, rng)
    return out
