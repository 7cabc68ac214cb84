"""Dense N-D tensors with reverse-mode differentiation and Adam.

Define-by-run: every op returns a new Tensor holding a closure that routes
the upstream gradient to its parents. Layout for image tensors is fixed to
(batch, height, width, channels). Ops never broadcast silently; every shape
mismatch raises ShapeError naming both shapes. Training runs in float32;
gradient checks build float64 graphs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError, NumericError, ParameterError, ShapeError

_FINITE_CHECKS = False


def set_finite_checks(enabled):
    """Toggle per-op NaN/Inf detection (off by default for speed)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


class Tensor:
    """An ndarray plus an optional gradient and the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_op", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float32)
        self.data = array
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self._op})"


def _from_op(data, parents, backward_fn, op):
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NumericError(f"op {op!r} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = tuple(parents)
    out._backward_fn = backward_fn if out.requires_grad else None
    out._op = op
    out._consumed = False
    return out


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = grad
    else:
        tensor.grad = tensor.grad + grad


def _check_same_dtype(op, *tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"{op}: mixed dtypes {sorted(map(str, dtypes))}")


def backward(loss, parameters=()):
    """Reverse pass from a scalar loss; returns one gradient per parameter.

    Parameters the loss does not depend on get exactly-zero gradients. A
    second backward over the same loss raises GraphError.
    """
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("backward already ran on this graph; rebuild it first")
    loss._consumed = True

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    for node in topo:
        node.grad = None
    for param in parameters:
        param.grad = None

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)

    return [p.grad if p.grad is not None else np.zeros_like(p.data)
            for p in parameters]


class Graph:
    """Registry of named trainable tensors plus the backward entry point."""

    def __init__(self):
        self.parameters = {}

    def parameter(self, name, values, dtype=np.float32):
        if name in self.parameters:
            raise GraphError(f"parameter {name!r} already registered")
        tensor = Tensor(np.asarray(values, dtype=dtype), requires_grad=True)
        self.parameters[name] = tensor
        return tensor

    def backward(self, loss):
        names = list(self.parameters)
        grads = backward(loss, [self.parameters[n] for n in names])
        return dict(zip(names, grads))

    def parameter_count(self):
        return sum(int(t.data.size) for t in self.parameters.values())


# --- convolution machinery ---------------------------------------------------

def _same_geometry(size, kernel, stride):
    out = -(-size // stride)
    pad = max((out - 1) * stride + kernel - size, 0)
    # extra cell goes after the data (bottom/right) when pad is odd
    return out, pad // 2, pad - pad // 2


def _conv_geometry(h, w, kh, kw, stride, padding):
    if padding == "same":
        oh, pt, pb = _same_geometry(h, kh, stride)
        ow, pl, pr = _same_geometry(w, kw, stride)
    elif padding == "valid":
        if h < kh or w < kw:
            raise ShapeError(
                f"valid conv needs input >= kernel, got input {(h, w)} "
                f"kernel {(kh, kw)}"
            )
        oh = (h - kh) // stride + 1
        ow = (w - kw) // stride + 1
        pt = pb = pl = pr = 0
    else:
        raise ParameterError(f"padding must be 'same' or 'valid', got {padding!r}")
    return oh, ow, (pt, pb, pl, pr)


def _im2col(x, kh, kw, stride, pads):
    pt, pb, pl, pr = pads
    if any(pads):
        x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    b, hp, wp, c = x.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, (b, oh, ow, kh, kw, c),
        (s0, s1 * stride, s2 * stride, s1, s2, s3),
    )
    return np.ascontiguousarray(windows).reshape(b, oh, ow, kh * kw * c)


def _col2im(cols, out_shape, kh, kw, stride, pads):
    b, h, w, c = out_shape
    pt, pb, pl, pr = pads
    hp, wp = h + pt + pb, w + pl + pr
    oh, ow = cols.shape[1], cols.shape[2]
    padded = np.zeros((b, hp, wp, c), dtype=cols.dtype)
    tiles = cols.reshape(b, oh, ow, kh, kw, c)
    for i in range(kh):
        hi = i + (oh - 1) * stride + 1
        for j in range(kw):
            wj = j + (ow - 1) * stride + 1
            padded[:, i:hi:stride, j:wj:stride, :] += tiles[:, :, :, i, j, :]
    return padded[:, pt:pt + h, pl:pl + w, :]


def _check_conv_args(op, x, kernel, bias, stride):
    if x.data.ndim != 4:
        raise ShapeError(f"{op}: input must be 4-D (B,H,W,C), got {x.shape}")
    if kernel.data.ndim != 4:
        raise ShapeError(f"{op}: kernel must be 4-D (kh,kw,Cin,Cout), got {kernel.shape}")
    if stride < 1:
        raise ParameterError(f"{op}: stride must be >= 1, got {stride}")
    if bias is not None and bias.data.ndim != 1:
        raise ShapeError(f"{op}: bias must be 1-D, got {bias.shape}")


def conv2d(x, kernel, bias=None, stride=1, padding="same"):
    """Cross-correlation of x[B,H,W,Cin] with kernel[kh,kw,Cin,Cout]."""
    _check_conv_args("conv2d", x, kernel, bias, stride)
    kh, kw, cin, cout = kernel.shape
    if x.shape[3] != cin:
        raise ShapeError(
            f"conv2d: input channels {x.shape} do not match kernel {kernel.shape}"
        )
    if bias is not None and bias.shape[0] != cout:
        raise ShapeError(f"conv2d: bias {bias.shape} does not match kernel {kernel.shape}")
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    _check_same_dtype("conv2d", *parents)
    b, h, w, _ = x.shape
    oh, ow, pads = _conv_geometry(h, w, kh, kw, stride, padding)
    cols = _im2col(x.data, kh, kw, stride, pads)
    mat = kernel.data.reshape(kh * kw * cin, cout)
    out = cols.reshape(-1, kh * kw * cin) @ mat
    out = out.reshape(b, oh, ow, cout)
    if bias is not None:
        out = out + bias.data

    def backward_fn(grad):
        flat = grad.reshape(-1, cout)
        if x.requires_grad:
            _accumulate(x, _col2im(
                (flat @ mat.T).reshape(b, oh, ow, kh * kw * cin),
                x.shape, kh, kw, stride, pads,
            ))
        if kernel.requires_grad:
            gk = cols.reshape(-1, kh * kw * cin).T @ flat
            _accumulate(kernel, gk.reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, grad.sum(axis=(0, 1, 2)))

    return _from_op(out, parents, backward_fn, "conv2d")


def _transpose_target(h, w, kh, kw, stride, padding):
    if padding == "same":
        return h * stride, w * stride
    if padding == "valid":
        return (h - 1) * stride + kh, (w - 1) * stride + kw
    raise ParameterError(f"padding must be 'same' or 'valid', got {padding!r}")


def conv2d_transpose(x, kernel, bias=None, stride=1, padding="same"):
    """Exact adjoint of conv2d: maps x[B,h,w,Cout] to [B,h*s,w*s,Cin] (same).

    Sharing geometry with the paired conv2d makes <conv(u,K), v> equal to
    <u, conv_transpose(v,K)> up to float rounding.
    """
    _check_conv_args("conv2d_transpose", x, kernel, bias, stride)
    kh, kw, cin, cout = kernel.shape
    if x.shape[3] != cout:
        raise ShapeError(
            f"conv2d_transpose: input channels {x.shape} do not match kernel "
            f"{kernel.shape}"
        )
    if bias is not None and bias.shape[0] != cin:
        raise ShapeError(
            f"conv2d_transpose: bias {bias.shape} does not match kernel {kernel.shape}"
        )
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    _check_same_dtype("conv2d_transpose", *parents)
    b, h, w, _ = x.shape
    th, tw = _transpose_target(h, w, kh, kw, stride, padding)
    oh, ow, pads = _conv_geometry(th, tw, kh, kw, stride, padding)
    if (oh, ow) != (h, w):  # holds by construction; guards geometry edits
        raise ShapeError(f"inconsistent transpose geometry {(oh, ow)} vs {(h, w)}")
    mat = kernel.data.reshape(kh * kw * cin, cout)
    cols = (x.data.reshape(-1, cout) @ mat.T).reshape(b, h, w, kh * kw * cin)
    out = _col2im(cols, (b, th, tw, cin), kh, kw, stride, pads)
    if bias is not None:
        out = out + bias.data

    def backward_fn(grad):
        gcols = _im2col(grad, kh, kw, stride, pads)
        if x.requires_grad:
            gx = gcols.reshape(-1, kh * kw * cin) @ mat
            _accumulate(x, gx.reshape(b, h, w, cout))
        if kernel.requires_grad:
            gk = gcols.reshape(-1, kh * kw * cin).T @ x.data.reshape(-1, cout)
            _accumulate(kernel, gk.reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, grad.sum(axis=(0, 1, 2)))

    return _from_op(out, parents, backward_fn, "conv2d_transpose")


# --- dense / activations / reductions ----------------------------------------

def dense(x, weight, bias):
    """x[B,F] @ weight[F,G] + bias[G]."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(f"dense: need 2-D input/weight, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(
            f"dense: incompatible shapes input {x.shape}, weight {weight.shape}, "
            f"bias {bias.shape}"
        )
    _check_same_dtype("dense", x, weight, bias)
    out = x.data @ weight.data + bias.data

    def backward_fn(grad):
        if x.requires_grad:
            _accumulate(x, grad @ weight.data.T)
        if weight.requires_grad:
            _accumulate(weight, x.data.T @ grad)
        if bias.requires_grad:
            _accumulate(bias, grad.sum(axis=0))

    return _from_op(out, (x, weight, bias), backward_fn, "dense")


def relu(x):
    mask = x.data > 0
    out = np.where(mask, x.data, 0.0).astype(x.dtype)

    def backward_fn(grad):
        _accumulate(x, grad * mask)

    return _from_op(out, (x,), backward_fn, "relu")


def sigmoid(x):
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ed = np.exp(d[~pos])
    out[~pos] = ed / (1.0 + ed)

    def backward_fn(grad):
        _accumulate(x, grad * out * (1.0 - out))

    return _from_op(out, (x,), backward_fn, "sigmoid")


def prelu(x, slope):
    """Leaky rectifier with one learnable slope per channel (last axis)."""
    if slope.data.ndim != 1 or slope.shape[0] != x.shape[-1]:
        raise ShapeError(f"prelu: slope {slope.shape} does not match input {x.shape}")
    _check_same_dtype("prelu", x, slope)
    negative = x.data < 0
    out = np.where(negative, x.data * slope.data, x.data).astype(x.dtype)

    def backward_fn(grad):
        if x.requires_grad:
            _accumulate(x, np.where(negative, grad * slope.data, grad).astype(x.dtype))
        if slope.requires_grad:
            contrib = np.where(negative, grad * x.data, 0.0)
            axes = tuple(range(x.data.ndim - 1))
            _accumulate(slope, contrib.sum(axis=axes).astype(slope.dtype))

    return _from_op(out, (x, slope), backward_fn, "prelu")


def global_avg_pool(x):
    """Mean over the spatial axes: [B,H,W,C] -> [B,C]."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: input must be 4-D, got {x.shape}")
    b, h, w, c = x.shape
    out = x.data.mean(axis=(1, 2))

    def backward_fn(grad):
        _accumulate(x, np.broadcast_to(
            grad[:, None, None, :] / (h * w), (b, h, w, c)
        ).astype(x.dtype))

    return _from_op(out, (x,), backward_fn, "global_avg_pool")


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    _check_same_dtype("add", a, b)
    out = a.data + b.data

    def backward_fn(grad):
        _accumulate(a, grad)
        _accumulate(b, grad)

    return _from_op(out, (a, b), backward_fn, "add")


def mul(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    _check_same_dtype("mul", a, b)
    out = a.data * b.data

    def backward_fn(grad):
        if a.requires_grad:
            _accumulate(a, grad * b.data)
        if b.requires_grad:
            _accumulate(b, grad * a.data)

    return _from_op(out, (a, b), backward_fn, "mul")


def scale(x, factor):
    """Multiply by a python scalar constant."""
    factor = float(factor)
    out = x.data * x.dtype.type(factor)

    def backward_fn(grad):
        _accumulate(x, grad * x.dtype.type(factor))

    return _from_op(out, (x,), backward_fn, "scale")


def mul_channels(x, s):
    """Scale x[B,...,C] per channel by s[B,C], broadcast over inner axes."""
    if s.data.ndim != 2 or x.data.ndim < 2:
        raise ShapeError(f"mul_channels: need x[B,...,C], s[B,C]; got {x.shape}, {s.shape}")
    if x.shape[0] != s.shape[0] or x.shape[-1] != s.shape[1]:
        raise ShapeError(f"mul_channels: shapes {x.shape} and {s.shape} disagree")
    _check_same_dtype("mul_channels", x, s)
    expand = (slice(None),) + (None,) * (x.data.ndim - 2) + (slice(None),)
    out = x.data * s.data[expand]

    def backward_fn(grad):
        if x.requires_grad:
            _accumulate(x, grad * s.data[expand])
        if s.requires_grad:
            axes = tuple(range(1, x.data.ndim - 1))
            _accumulate(s, (grad * x.data).sum(axis=axes))

    return _from_op(out, (x, s), backward_fn, "mul_channels")


def concat(tensors, axis=-1):
    """Concatenate along the last axis."""
    tensors = tuple(tensors)
    if len(tensors) < 2:
        raise ShapeError("concat: need at least two tensors")
    if axis != -1:
        raise ParameterError("concat: only the last axis is supported")
    lead = {t.shape[:-1] for t in tensors}
    if len(lead) > 1:
        raise ShapeError(f"concat: leading shapes differ: {sorted(lead)}")
    _check_same_dtype("concat", *tensors)
    out = np.concatenate([t.data for t in tensors], axis=-1)
    sizes = [t.shape[-1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            _accumulate(t, grad[..., lo:hi])

    return _from_op(out, tensors, backward_fn, "concat")


def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    out = x.data.reshape(shape)

    def backward_fn(grad):
        _accumulate(x, grad.reshape(x.shape))

    return _from_op(out, (x,), backward_fn, "reshape")


def sum_all(x):
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward_fn(grad):
        _accumulate(x, np.broadcast_to(grad, x.shape).astype(x.dtype))

    return _from_op(out, (x,), backward_fn, "sum_all")


def mse(x, y):
    """Mean of squared differences over all elements; scalar output."""
    if x.shape != y.shape:
        raise ShapeError(f"mse: shapes {x.shape} and {y.shape} differ")
    _check_same_dtype("mse", x, y)
    diff = x.data - y.data
    n = diff.size
    out = np.asarray((diff * diff).sum() / n, dtype=x.dtype)

    def backward_fn(grad):
        g = grad * (2.0 / n) * diff
        if x.requires_grad:
            _accumulate(x, g.astype(x.dtype))
        if y.requires_grad:
            _accumulate(y, (-g).astype(y.dtype))

    return _from_op(out, (x, y), backward_fn, "mse")


# --- communication-specific ops ----------------------------------------------

NORM_FLOOR = 1e-12


def normalize_power(z, power):
    """Scale each batch row of z[B,...,2] so mean complex-symbol power is `power`.

    out_b = sqrt(k * power) * z_b / ||z_b|| with k complex symbols per row.
    Rows with ||z|| below NORM_FLOOR divide by the floor instead, which keeps
    the zero row finite and its gradient defined.
    """
    if z.data.ndim < 2 or z.shape[-1] != 2:
        raise ShapeError(f"normalize_power: need [B,...,2] pairs, got {z.shape}")
    if power <= 0:
        raise ParameterError(f"power must be > 0, got {power}")
    b = z.shape[0]
    k = z.data.size // (b * 2)
    flat = z.data.reshape(b, -1)
    norms = np.sqrt((flat * flat).sum(axis=1))
    safe = np.maximum(norms, z.dtype.type(NORM_FLOOR))
    root_kp = z.dtype.type(np.sqrt(k * power))
    inv = (root_kp / safe).astype(z.dtype)
    out = (flat * inv[:, None]).reshape(z.shape)

    def backward_fn(grad):
        gflat = grad.reshape(b, -1)
        dot = (gflat * flat).sum(axis=1)
        guarded = norms >= NORM_FLOOR
        # d/dz of z/||z||: identity part minus the radial projection; the
        # projection vanishes where the denominator is the constant floor
        radial = np.where(guarded, dot / (safe * safe), 0.0).astype(z.dtype)
        gz = inv[:, None] * (gflat - flat * radial[:, None])
        _accumulate(z, gz.reshape(z.shape).astype(z.dtype))

    return _from_op(out, (z,), backward_fn, "normalize_power")


def complex_channel(z, gains, noise):
    """Apply y_i = z_i * h_i + n_i on the channel-paired representation.

    z is [B,k,2] with (..., 0) the real and (..., 1) the imaginary part;
    gains/noise are constant complex arrays of shape [B,k]. Gradients flow
    through z only (multiplication by conj(h) on the way back).
    """
    if z.data.ndim != 3 or z.shape[-1] != 2:
        raise ShapeError(f"complex_channel: need z[B,k,2], got {z.shape}")
    b, k, _ = z.shape
    gains = np.asarray(gains)
    noise = np.asarray(noise)
    if gains.shape != (b, k):
        raise ShapeError(f"complex_channel: gains {gains.shape} do not match z {z.shape}")
    if noise.shape != (b, k):
        raise ShapeError(f"complex_channel: noise {noise.shape} do not match z {z.shape}")
    hr = gains.real.astype(z.dtype)
    hi = gains.imag.astype(z.dtype)
    zr, zi = z.data[..., 0], z.data[..., 1]
    out = np.empty_like(z.data)
    out[..., 0] = zr * hr - zi * hi + noise.real
    out[..., 1] = zr * hi + zi * hr + noise.imag

    def backward_fn(grad):
        gr, gi = grad[..., 0], grad[..., 1]
        gz = np.empty_like(z.data)
        gz[..., 0] = gr * hr + gi * hi
        gz[..., 1] = -gr * hi + gi * hr
        _accumulate(z, gz)

    return _from_op(out, (z,), backward_fn, "complex_channel")


# --- optimizer ----------------------------------------------------------------

class Adam:
    """Adam with bias correction; moments live in the parameter dtype."""

    def __init__(self, parameters, learning_rate=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        if learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {learning_rate}")
        self.parameters = dict(parameters)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = {
            name: np.zeros_like(p.data) for name, p in self.parameters.items()
        }
        self.second_moment = {
            name: np.zeros_like(p.data) for name, p in self.parameters.items()
        }

    def step(self, grads):
        """One update from a dict of gradients keyed like the parameters."""
        missing = set(self.parameters) - set(grads)
        if missing:
            raise ParameterError(f"gradients missing for {sorted(missing)}")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1 ** t
        correction2 = 1.0 - b2 ** t
        for name, param in self.parameters.items():
            g = grads[name]
            if g.shape != param.data.shape:
                raise ShapeError(
                    f"gradient for {name!r} has shape {g.shape}, parameter "
                    f"{param.data.shape}"
                )
            m = self.first_moment[name]
            v = self.second_moment[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / correction1
            vhat = v / correction2
            param.data -= (self.learning_rate * mhat
                           / (np.sqrt(vhat) + self.eps)).astype(param.dtype)


# --- gradient checking ---------------------------------------------------------

@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tolerance: float
    details: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def grad_check(fn, inputs, step=1e-4, tolerance=1e-5, seed=0):
    """Central-difference check of `fn` against its reverse-mode gradients.

    `fn` maps float64 Tensors to one output Tensor; the scalar under test is
    sum(output * R) for a fixed random R, which exercises every output
    element. Relative error per input element is |num - ana| divided by
    max(|num|, |ana|, 1).
    """
    rng = np.random.default_rng(seed)
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a.copy(), requires_grad=True, dtype=np.float64) for a in arrays]
    out = fn(*tensors)
    weights = rng.standard_normal(out.shape)
    loss = sum_all(mul(out, Tensor(weights, dtype=np.float64)))
    analytic = backward(loss, tensors)

    def loss_value(datas):
        result = fn(*[Tensor(d, dtype=np.float64) for d in datas])
        return float((result.data * weights).sum())

    max_rel = 0.0
    details = []
    for index, (base, ana) in enumerate(zip(arrays, analytic)):
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for pos in range(flat.size):
            saved = flat[pos]
            flat[pos] = saved + step
            up = loss_value(arrays)
            flat[pos] = saved - step
            down = loss_value(arrays)
            flat[pos] = saved
            num_flat[pos] = (up - down) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(numeric), np.abs(ana)), 1.0)
        rel = float((np.abs(numeric - ana) / denom).max()) if base.size else 0.0
        details.append((index, rel))
        max_rel = max(max_rel, rel)
    return GradCheckReport(
        passed=max_rel < tolerance,
        max_rel_error=max_rel,
        tolerance=tolerance,
        details=details,
    )
