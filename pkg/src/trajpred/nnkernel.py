"""Minimal reverse-mode differentiation kernel.

Everything is float64 and 2-D: a Tensor is a (rows, cols) matrix and a
batch of vectors is stored row-major, one example per row. Operations
record backward closures on a Tape in creation order; replaying the tape
in reverse is a valid topological order, so no graph search is needed.

Gate layout for the LSTM cell is (input, forget, cell, output), stacked
along the columns of the weight matrices. The checkpoint format is
versioned and documented in `save_checkpoint`.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DimensionError, NumericError


class Tensor:
    """A 2-D float64 array plus its accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor must be at most 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise DimensionError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


class Tape:
    """Ordered record of primitive ops; backward runs them in reverse."""

    def __init__(self):
        self._backward_ops = []

    def record(self, fn):
        self._backward_ops.append(fn)

    def backward(self, loss: Tensor):
        if loss.data.size != 1:
            raise DimensionError("backward() requires a scalar loss tensor")
        _accum(loss, np.ones_like(loss.data))
        for fn in reversed(self._backward_ops):
            fn()

    def __len__(self):
        return len(self._backward_ops)


# ---------------------------------------------------------------------------
# Primitives. Each takes an optional tape; with tape=None only the forward
# value is computed (inference mode).
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, tape=None) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    if tape is not None:
        def back():
            _accum(a, out.grad @ b.data.T)
            _accum(b, a.data.T @ out.grad)
        tape.record(back)
    return out


def _binary_shapes(a: Tensor, b: Tensor, name: str):
    # same shape, or b a single row broadcast over a's rows
    if a.shape == b.shape:
        return False
    if b.rows == 1 and b.cols == a.cols:
        return True
    raise DimensionError(f"{name}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor, tape=None) -> Tensor:
    bcast = _binary_shapes(a, b, "add")
    out = Tensor(a.data + b.data)
    if tape is not None:
        def back():
            _accum(a, out.grad)
            _accum(b, out.grad.sum(axis=0, keepdims=True) if bcast else out.grad)
        tape.record(back)
    return out


def sub(a: Tensor, b: Tensor, tape=None) -> Tensor:
    bcast = _binary_shapes(a, b, "sub")
    out = Tensor(a.data - b.data)
    if tape is not None:
        def back():
            _accum(a, out.grad)
            g = -out.grad
            _accum(b, g.sum(axis=0, keepdims=True) if bcast else g)
        tape.record(back)
    return out


def mul(a: Tensor, b: Tensor, tape=None) -> Tensor:
    bcast = _binary_shapes(a, b, "mul")
    out = Tensor(a.data * b.data)
    if tape is not None:
        def back():
            _accum(a, out.grad * b.data)
            g = out.grad * a.data
            _accum(b, g.sum(axis=0, keepdims=True) if bcast else g)
        tape.record(back)
    return out


def div(a: Tensor, b: Tensor, tape=None) -> Tensor:
    bcast = _binary_shapes(a, b, "div")
    out = Tensor(a.data / b.data)
    if tape is not None:
        def back():
            _accum(a, out.grad / b.data)
            g = -out.grad * a.data / (b.data * b.data)
            _accum(b, g.sum(axis=0, keepdims=True) if bcast else g)
        tape.record(back)
    return out


def affine_const(a: Tensor, mult: float, shift: float, tape=None) -> Tensor:
    """y = mult * a + shift with scalar constants."""
    out = Tensor(mult * a.data + shift)
    if tape is not None:
        def back():
            _accum(a, mult * out.grad)
        tape.record(back)
    return out


def square(a: Tensor, tape=None) -> Tensor:
    out = Tensor(a.data * a.data)
    if tape is not None:
        def back():
            _accum(a, 2.0 * a.data * out.grad)
        tape.record(back)
    return out


def exp(a: Tensor, tape=None) -> Tensor:
    out = Tensor(np.exp(a.data))
    if tape is not None:
        def back():
            _accum(a, out.data * out.grad)
        tape.record(back)
    return out


def log(a: Tensor, tape=None) -> Tensor:
    out = Tensor(np.log(a.data))
    if tape is not None:
        def back():
            _accum(a, out.grad / a.data)
        tape.record(back)
    return out


def tanh(a: Tensor, tape=None) -> Tensor:
    out = Tensor(np.tanh(a.data))
    if tape is not None:
        def back():
            _accum(a, (1.0 - out.data * out.data) * out.grad)
        tape.record(back)
    return out


def sigmoid(a: Tensor, tape=None) -> Tensor:
    out = Tensor(1.0 / (1.0 + np.exp(-a.data)))
    if tape is not None:
        def back():
            _accum(a, out.data * (1.0 - out.data) * out.grad)
        tape.record(back)
    return out


def leaky_relu(a: Tensor, alpha: float = 0.1, tape=None) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, alpha * a.data))
    if tape is not None:
        def back():
            _accum(a, np.where(mask, out.grad, alpha * out.grad))
        tape.record(back)
    return out


def slice_cols(a: Tensor, start: int, stop: int, tape=None) -> Tensor:
    out = Tensor(a.data[:, start:stop].copy())
    if tape is not None:
        def back():
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[:, start:stop] += out.grad
        tape.record(back)
    return out


def concat_cols(parts, tape=None) -> Tensor:
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise DimensionError("concat_cols: row counts differ")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    if tape is not None:
        offsets = np.cumsum([0] + [p.cols for p in parts])
        def back():
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                _accum(p, out.grad[:, lo:hi])
        tape.record(back)
    return out


def sum_all(a: Tensor, tape=None) -> Tensor:
    out = Tensor(a.data.sum())
    if tape is not None:
        def back():
            _accum(a, np.full_like(a.data, out.grad[0, 0]))
        tape.record(back)
    return out


def mean_all(a: Tensor, tape=None) -> Tensor:
    n = a.data.size
    out = Tensor(a.data.mean())
    if tape is not None:
        def back():
            _accum(a, np.full_like(a.data, out.grad[0, 0] / n))
        tape.record(back)
    return out


# ---------------------------------------------------------------------------
# Composite ops used by the model
# ---------------------------------------------------------------------------


def linear_fwd(W: Tensor, b: Tensor, x: Tensor, tape=None) -> Tensor:
    """y = x W + b for a batch of row vectors x (b is a single row)."""
    if x.cols != W.rows or b.cols != W.cols or b.rows != 1:
        raise DimensionError(
            f"linear_fwd: x {x.shape}, W {W.shape}, b {b.shape}")
    return add(matmul(x, W, tape), b, tape)


_GATE_NAMES = ("input", "forget", "cell", "output")


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, Wx: Tensor,
              Wh: Tensor, b: Tensor, tape=None):
    """One LSTM step for a batch of rows; returns (h, c).

    Gate pre-activations are stacked column-wise as (i, f, g, o).
    """
    H = h_prev.cols
    if Wx.cols != 4 * H or Wh.shape != (H, 4 * H) or b.cols != 4 * H:
        raise DimensionError(
            f"lstm_cell: hidden {H}, Wx {Wx.shape}, Wh {Wh.shape}, b {b.shape}")
    z = add(add(matmul(x, Wx, tape), matmul(h_prev, Wh, tape), tape), b, tape)
    if not np.isfinite(z.data).all():
        bad = [_GATE_NAMES[k] for k in range(4)
               if not np.isfinite(z.data[:, k * H:(k + 1) * H]).all()]
        raise NumericError(f"non-finite pre-activation in gate(s): {', '.join(bad)}")
    i = sigmoid(slice_cols(z, 0, H, tape), tape)
    f = sigmoid(slice_cols(z, H, 2 * H, tape), tape)
    g = tanh(slice_cols(z, 2 * H, 3 * H, tape), tape)
    o = sigmoid(slice_cols(z, 3 * H, 4 * H, tape), tape)
    c = add(mul(f, c_prev, tape), mul(i, g, tape), tape)
    h = mul(o, tanh(c, tape), tape)
    return h, c


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: Tensor, targets, tape=None) -> Tensor:
    """Mean cross-entropy of integer targets under softmax(logits).

    `targets` is an int array of length logits.rows. Log-sum-exp is
    stabilised by subtracting the row max.
    """
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != logits.rows:
        raise DimensionError(
            f"softmax_xent: {logits.rows} rows vs {t.shape[0]} targets")
    if (t < 0).any() or (t >= logits.cols).any():
        raise IndexError(f"target class out of range [0, {logits.cols})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(z.shape[0]), t]
    out = Tensor((lse - picked).mean())
    if tape is not None:
        def back():
            p = softmax(logits.data)
            p[np.arange(p.shape[0]), t] -= 1.0
            _accum(logits, out.grad[0, 0] * p / p.shape[0])
        tape.record(back)
    return out


# ---------------------------------------------------------------------------
# Parameters, Adam, gradient check, checkpoints
# ---------------------------------------------------------------------------


class ParamSet:
    """Named trainable tensors with paired Adam moment buffers."""

    def __init__(self):
        self.params = {}   # name -> Tensor
        self.m = {}
        self.v = {}
        self.step_count = 0

    def add(self, name: str, data) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(data, dtype=np.float64))
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def n_coords(self):
        return sum(t.data.size for t in self.params.values())

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name, t in self.params.items():
            out.add(name, t.data.copy())
            out.m[name] = self.m[name].copy()
            out.v[name] = self.v[name].copy()
        out.step_count = self.step_count
        return out


def adam_step(params: ParamSet, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update using the gradients stored on the tensors.

    Raises NumericError (before touching any state) if a gradient is
    non-finite; missing gradients count as zero.
    """
    grads = {}
    for name, t in params.params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if g.shape != t.data.shape:
            raise DimensionError(f"gradient shape mismatch for {name!r}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name!r}; update skipped")
        grads[name] = g
    params.step_count += 1
    k = params.step_count
    bc1 = 1.0 - beta1 ** k
    bc2 = 1.0 - beta2 ** k
    for name, g in grads.items():
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.params[name].data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def grad_check(loss_fn, params: ParamSet, eps=1e-5, max_coords=500, seed=0):
    """Max relative error between analytic and central-difference gradients.

    `loss_fn(tape)` must rebuild the loss from the current parameter
    values and be deterministic. At most `max_coords` randomly chosen
    coordinates are perturbed. Returns 0.0 for an empty ParamSet.
    """
    total = params.n_coords()
    if total == 0:
        return 0.0
    tape = Tape()
    loss = loss_fn(tape)
    params.zero_grad()
    tape.backward(loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.params.items()}

    coords = [(name, idx) for name, t in params.params.items()
              for idx in range(t.data.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > max_coords:
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in picks]

    worst = 0.0
    for name, idx in coords:
        flat = params.params[name].data.reshape(-1)
        saved = flat[idx]
        flat[idx] = saved + eps
        lp = loss_fn(None).item()
        flat[idx] = saved - eps
        lm = loss_fn(None).item()
        flat[idx] = saved
        numeric = (lp - lm) / (2.0 * eps)
        a = analytic[name].reshape(-1)[idx]
        rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
        worst = max(worst, rel)
    return worst


_CKPT_MAGIC = b"TPCKPT01"


def save_checkpoint(path, params: ParamSet, hyper: dict):
    """Write parameters to a binary checkpoint.

    Layout: magic "TPCKPT01"; u32 header length + UTF-8 JSON of the
    hyperparameter dict; u32 entry count; per entry u16 name length,
    name bytes, u32 rows, u32 cols, then rows*cols little-endian f64.
    """
    header = json.dumps(hyper, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(params.params)))
        for name, t in params.params.items():
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<II", t.rows, t.cols))
            f.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (ParamSet, hyper dict)."""
    with open(path, "rb") as f:
        if f.read(8) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        hyper = json.loads(f.read(hlen).decode())
        (count,) = struct.unpack("<I", f.read(4))
        params = ParamSet()
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode()
            rows, cols = struct.unpack("<II", f.read(8))
            data = np.frombuffer(f.read(rows * cols * 8), dtype="<f8")
            params.add(name, data.reshape(rows, cols))
    return params, hyper


def uniform_init(rng, rows, cols, fan_in):
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    lim = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=(rows, cols))


def lstm_init(rng, input_size, hidden):
    """(Wx, Wh, b) arrays with the forget-gate bias set to 1.0."""
    Wx = uniform_init(rng, input_size, 4 * hidden, input_size + hidden)
    Wh = uniform_init(rng, hidden, 4 * hidden, input_size + hidden)
    b = np.zeros((1, 4 * hidden))
    b[0, hidden:2 * hidden] = 1.0
    return Wx, Wh, b
