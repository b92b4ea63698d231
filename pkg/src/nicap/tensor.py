"""Dense tensors with tape-based reverse-mode differentiation.

Storage is float32 by default; float64 tensors are supported so test oracles
can re-evaluate a computation in higher precision. Shapes must match exactly
everywhere: there is no broadcasting (bias addition is its own op).
"""

import numpy as np

from . import kernels
from .errors import ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A row-major float buffer, optionally tracking a gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in _FLOAT_DTYPES else np.float32
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops; replayed in reverse by backward()."""

    def __init__(self):
        self._nodes = []  # (output Tensor, [(input Tensor, vjp), ...])

    def record(self, out, pulls):
        self._nodes.append((out, pulls))

    def __len__(self):
        return len(self._nodes)


def backward(root, tape):
    """Accumulate d(root)/d(x) into x.grad for every reachable x.

    Adjoints are collected in a scratch map and only added into .grad at the
    end, so repeated backward calls add up exactly (caller zeroes grads
    between optimizer steps).
    """
    if root.data.size != 1:
        raise ShapeError(f"backward root must be scalar, got shape {root.shape}")
    adjoints = {id(root): np.ones_like(root.data)}
    seen = {id(root): root}
    for out, pulls in reversed(tape._nodes):
        g = adjoints.get(id(out))
        if g is None:
            continue
        for inp, vjp in pulls:
            contrib = vjp(g)
            key = id(inp)
            if key in adjoints:
                adjoints[key] = adjoints[key] + contrib
            else:
                adjoints[key] = contrib
                seen[key] = inp
    for key, t in seen.items():
        if t.requires_grad:
            t.accumulate_grad(adjoints[key])


def _track(out_data, pulls, tape):
    out = Tensor(out_data, dtype=out_data.dtype)
    if tape is not None and any(t.requires_grad for t, _ in pulls):
        out.requires_grad = True
        tape.record(out, pulls)
    return out


def matmul(a, b, tape=None):
    """Standard 2-D matrix product."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data
    return _track(out, [(a, lambda g: g @ b.data.T),
                        (b, lambda g: a.data.T @ g)], tape)


def add(a, b, tape=None):
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} != {b.shape}")
    return _track(a.data + b.data, [(a, lambda g: g), (b, lambda g: g)], tape)


def mul(a, b, tape=None):
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} != {b.shape}")
    return _track(a.data * b.data, [(a, lambda g: g * b.data),
                                    (b, lambda g: g * a.data)], tape)


def add_bias(x, b, tape=None):
    """Add a length-N bias row to every row of a ...xN tensor."""
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: shapes {x.shape} and {b.shape}")
    return _track(x.data + b.data,
                  [(x, lambda g: g),
                   (b, lambda g: g.reshape(-1, b.shape[0]).sum(axis=0))], tape)


def scale(x, alpha, shift=0.0, tape=None):
    """alpha * x + shift for scalar constants."""
    a = x.data.dtype.type(alpha)
    s = x.data.dtype.type(shift)
    return _track(a * x.data + s, [(x, lambda g: g * a)], tape)


def sigmoid(x, tape=None):
    y = kernels.sigmoid(x.data)
    return _track(y, [(x, lambda g: g * y * (1.0 - y))], tape)


def tanh(x, tape=None):
    y = np.tanh(x.data)
    return _track(y, [(x, lambda g: g * (1.0 - y * y))], tape)


def concat(tensors, axis, tape=None):
    if not tensors:
        raise ShapeError("concat: no operands")
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        s = list(t.shape)
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} on axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    pulls = []
    start = 0
    for t in tensors:
        width = t.shape[axis]
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(start, start + width)
        pulls.append((t, lambda g, sl=tuple(sl): np.ascontiguousarray(g[sl])))
        start += width
    return _track(out, pulls, tape)


def narrow(x, axis, start, length, tape=None):
    """Contiguous slice along one axis."""
    if axis >= x.data.ndim or start < 0 or length < 1 or start + length > x.shape[axis]:
        raise ShapeError(f"narrow: range [{start},{start + length}) out of axis {axis} "
                         f"of shape {x.shape}")
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def pull(g):
        full = np.zeros_like(x.data)
        full[sl] = g
        return full

    return _track(np.ascontiguousarray(x.data[sl]), [(x, pull)], tape)


def reshape(x, shape, tape=None):
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: {x.shape} -> {tuple(shape)}")
    return _track(x.data.reshape(shape),
                  [(x, lambda g: g.reshape(x.shape))], tape)


def sum_all(x, tape=None):
    out = np.array([x.data.sum()], dtype=x.dtype)
    return _track(out, [(x, lambda g: np.full_like(x.data, g[0]))], tape)


def softmax_rows(x, tape=None):
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows: need 2-D input, got {x.shape}")
    y = kernels.softmax_rows(x.data)

    def pull(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (g - dot) * y

    return _track(y, [(x, pull)], tape)


def log_softmax_rows(x, tape=None):
    if x.data.ndim != 2:
        raise ShapeError(f"log_softmax_rows: need 2-D input, got {x.shape}")
    y = kernels.log_softmax_rows(x.data)

    def pull(g):
        return g - np.exp(y) * g.sum(axis=1, keepdims=True)

    return _track(y, [(x, pull)], tape)


def gather_rows(table, ids, tape=None):
    """Row lookup by integer id; out-of-range ids are rejected, never wrapped."""
    ids = np.asarray(ids)
    if ids.ndim != 1:
        raise ShapeError(f"gather_rows: ids must be 1-D, got {ids.shape}")
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ShapeError(f"gather_rows: id out of range for table with {n} rows")

    def pull(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return full

    return _track(table.data[ids].copy(), [(table, pull)], tape)


def repeat_rows(x, r, tape=None):
    """Repeat each row of a 2-D tensor r times consecutively."""
    if x.data.ndim != 2 or r < 1:
        raise ShapeError(f"repeat_rows: shape {x.shape}, r={r}")
    out = np.repeat(x.data, r, axis=0)
    return _track(out, [(x, lambda g: g.reshape(x.shape[0], r, x.shape[1]).sum(axis=1))],
                  tape)


def weighted_region_sum(weights, regions, tape=None):
    """context[b] = sum_r weights[b,r] * regions[b,r,:]."""
    if weights.data.ndim != 2 or regions.data.ndim != 3 \
            or weights.shape != regions.shape[:2]:
        raise ShapeError(f"weighted_region_sum: shapes {weights.shape} and {regions.shape}")
    out = np.einsum("br,brd->bd", weights.data, regions.data)
    pulls = [(weights, lambda g: np.einsum("bd,brd->br", g, regions.data)),
             (regions, lambda g: g[:, None, :] * weights.data[:, :, None])]
    return _track(out, pulls, tape)


def pick_nll(logprobs, targets, mask, denom, tape=None):
    """Masked negative log-likelihood, summed and divided by a fixed denom.

    denom is supplied by the caller so per-step terms of a sequence loss can
    be added into one mean over all non-pad positions.
    """
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=logprobs.dtype)
    b = logprobs.shape[0]
    if targets.shape != (b,) or mask.shape != (b,):
        raise ShapeError(f"pick_nll: batch {b} vs targets {targets.shape}, mask {mask.shape}")
    rows = np.arange(b)
    picked = logprobs.data[rows, targets]
    out = np.array([-(mask * picked).sum() / denom], dtype=logprobs.dtype)

    def pull(g):
        full = np.zeros_like(logprobs.data)
        full[rows, targets] = -mask * (g[0] / denom)
        return full

    return _track(out, [(logprobs, pull)], tape)


def numeric_gradient(f, arrays, eps=1e-3):
    """Central finite differences of scalar f, evaluated in float64.

    f receives the list of (perturbed) float64 arrays and returns a python
    float. This is the independent oracle used by every gradient check.
    """
    base = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
    grads = [np.zeros_like(b) for b in base]
    for bi, b in enumerate(base):
        flat = b.reshape(-1)
        gflat = grads[bi].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = f(base)
            flat[j] = orig - eps
            fm = f(base)
            flat[j] = orig
            gflat[j] = (fp - fm) / (2.0 * eps)
    return grads
