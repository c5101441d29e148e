"""Reverse-mode automatic differentiation over dense arrays.

The engine is intentionally small. A :class:`Tensor` wraps a C-contiguous
numpy array (float32 by default, the working precision of the whole
package); every operation records its inputs, so the computation graph is
rebuilt on each forward pass and ``backward`` walks it once in reverse
topological order. Float64 is accepted as well so gradient checks can run
against a low-noise finite-difference reference.

Two hard rules hold everywhere:

* any operation producing NaN or Inf raises :class:`NonFiniteError`
  immediately instead of letting bad values propagate;
* there is no implicit broadcasting beyond last-axis affine helpers
  (``add_bias``); mismatched shapes raise :class:`ShapeError` loudly.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(FloatingPointError):
    """A tensor value became NaN or Inf."""


class MaskError(ValueError):
    """An attention mask left a row with nothing to attend to."""


def _prepare(values, dtype):
    if dtype is None:
        # numpy float arrays/scalars keep their precision; everything else
        # gets the float32 default
        if isinstance(values, (np.ndarray, np.floating)) and np.asarray(values).dtype in _FLOAT_DTYPES:
            dtype = np.asarray(values).dtype
        else:
            dtype = DEFAULT_DTYPE
    arr = np.asarray(values, dtype=dtype)
    if not arr.flags.c_contiguous:  # 0-d arrays are contiguous; don't promote them
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """Dense array plus the tape hooks needed for reverse-mode gradients."""

    __slots__ = ("array", "requires_grad", "grad", "_parents", "_backward_fn", "_needs_grad")

    def __init__(self, values, requires_grad=False, dtype=None, _parents=(), _backward_fn=None):
        if isinstance(values, Tensor):
            raise TypeError("Tensor wraps raw array data, not another Tensor")
        self.array = _prepare(values, dtype)
        if not np.all(np.isfinite(self.array)):
            raise NonFiniteError("tensor contains NaN or Inf")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn
        self._needs_grad = self.requires_grad or any(p._needs_grad for p in self._parents)

    @property
    def shape(self):
        return self.array.shape

    @property
    def dtype(self):
        return self.array.dtype

    @property
    def data(self):
        """Flat row-major view of the underlying buffer."""
        return self.array.reshape(-1)

    def item(self) -> float:
        if self.array.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.array.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"


def _result(values, parents, backward_fn):
    return Tensor(values, _parents=parents, _backward_fn=backward_fn)


def _check_same_dtype(a: Tensor, b: Tensor, op: str):
    if a.dtype != b.dtype:
        raise ShapeError(f"{op} dtype mismatch: {a.dtype} vs {b.dtype}")


def backward(loss: Tensor) -> None:
    """Accumulate gradients of ``loss`` into every requires_grad tensor."""
    if loss.shape != ():
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if id(parent) not in seen and parent._needs_grad:
                stack.append((parent, False))

    flowing: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(topo):
        grad = flowing.pop(id(node), None)
        if grad is None:
            continue
        if node.requires_grad:
            node.grad = grad if node.grad is None else node.grad + grad
        if node._backward_fn is None:
            continue
        for parent, pgrad in zip(node._parents, node._backward_fn(grad)):
            if pgrad is None or not parent._needs_grad:
                continue
            key = id(parent)
            if key in flowing:
                flowing[key] = flowing[key] + pgrad
            else:
                flowing[key] = pgrad


# ---------------------------------------------------------------------------
# elementwise and structural operations
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "add")
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _result(a.array + b.array, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "mul")
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    return _result(a.array * b.array, (a, b), lambda g: (g * b.array, g * a.array))


def scale(x: Tensor, factor: float) -> Tensor:
    c = x.dtype.type(factor)
    return _result(x.array * c, (x,), lambda g: (g * c,))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-d bias to every row of a [m x d] matrix."""
    _check_same_dtype(x, bias, "add_bias")
    if x.array.ndim != 2 or bias.array.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias expects [m x d] + [d], got {x.shape} and {bias.shape}")
    return _result(x.array + bias.array[None, :], (x, bias), lambda g: (g, g.sum(axis=0)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "matmul")
    if a.array.ndim != 2 or b.array.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return _result(a.array @ b.array, (a, b), lambda g: (g @ b.array.T, a.array.T @ g))


def transpose(x: Tensor) -> Tensor:
    if x.array.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {x.shape}")
    return _result(x.array.T.copy(), (x,), lambda g: (g.T,))


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    rows = parts[0].shape[0]
    for p in parts:
        _check_same_dtype(parts[0], p, "concat_cols")
        if p.array.ndim != 2 or p.shape[0] != rows:
            raise ShapeError(f"concat_cols row mismatch: {[q.shape for q in parts]}")
    widths = [p.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def backward_fn(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.array for p in parts], axis=1), tuple(parts), backward_fn)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.array.ndim != 2 or not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"slice_cols [{start}:{stop}] invalid for shape {x.shape}")

    def backward_fn(g):
        full = np.zeros_like(x.array)
        full[:, start:stop] = g
        return (full,)

    return _result(x.array[:, start:stop].copy(), (x,), backward_fn)


def repeat_rows(x: Tensor, n: int) -> Tensor:
    """Tile a [1 x d] row n times."""
    if x.array.ndim != 2 or x.shape[0] != 1:
        raise ShapeError(f"repeat_rows expects a [1 x d] tensor, got {x.shape}")
    return _result(np.repeat(x.array, n, axis=0), (x,), lambda g: (g.sum(axis=0, keepdims=True),))


def sum_all(x: Tensor) -> Tensor:
    return _result(x.array.sum(), (x,), lambda g: (np.full_like(x.array, g),))


def relu(x: Tensor) -> Tensor:
    positive = x.array > 0
    return _result(np.where(positive, x.array, 0), (x,), lambda g: (g * positive,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    if not train or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("training-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return _result(x.array * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# normalization, softmax, and losses
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    d = x.shape[-1] if x.array.ndim else 0
    if d < 1 or gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm needs gain/bias of shape ({d},), got {gain.shape}/{bias.shape}")
    _check_same_dtype(x, gain, "layer_norm")
    _check_same_dtype(x, bias, "layer_norm")
    mu = x.array.mean(axis=-1, keepdims=True)
    centered = x.array - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = centered * inv

    def backward_fn(g):
        lead = tuple(range(x.array.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.array
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return (dx, dgain, dbias)

    return _result(xhat * gain.array + bias.array, (x, gain, bias), backward_fn)


def _expand_mask(mask, shape):
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 1:
        if m.shape[0] != shape[1]:
            raise ShapeError(f"mask length {m.shape[0]} does not match {shape[1]} columns")
        m = np.broadcast_to(m[None, :], shape)
    elif m.shape != shape:
        raise ShapeError(f"mask shape {m.shape} does not match scores shape {shape}")
    return m


def softmax_rows(x: Tensor, mask=None) -> Tensor:
    """Row-wise softmax with optional boolean mask (True = attendable).

    Masked entries are exactly zero in the output; each unmasked row sums
    to one. Stabilized by row-max subtraction.
    """
    if x.array.ndim != 2 or x.shape[1] == 0:
        raise ShapeError(f"softmax_rows expects a non-empty 2-D tensor, got {x.shape}")
    if mask is not None:
        m = _expand_mask(mask, x.shape)
        if not m.any(axis=1).all():
            raise MaskError("softmax row is fully masked")
        scores = np.where(m, x.array, -np.inf)
    else:
        scores = x.array
    rowmax = scores.max(axis=1, keepdims=True)
    expd = np.exp(scores - rowmax)
    out = expd / expd.sum(axis=1, keepdims=True)

    def backward_fn(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return ((g - inner) * out,)

    return _result(out, (x,), backward_fn)


def cross_entropy(logits: Tensor, targets, pad_id: int = 0) -> Tensor:
    """Mean negative log-softmax over positions whose target is not pad_id."""
    t = np.asarray(targets, dtype=np.int64)
    if logits.array.ndim != 2:
        raise ShapeError(f"cross_entropy expects [t x V] logits, got {logits.shape}")
    rows, vocab = logits.shape
    if t.ndim != 1 or t.shape[0] != rows:
        raise ShapeError(f"targets length {t.shape} does not match {rows} logit rows")
    if (t < 0).any() or (t >= vocab).any():
        raise ValueError(f"target ids must lie in [0, {vocab}), got range [{t.min()}, {t.max()}]")
    valid = t != pad_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("empty loss: every target position is padding")
    arr = logits.array
    rowmax = arr.max(axis=1, keepdims=True)
    shifted = arr - rowmax
    lse = np.log(np.exp(shifted).sum(axis=1)) + rowmax[:, 0]
    nll = lse[valid] - arr[valid, t[valid]]
    loss = nll.sum() / n_valid

    def backward_fn(g):
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        probs[np.arange(rows), t] -= 1.0
        probs[~valid] = 0.0
        return (probs * (g / n_valid),)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of an embedding table; gradients scatter-add back."""
    idx = np.asarray(ids, dtype=np.int64)
    if table.array.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if idx.ndim != 1 or idx.shape[0] == 0:
        raise ShapeError("embedding_lookup needs a non-empty 1-D id sequence")
    if (idx < 0).any() or (idx >= table.shape[0]).any():
        raise ValueError(f"ids out of range for table with {table.shape[0]} rows")

    def backward_fn(g):
        dtable = np.zeros_like(table.array)
        np.add.at(dtable, idx, g)
        return (dtable,)

    return _result(table.array[idx], (table,), backward_fn)


def sinusoidal_positions(n: int, d: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Classic fixed sin/cos position table of shape [n x d]."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    dim = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (dim // 2)) / d)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return np.ascontiguousarray(table, dtype=dtype)


def finite_difference_gradient(fn, values: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array.

    Used as the independent oracle for gradient checks; ``fn`` must not
    mutate its argument.
    """
    base = np.array(values, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = fn(base)
        flat[i] = orig - h
        lo = fn(base)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
