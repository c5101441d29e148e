"""Named parameter storage, the Adam update, and parameter serialization."""

from __future__ import annotations

import base64

import numpy as np

from .autograd import NonFiniteError, ShapeError, Tensor


class ParameterStore:
    """Trainable tensors addressed by unique, stable names.

    Also owns the Adam first/second-moment buffers (shapes mirror the
    parameters) and the shared step counter. Single-writer: one training
    thread mutates it, any number of readers may run inference on a
    frozen copy.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._entries: dict[str, Tensor] = {}
        self.step_count = 0
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}

    def add(self, name: str, values) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor = Tensor(values, requires_grad=True, dtype=self.dtype)
        self._entries[name] = tensor
        self.adam_m[name] = np.zeros_like(tensor.array)
        self.adam_v[name] = np.zeros_like(tensor.array)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grads(self) -> None:
        for tensor in self._entries.values():
            tensor.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Collected .grad arrays for parameters that received one."""
        return {name: t.grad for name, t in self._entries.items() if t.grad is not None}

    def copy(self) -> "ParameterStore":
        """Deep copy of parameter values; optimizer state starts fresh."""
        dup = ParameterStore(self.dtype)
        for name, tensor in self._entries.items():
            dup.add(name, tensor.array.copy())
        return dup


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Rescale all gradients together so their joint L2 norm is at most max_norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {name: g * factor for name, g in grads.items()}


def adam_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update over every parameter in the store."""
    missing = [name for name in store.names() if name not in grads]
    if missing:
        raise KeyError(f"missing gradient for parameter(s): {missing}")
    unknown = [name for name in grads if name not in store]
    if unknown:
        raise KeyError(f"gradient(s) for unknown parameter(s): {unknown}")

    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, tensor in store.items():
        g = np.asarray(grads[name], dtype=tensor.dtype)
        if g.shape != tensor.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {tensor.shape} for {name!r}")
        m = store.adam_m[name]
        v = store.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        with np.errstate(over="ignore"):  # overflow is caught by the finiteness check
            tensor.array -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(tensor.dtype)
        if not np.all(np.isfinite(tensor.array)):
            raise NonFiniteError(f"parameter {name!r} became non-finite after the update")


# ---------------------------------------------------------------------------
# parameter (de)serialization: little-endian float32 bytes in base64
# ---------------------------------------------------------------------------

def params_to_doc(store: ParameterStore) -> dict:
    doc = {}
    for name, tensor in store.items():
        raw = np.ascontiguousarray(tensor.array, dtype="<f4").tobytes()
        doc[name] = {
            "shape": list(tensor.shape),
            "data_b64": base64.b64encode(raw).decode("ascii"),
        }
    return doc


def params_from_doc(doc: dict, dtype=np.float32) -> ParameterStore:
    store = ParameterStore(dtype)
    for name in sorted(doc):
        entry = doc[name]
        try:
            raw = base64.b64decode(entry["data_b64"], validate=True)
        except Exception as exc:
            raise ValueError(f"parameter {name!r}: corrupted base64 payload") from exc
        shape = tuple(int(s) for s in entry["shape"])
        values = np.frombuffer(raw, dtype="<f4")
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"parameter {name!r}: payload size does not match shape {shape}")
        store.add(name, values.reshape(shape).copy())  # frombuffer views are read-only
    return store
