"""Dense tensors with reverse-mode automatic differentiation.

Every operation is recorded on an explicit :class:`Tape`; :func:`backward`
replays the records in reverse to accumulate gradients per tensor id.  The
operation set is deliberately small: matmul, add, sub, elementwise multiply,
concat, tanh, sigmoid, softmax, row lookup, inverted dropout, sum, and
negative log-likelihood, which is enough to build GRUs, MLP heads, and the
training losses on top without any framework dependency.

All data is float64.  A tape is single-writer: record and replay it from one
thread only; distinct tapes over shared read-only parameters are safe to run
in parallel.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, fields
from typing import Callable, Iterable, Mapping

import numpy as np

CHECKPOINT_MAGIC = "DLGPARSE-CKPT-1"

_tensor_ids = itertools.count()


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class GraphError(RuntimeError):
    """A backward pass was requested for a value the tape cannot reach."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, malformed, or inconsistent."""


class Tensor:
    """A float64 array with an identity used for gradient bookkeeping."""

    __slots__ = ("id", "data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.id = next(_tensor_ids)
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(id={self.id}, shape={self.shape}, requires_grad={self.requires_grad})"


class _Record:
    """One tape entry: the op, its operands, its output, and a backward rule."""

    __slots__ = ("op", "inputs", "output", "grad_fn")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
                 grad_fn: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


class Tape:
    """Ordered record of operations; inputs of a record always precede it."""

    def __init__(self) -> None:
        self.records: list[_Record] = []

    def _emit(self, op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
              grad_fn: Callable[[np.ndarray], tuple]) -> Tensor:
        out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
        self.records.append(_Record(op, inputs, out, grad_fn))
        return out

    # -- arithmetic ---------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
            raise ShapeError(f"matmul: operands must be 1-D or 2-D, got {a.shape} and {b.shape}")
        if a.data.shape[-1] != b.data.shape[0]:
            raise ShapeError(f"matmul: inner dimensions of {a.shape} and {b.shape} do not match")
        a2 = a.data if a.data.ndim == 2 else a.data[None, :]
        b2 = b.data if b.data.ndim == 2 else b.data[:, None]
        out = np.matmul(a.data, b.data)

        def grad_fn(g: np.ndarray):
            g2 = g.reshape(a2.shape[0], b2.shape[1])
            da = (g2 @ b2.T).reshape(a.shape)
            db = (a2.T @ g2).reshape(b.shape)
            return da, db

        return self._emit("matmul", (a, b), out, grad_fn)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("add", a, b)
        return self._emit("add", (a, b), a.data + b.data, lambda g: (g, g))

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("sub", a, b)
        return self._emit("sub", (a, b), a.data - b.data, lambda g: (g, -g))

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("mul", a, b)
        ad, bd = a.data, b.data
        return self._emit("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))

    def concat(self, parts: Iterable[Tensor]) -> Tensor:
        parts = tuple(parts)
        if not parts:
            raise ShapeError("concat: no operands")
        for p in parts:
            if p.data.ndim != 1:
                raise ShapeError(f"concat: operands must be 1-D, got {p.shape}")
        sizes = [p.data.shape[0] for p in parts]
        splits = np.cumsum(sizes)[:-1]
        out = np.concatenate([p.data for p in parts])
        return self._emit("concat", parts, out, lambda g: tuple(np.split(g, splits)))

    def sum(self, a: Tensor) -> Tensor:
        shape = a.shape
        return self._emit("sum", (a,), np.asarray(a.data.sum()),
                          lambda g: (np.full(shape, float(g)),))

    # -- nonlinearities -----------------------------------------------------

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.data)
        return self._emit("tanh", (a,), y, lambda g: (g * (1.0 - y * y),))

    def sigmoid(self, a: Tensor) -> Tensor:
        x = a.data
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return self._emit("sigmoid", (a,), y, lambda g: (g * y * (1.0 - y),))

    def softmax(self, a: Tensor) -> Tensor:
        if a.data.ndim != 1 or a.data.shape[0] == 0:
            raise ShapeError(f"softmax: need a non-empty vector, got shape {a.shape}")
        e = np.exp(a.data - a.data.max())
        y = e / e.sum()

        def grad_fn(g: np.ndarray):
            return (y * (g - np.dot(g, y)),)

        return self._emit("softmax", (a,), y, grad_fn)

    # -- lookups, dropout, losses -------------------------------------------

    def lookup(self, table: Tensor, row: int) -> Tensor:
        if table.data.ndim != 2:
            raise ShapeError(f"lookup: table must be 2-D, got {table.shape}")
        n_rows = table.data.shape[0]
        if not 0 <= row < n_rows:
            raise ShapeError(f"lookup: row {row} out of range for table {table.shape}")
        t_shape = table.shape

        def grad_fn(g: np.ndarray):
            dt = np.zeros(t_shape)
            dt[row] = g
            return (dt,)

        return self._emit("lookup", (table,), table.data[row].copy(), grad_fn)

    def dropout(self, a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
        """Inverted dropout: keep with probability 1-p and scale by 1/(1-p)."""
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout: probability {p} outside [0, 1)")
        if p == 0.0:
            return self._emit("dropout", (a,), a.data.copy(), lambda g: (g,))
        mask = (rng.random(a.shape) >= p) / (1.0 - p)
        return self._emit("dropout", (a,), a.data * mask, lambda g: (g * mask,))

    def nll(self, probs: Tensor, target: int) -> Tensor:
        """Negative log-likelihood of entry `target` in a probability vector."""
        if probs.data.ndim != 1:
            raise ShapeError(f"nll: need a probability vector, got shape {probs.shape}")
        if not 0 <= target < probs.data.shape[0]:
            raise ShapeError(f"nll: target {target} out of range for {probs.shape}")
        p = probs.data[target]
        n = probs.data.shape[0]

        def grad_fn(g: np.ndarray):
            dp = np.zeros(n)
            dp[target] = -float(g) / p
            return (dp,)

        return self._emit("nll", (probs,), np.asarray(-np.log(p)), grad_fn)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Replay the tape in reverse from `loss`, a scalar produced on it.

    Returns gradients keyed by tensor id for every requires_grad tensor that
    appears on the tape; tensors not on the path to the loss get zeros.
    """
    produced = {r.output.id for r in tape.records}
    if loss.id not in produced:
        raise GraphError(f"loss tensor {loss.id} was not produced on this tape")
    if loss.data.size != 1:
        raise GraphError(f"loss must be a scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        if not rec.output.requires_grad:
            continue
        g = grads.get(rec.output.id)
        if g is None:
            continue
        for t, gin in zip(rec.inputs, rec.grad_fn(g)):
            if gin is None or not t.requires_grad:
                continue
            if t.id in grads:
                grads[t.id] += gin
            else:
                grads[t.id] = np.array(gin)

    for rec in tape.records:
        for t in rec.inputs + (rec.output,):
            if t.requires_grad and t.id not in grads:
                grads[t.id] = np.zeros_like(t.data)
    return grads


def sgd_step(params: Iterable[Tensor], grads: Mapping[int, np.ndarray], lr: float) -> None:
    """In-place SGD update θ ← θ − lr·g; a missing gradient counts as zero."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for t in params:
        g = grads.get(t.id)
        if g is not None:
            t.data -= lr * g


# -- GRU cell ----------------------------------------------------------------

@dataclass
class GruCellParams:
    """Update/reset/candidate weights of one GRU cell.

    `w_*` map the input, `u_*` map the previous hidden state, `b_*` are
    biases; shapes are validated against (input_size, hidden_size).
    """

    input_size: int
    hidden_size: int
    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    def __post_init__(self) -> None:
        d_in, d_h = self.input_size, self.hidden_size
        expected = {"w_z": (d_h, d_in), "u_z": (d_h, d_h), "b_z": (d_h,),
                    "w_r": (d_h, d_in), "u_r": (d_h, d_h), "b_r": (d_h,),
                    "w_h": (d_h, d_in), "u_h": (d_h, d_h), "b_h": (d_h,)}
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"GRU cell {name}: expected shape {shape}, got {got}")

    @classmethod
    def create(cls, input_size: int, hidden_size: int,
               rng: np.random.Generator, scale: float = 0.08) -> "GruCellParams":
        def w(*shape):
            return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)

        def b(n):
            return Tensor(np.zeros(n), requires_grad=True)

        return cls(input_size, hidden_size,
                   w(hidden_size, input_size), w(hidden_size, hidden_size), b(hidden_size),
                   w(hidden_size, input_size), w(hidden_size, hidden_size), b(hidden_size),
                   w(hidden_size, input_size), w(hidden_size, hidden_size), b(hidden_size))

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.{f.name}", getattr(self, f.name))
                for f in fields(self) if f.name.startswith(("w_", "u_", "b_"))]


def gru_cell(tape: Tape, x: Tensor, h_prev: Tensor, p: GruCellParams) -> Tensor:
    """One GRU step: h' = (1−z)⊙h_prev + z⊙h̃ with standard gates."""
    z = tape.sigmoid(tape.add(tape.add(tape.matmul(p.w_z, x), tape.matmul(p.u_z, h_prev)), p.b_z))
    r = tape.sigmoid(tape.add(tape.add(tape.matmul(p.w_r, x), tape.matmul(p.u_r, h_prev)), p.b_r))
    h_cand = tape.tanh(tape.add(tape.add(tape.matmul(p.w_h, x),
                                         tape.matmul(p.u_h, tape.mul(r, h_prev))), p.b_h))
    return tape.add(tape.sub(h_prev, tape.mul(z, h_prev)), tape.mul(z, h_cand))


# -- checkpoint io -----------------------------------------------------------

def save_checkpoint(path, named_arrays: Mapping[str, np.ndarray]) -> None:
    """Write a name → shape + row-major values map, one parameter per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        for name, arr in named_arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            shape = ",".join(str(d) for d in arr.shape)
            values = " ".join(repr(float(v)) for v in arr.reshape(-1))
            fh.write(f"{name}\t{shape}\t{values}\n")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
    out: dict[str, np.ndarray] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CheckpointError(f"{path}:{ln}: malformed checkpoint line")
        name, shape_s, values_s = parts
        shape = tuple(int(d) for d in shape_s.split(",")) if shape_s else ()
        arr = np.array([float(v) for v in values_s.split()], dtype=np.float64)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"{path}:{ln}: value count does not match shape {shape}")
        out[name] = arr.reshape(shape)
    return out
