"""Dense float64 tensors with tape-based reverse-mode differentiation.

A Tape records every operation in execution order (hence already
topologically sorted); backward() replays it once in reverse.  Tapes are
scoped: training code opens a fresh tape per step, because samplers return
different data on each invocation and the graph is rebuilt.  Parameters
live outside any tape and join one lazily the first time an op touches
them while it is active.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field

import numpy as np

_LOG_FLOOR = 1e-300
_EXP_MAX = 709.0  # exp saturates here instead of overflowing to inf


class ShapeMismatch(Exception):
    def __init__(self, *shapes):
        super().__init__(f"incompatible shapes: {shapes}")
        self.shapes = shapes


class AxisOutOfRange(Exception):
    pass


class IndexOutOfRange(Exception):
    pass


class NotScalar(Exception):
    pass


class DetachedNode(Exception):
    pass


class NonFiniteGradient(Exception):
    pass


# ---------------------------------------------------------------------------
# tape


_tls = threading.local()


def _tape_stack() -> list:
    if not hasattr(_tls, "stack"):
        _tls.stack = []
    return _tls.stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Recorded forward pass; one per training step, single-threaded."""

    def __init__(self):
        self._records: list[tuple[int, object]] = []  # (out node, backward rule)
        self._next_node = 0
        self._param_nodes: dict[int, tuple[Parameter, int]] = {}
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def new_node(self) -> int:
        nid = self._next_node
        self._next_node += 1
        return nid

    def record(self, out_node: int, backward_rule) -> None:
        self._records.append((out_node, backward_rule))

    def param_node(self, p: "Parameter") -> int:
        entry = self._param_nodes.get(id(p))
        if entry is None:
            nid = self.new_node()
            self._param_nodes[id(p)] = (p, nid)
            return nid
        return entry[1]


class Tensor:
    """Shape-carrying float64 array, optionally tracked on the active tape."""

    __slots__ = ("data", "node", "tape")

    def __init__(self, data, node: int | None = None, tape: Tape | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.node = node
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor({self.data!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class Parameter:
    """Named trainable tensor with a persistent gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


def _ensure(x) -> tuple[np.ndarray, int | None]:
    """Coerce an operand to (data, node id), enrolling Parameters on the tape."""
    tape = active_tape()
    if isinstance(x, Parameter):
        return x.value, (tape.param_node(x) if tape is not None else None)
    if isinstance(x, Tensor):
        if x.node is not None and x.tape is not tape:
            return x.data, None  # value from another (dead) tape: treat as constant
        return x.data, x.node
    return np.asarray(x, dtype=np.float64), None


def _make(data: np.ndarray, inputs: list[tuple[int | None, object]]) -> Tensor:
    """Create the output tensor, recording a backward rule if needed.

    inputs: list of (node id, pull function); pull(g) returns the gradient
    contribution for that input given the output gradient g.
    """
    tape = active_tape()
    live = [(nid, pull) for nid, pull in inputs if nid is not None]
    if tape is None or not live:
        return Tensor(data)
    out = tape.new_node()

    def backward_rule(grads: dict):
        g = grads.get(out)
        if g is None:
            return
        for nid, pull in live:
            contrib = pull(g)
            if nid in grads:
                grads[nid] = grads[nid] + contrib
            else:
                grads[nid] = contrib

    tape.record(out, backward_rule)
    return Tensor(data, out, tape)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that broadcasting stretched."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] > 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(*shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeMismatch(*shapes) from None


# ---------------------------------------------------------------------------
# elementwise kernels


def add(a, b) -> Tensor:
    (da, na), (db, nb) = _ensure(a), _ensure(b)
    _check_broadcast(da.shape, db.shape)
    return _make(da + db, [
        (na, lambda g: _unbroadcast(g, da.shape)),
        (nb, lambda g: _unbroadcast(g, db.shape)),
    ])


def sub(a, b) -> Tensor:
    (da, na), (db, nb) = _ensure(a), _ensure(b)
    _check_broadcast(da.shape, db.shape)
    return _make(da - db, [
        (na, lambda g: _unbroadcast(g, da.shape)),
        (nb, lambda g: _unbroadcast(-g, db.shape)),
    ])


def mul(a, b) -> Tensor:
    (da, na), (db, nb) = _ensure(a), _ensure(b)
    _check_broadcast(da.shape, db.shape)
    return _make(da * db, [
        (na, lambda g: _unbroadcast(g * db, da.shape)),
        (nb, lambda g: _unbroadcast(g * da, db.shape)),
    ])


def neg(a) -> Tensor:
    da, na = _ensure(a)
    return _make(-da, [(na, lambda g: -g)])


def exp(a) -> Tensor:
    da, na = _ensure(a)
    out = np.exp(np.minimum(da, _EXP_MAX))
    return _make(out, [(na, lambda g: g * out)])


def expm1(a) -> Tensor:
    da, na = _ensure(a)
    out = np.expm1(np.minimum(da, _EXP_MAX))
    return _make(out, [(na, lambda g: g * np.exp(np.minimum(da, _EXP_MAX)))])


def log(a) -> Tensor:
    da, na = _ensure(a)
    clamped = np.maximum(da, _LOG_FLOOR)
    return _make(np.log(clamped), [(na, lambda g: g / clamped)])


def sqrt(a) -> Tensor:
    da, na = _ensure(a)
    out = np.sqrt(da)
    return _make(out, [(na, lambda g: g / (2.0 * np.maximum(out, _LOG_FLOOR)))])


def sigmoid(a) -> Tensor:
    da, na = _ensure(a)
    out = _sigmoid_np(da)
    return _make(out, [(na, lambda g: g * out * (1.0 - out))])


def logsigmoid(a) -> Tensor:
    da, na = _ensure(a)
    out = -_softplus_np(-da)
    return _make(out, [(na, lambda g: g * _sigmoid_np(-da))])


def softplus(a) -> Tensor:
    da, na = _ensure(a)
    return _make(_softplus_np(da), [(na, lambda g: g * _sigmoid_np(da))])


def relu(a) -> Tensor:
    da, na = _ensure(a)
    return _make(np.maximum(da, 0.0), [(na, lambda g: g * (da > 0))])


def tanh(a) -> Tensor:
    da, na = _ensure(a)
    out = np.tanh(da)
    return _make(out, [(na, lambda g: g * (1.0 - out * out))])


def clamp_max(a, cap: float) -> Tensor:
    """min(a, cap); subgradient passes where a < cap."""
    da, na = _ensure(a)
    return _make(np.minimum(da, cap), [(na, lambda g: g * (da <= cap))])


def where(cond, a, b) -> Tensor:
    """Select a where cond else b; cond is a constant boolean array."""
    cond = np.asarray(cond, dtype=bool)
    (da, na), (db, nb) = _ensure(a), _ensure(b)
    _check_broadcast(cond.shape, da.shape, db.shape)
    return _make(np.where(cond, da, db), [
        (na, lambda g: _unbroadcast(g * cond, da.shape)),
        (nb, lambda g: _unbroadcast(g * (~cond), db.shape)),
    ])


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def _softplus_np(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


# ---------------------------------------------------------------------------
# matmul / reductions / indexing


def matmul(a, b) -> Tensor:
    (da, na), (db, nb) = _ensure(a), _ensure(b)
    if da.ndim != 2 or db.ndim != 2 or da.shape[1] != db.shape[0]:
        raise ShapeMismatch(da.shape, db.shape)
    return _make(da @ db, [
        (na, lambda g: g @ db.T),
        (nb, lambda g: da.T @ g),
    ])


def _check_axis(data: np.ndarray, axis: int | None) -> None:
    if axis is None:
        return
    if not -data.ndim <= axis < data.ndim:
        raise AxisOutOfRange(f"axis {axis} out of range for rank {data.ndim}")


def reduce_sum(a, axis: int | None = None) -> Tensor:
    da, na = _ensure(a)
    _check_axis(da, axis)
    out = da.sum(axis=axis)

    def pull(g):
        if axis is None:
            return np.broadcast_to(g, da.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), da.shape).copy()

    return _make(out, [(na, pull)])


def reduce_mean(a, axis: int | None = None) -> Tensor:
    da, na = _ensure(a)
    _check_axis(da, axis)
    n = da.size if axis is None else da.shape[axis]
    out = da.mean(axis=axis)

    def pull(g):
        if axis is None:
            return np.broadcast_to(g / n, da.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis) / n, da.shape).copy()

    return _make(out, [(na, pull)])


def reduce_max(a, axis: int | None = None) -> Tensor:
    da, na = _ensure(a)
    _check_axis(da, axis)
    if axis is None:
        out = da.max()
        hot = np.zeros_like(da)
        hot[np.unravel_index(np.argmax(da), da.shape)] = 1.0
        return _make(out, [(na, lambda g: g * hot)])
    out = da.max(axis=axis)
    # ties route to the first maximum for determinism
    idx = np.expand_dims(np.argmax(da, axis=axis), axis)
    hot = np.zeros_like(da)
    np.put_along_axis(hot, idx, 1.0, axis)
    return _make(out, [(na, lambda g: np.expand_dims(g, axis) * hot)])


def logsumexp(a, axis: int | None = None) -> Tensor:
    """Max-shifted log-sum-exp; exact under uniform shifts."""
    da, na = _ensure(a)
    _check_axis(da, axis)
    m = da.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = np.exp(da - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.log(total) + m
    soft = shifted / total

    def pull(g):
        if axis is None:
            return g * soft
        return np.expand_dims(g, axis) * soft

    out = out.reshape(()) if axis is None else np.squeeze(out, axis)
    return _make(out, [(na, pull)])


def gather(table, indices) -> Tensor:
    """Rows of a 2-D table; backward scatter-adds into the table gradient."""
    dt, nt = _ensure(table)
    idx = np.asarray(indices)
    if dt.ndim != 2:
        raise ShapeMismatch(dt.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= dt.shape[0]):
        raise IndexOutOfRange(f"index outside [0, {dt.shape[0]})")

    def pull(g):
        out = np.zeros_like(dt)
        np.add.at(out, idx, g)
        return out

    return _make(dt[idx], [(nt, pull)])


def concat(parts: list, axis: int = -1) -> Tensor:
    pairs = [_ensure(p) for p in parts]
    datas = [d for d, _ in pairs]
    out = np.concatenate(datas, axis=axis)
    offsets = np.cumsum([0] + [d.shape[axis] for d in datas])
    inputs = []
    for i, (d, n) in enumerate(pairs):
        lo, hi = offsets[i], offsets[i + 1]

        def pull(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        inputs.append((n, pull))
    return _make(out, inputs)


def reshape(t, shape) -> Tensor:
    dt, nt = _ensure(t)
    if int(np.prod(shape)) != dt.size:
        raise ShapeMismatch(dt.shape, tuple(shape))
    return _make(dt.reshape(shape), [(nt, lambda g: g.reshape(dt.shape))])


def select_class(t, index) -> Tensor:
    """t[..., index] with a per-row integer index (or one shared index)."""
    dt, nt = _ensure(t)
    idx = np.asarray(index)
    n = dt.shape[-1]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange(f"class index outside [0, {n})")
    idx_b = np.broadcast_to(idx, dt.shape[:-1]).astype(np.int64)
    out = np.take_along_axis(dt, idx_b[..., None], -1)[..., 0]

    def pull(g):
        full = np.zeros_like(dt)
        np.put_along_axis(full, idx_b[..., None], g[..., None], -1)
        return full

    return _make(out, [(nt, pull)])


def mask_class(t, index, fill: float) -> Tensor:
    """Replace t[..., index] by a constant; gradient is zero at the hole."""
    dt, nt = _ensure(t)
    idx = np.asarray(index)
    n = dt.shape[-1]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange(f"class index outside [0, {n})")
    idx_b = np.broadcast_to(idx, dt.shape[:-1]).astype(np.int64)
    out = dt.copy()
    np.put_along_axis(out, idx_b[..., None], fill, -1)

    def pull(g):
        full = g.copy()
        np.put_along_axis(full, idx_b[..., None], 0.0, -1)
        return full

    return _make(out, [(nt, pull)])


# ---------------------------------------------------------------------------
# backward pass


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(param) into every reachable Parameter's .grad."""
    tape = active_tape()
    if root.node is None or tape is None or root.tape is not tape:
        raise DetachedNode("root is not on the active tape")
    if tape.consumed:
        raise DetachedNode("tape already consumed by a previous backward pass")
    if root.data.shape != ():
        raise NotScalar(f"backward root must be rank-0, got {root.data.shape}")
    grads: dict[int, np.ndarray] = {root.node: np.ones(())}
    for _, rule in reversed(tape._records):
        rule(grads)
    for p, nid in tape._param_nodes.values():
        g = grads.get(nid)
        if g is not None:
            p.grad += g
    tape.consumed = True


# ---------------------------------------------------------------------------
# finite-difference gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def grad_check(build, params: list[Parameter], h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of build() against central differences.

    build() must construct a scalar Tensor from the current parameter
    values; it is re-invoked for every probe, so it must be deterministic.
    """
    for p in params:
        p.zero_grad()
    with Tape():
        out = build()
        backward(out)
    analytic = {p.name: p.grad.copy() for p in params}

    def value() -> float:
        with Tape():
            return float(build().data)

    per_param: dict[str, float] = {}
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        err = 0.0
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = value()
            flat[i] = keep - h
            down = value()
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            g = analytic[p.name].reshape(-1)[i]
            err = max(err, abs(numeric - g) / max(1.0, abs(g)))
        per_param[p.name] = err
        worst = max(worst, err)
    return GradCheckReport(worst, per_param, tol)


# ---------------------------------------------------------------------------
# checkpoint container

_MAGIC = b"DASLCKPT"
_VERSION = 1


def save_checkpoint(params, path) -> None:
    """Write parameters to the flat binary checkpoint container."""
    if isinstance(params, dict):
        items = list(params.items())
    else:
        items = [(p.name, p.value) for p in params]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        for name, value in items:
            value = np.asarray(value, dtype=np.float64)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", value.ndim))
            for d in value.shape:
                fh.write(struct.pack("<I", d))
            fh.write(value.astype("<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint container back into name -> array."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(4)
            if not head:
                return out
            (nlen,) = struct.unpack("<I", head)
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise ValueError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
