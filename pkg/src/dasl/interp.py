"""Bind theory symbols to concrete semantics.

Constants become embedding rows or registry values, functions/relations
become MLPs or registered deterministic externs, sorts and datasets become
domains, and quantifiers get samplers.  Everything learned is a Parameter;
everything else is plain numpy.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import load_csv_table, load_idx
from .lang import ExternRef, MlpSpec, SortDecl, Theory
from .logit import BIG, EqualityParams, DEFAULT_EQUALITY
from .tensor import Parameter, Tensor


class MissingExtern(Exception):
    def __init__(self, name: str):
        super().__init__(f"extern {name!r} is not registered")
        self.name = name


class DataLoadError(Exception):
    pass


class WidthMismatch(Exception):
    pass


class EmptyDomain(Exception):
    pass


class InsufficientClassCount(Exception):
    def __init__(self, cls: int):
        super().__init__(f"class {cls} has too few examples")
        self.cls = cls


# ---------------------------------------------------------------------------
# columns and domains


class IndexColumn:
    """Integer ids of an index-range sort."""

    def __init__(self, values: np.ndarray, sort: str):
        self.values = np.asarray(values, dtype=np.int64)
        self.sort = sort

    def take(self, idx: np.ndarray):
        return self.values[idx]


class RowColumn:
    """Constant feature rows (inputs, not learned)."""

    def __init__(self, rows: np.ndarray, sort: str):
        self.rows = np.asarray(rows, dtype=np.float64)
        self.sort = sort

    def take(self, idx: np.ndarray):
        return self.rows[idx]


class EmbeddingColumn:
    """Learned rows; taking them is a differentiable gather."""

    def __init__(self, param: Parameter, ids: np.ndarray, sort: str):
        self.param = param
        self.ids = np.asarray(ids, dtype=np.int64)
        self.sort = sort

    def take(self, idx: np.ndarray):
        return T.gather(self.param, self.ids[idx])


class ViewColumn:
    """Rows of a base table addressed through an index view (triples)."""

    def __init__(self, base: np.ndarray, ids: np.ndarray, sort: str):
        self.base = np.asarray(base, dtype=np.float64)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.sort = sort

    def take(self, idx: np.ndarray):
        return self.base[self.ids[idx]]


@dataclass
class Domain:
    """A quantifiable population: one column per bound variable."""

    name: str
    kind: str  # index-range | data-table | embedding-table | triple-view
    cardinality: int
    columns: tuple

    def check_nonempty(self) -> None:
        if self.cardinality < 1:
            raise EmptyDomain(self.name)


# ---------------------------------------------------------------------------
# symbol bindings


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class MlpBinding:
    """Affine/activation chain on the concatenated, one-hot-encoded args."""

    def __init__(self, name: str, spec: MlpSpec, arg_widths: list[int],
                 arg_cards: list[int | None], out_width: int, rng: np.random.Generator):
        self.name = name
        self.activation = spec.activation
        self.arg_widths = arg_widths
        self.arg_cards = arg_cards  # cardinality for index args (one-hot), None otherwise
        self.in_width = sum(arg_widths)
        self.out_width = out_width
        sizes = [self.in_width, *spec.hidden, out_width]
        self.weights: list[Parameter] = []
        self.biases: list[Parameter] = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.weights.append(Parameter(f"{name}.w{i}", glorot_uniform(rng, a, b, (a, b))))
            self.biases.append(Parameter(f"{name}.b{i}", np.zeros(b)))

    @property
    def parameters(self) -> list[Parameter]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def _encode(self, arg, width: int, card: int | None):
        if card is not None:  # index-range argument: one-hot rows
            ids = np.asarray(arg, dtype=np.int64)
            flat = np.atleast_1d(ids)
            hot = np.zeros((flat.size, card))
            hot[np.arange(flat.size), flat] = 1.0
            return hot, ids.ndim > 0
        if isinstance(arg, (Tensor, Parameter)):
            data = arg.data if isinstance(arg, Tensor) else arg.value
            if data.shape[-1] != width:
                raise WidthMismatch(f"{self.name}: expected width {width}, got {data.shape}")
            if data.ndim == 1:
                return T.reshape(arg, (1, width)), False
            return arg, True
        data = np.asarray(arg, dtype=np.float64)
        if data.shape[-1] != width:
            raise WidthMismatch(f"{self.name}: expected width {width}, got {data.shape}")
        if data.ndim == 1:
            return data.reshape(1, width), False
        return data, True

    def __call__(self, args: list) -> Tensor:
        if len(args) != len(self.arg_widths):
            raise WidthMismatch(f"{self.name}: expected {len(self.arg_widths)} args")
        encoded, batched = [], False
        for arg, width, card in zip(args, self.arg_widths, self.arg_cards):
            enc, is_batch = self._encode(arg, width, card)
            encoded.append(enc)
            batched = batched or is_batch
        rows = max(
            (e.data.shape[0] if isinstance(e, Tensor) else e.shape[0]) for e in encoded
        )
        parts = []
        for e in encoded:
            n = e.data.shape[0] if isinstance(e, Tensor) else e.shape[0]
            if n == 1 and rows > 1:
                if isinstance(e, Tensor):
                    raise WidthMismatch(f"{self.name}: cannot broadcast a learned row across a batch")
                e = np.broadcast_to(e, (rows, e.shape[1]))
            parts.append(e)
        x = parts[0] if len(parts) == 1 else T.concat(parts, axis=-1)
        act = {"sigmoid": T.sigmoid, "relu": T.relu, "tanh": T.tanh}[self.activation]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = T.add(T.matmul(h, w), b)
            if i < last:
                h = act(h)
        if not batched:
            h = T.reshape(h, (self.out_width,))
        if self.out_width == 1:
            shape = h.data.shape
            h = T.reshape(h, shape[:-1])
        return h


class ExternBinding:
    """Registered deterministic function; pure and batched by contract."""

    def __init__(self, name: str, fn):
        self.name = name
        self.fn = fn
        self.parameters: list[Parameter] = []

    def __call__(self, args: list):
        raw = [a.data if isinstance(a, Tensor) else a for a in args]
        return self.fn(*raw)


class EmbeddingBinding:
    """A learned row for a constant of an embedding or data sort."""

    def __init__(self, name: str, dim: int, rng: np.random.Generator):
        self.name = name
        self.param = Parameter(name, glorot_uniform(rng, 1, dim, (1, dim)))
        self.parameters = [self.param]

    def __call__(self, args: list = ()) -> Tensor:
        return T.reshape(T.gather(self.param, np.array([0])), (self.param.shape[1],))


class FixedBinding:
    """A constant value supplied by the extern registry."""

    def __init__(self, name: str, value):
        self.name = name
        self.value = value
        self.parameters: list[Parameter] = []

    def __call__(self, args: list = ()):
        return self.value


def eval_symbol(binding, args: list, env=None):
    """Apply a symbol binding to already-evaluated arguments."""
    return binding(list(args))


# ---------------------------------------------------------------------------
# samplers


@dataclass
class Sampler:
    """Per-quantifier batch generator over a domain.

    `full` returns the whole (active) domain in order; `shuffled-minibatch`
    partitions each epoch into disjoint batches covering it exactly once;
    `balanced-per-class` draws batch_size indices per label class.  The
    active_size prefix is the curriculum working set.
    """

    domain: Domain
    strategy: str = "full"
    batch_size: int | None = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    labels: np.ndarray | None = None
    active_size: int | None = None
    _order: np.ndarray | None = field(default=None, repr=False)
    _cursor: int = field(default=0, repr=False)

    def _n(self) -> int:
        n = self.domain.cardinality
        if self.active_size is not None:
            n = min(n, self.active_size)
        return n

    def set_active_size(self, size: int) -> None:
        self.active_size = size
        self._order = None  # restart the epoch over the new working set
        self._cursor = 0

    def sample(self, env=None) -> np.ndarray:
        n = self._n()
        if n < 1:
            raise EmptyDomain(self.domain.name)
        if self.strategy == "full":
            return np.arange(n)
        if self.strategy == "shuffled-minibatch":
            if self._order is None or self._cursor >= len(self._order):
                self._order = self.rng.permutation(n)
                self._cursor = 0
            take = min(self.batch_size or n, len(self._order) - self._cursor)
            out = self._order[self._cursor : self._cursor + take]
            self._cursor += take
            return out
        if self.strategy == "balanced-per-class":
            if self.labels is None:
                raise ValueError("balanced-per-class needs labels")
            per = self.batch_size or 1
            picks = []
            for cls in np.unique(self.labels[:n]):
                pool = np.flatnonzero(self.labels[:n] == cls)
                if len(pool) < per:
                    raise InsufficientClassCount(int(cls))
                picks.append(self.rng.choice(pool, size=per, replace=False))
            return np.concatenate(picks)
        raise ValueError(f"unknown strategy {self.strategy!r}")


def sample(sampler: Sampler, env=None) -> np.ndarray:
    return sampler.sample(env)


# ---------------------------------------------------------------------------
# triple construction


def build_triples(rows: np.ndarray, labels: np.ndarray, per_class: int, seed: int,
                  n_classes: int = 10) -> Domain:
    """Index triples (i1, i2, i3) with label(i1) + label(i2) = label(i3) mod n.

    Labels steer construction only; the emitted domain exposes pixel rows,
    never labels.  Triples are ordered round-robin over the class of the
    third element, so any prefix of k*n_classes triples is class-balanced;
    images may repeat across triples, cycling through each class pool.
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    pools = []
    for c in range(n_classes):
        pool = np.flatnonzero(labels == c)
        if len(pool) < max(per_class, 1):
            raise InsufficientClassCount(c)
        pools.append(rng.permutation(pool))
    cursors = np.zeros(n_classes, dtype=np.int64)

    def take(cls: int) -> int:
        i = pools[cls][cursors[cls] % len(pools[cls])]
        cursors[cls] += 1
        return int(i)

    i1, i2, i3 = [], [], []
    for _ in range(per_class):
        for c in range(n_classes):
            y1 = int(rng.integers(n_classes))
            y2 = (c - y1) % n_classes
            i1.append(take(y1))
            i2.append(take(y2))
            i3.append(take(c))
    sort = "Image"
    cols = tuple(ViewColumn(rows, np.array(ids), sort) for ids in (i1, i2, i3))
    return Domain("Triples", "triple-view", len(i1), cols)


# ---------------------------------------------------------------------------
# the bound interpretation


@dataclass
class Interpretation:
    theory: Theory
    domains: dict[str, Domain]
    symbols: dict[str, object]
    big: float = BIG
    equality: EqualityParams = DEFAULT_EQUALITY

    @property
    def parameters(self) -> list[Parameter]:
        out, seen = [], set()
        for b in self.symbols.values():
            for p in getattr(b, "parameters", []):
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        for d in self.domains.values():
            for col in d.columns:
                if isinstance(col, EmbeddingColumn) and id(col.param) not in seen:
                    seen.add(id(col.param))
                    out.append(col.param)
        return out

    @property
    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters)


def _sort_width(theory: Theory, sort_name: str) -> tuple[int, int | None]:
    """(input width, one-hot cardinality or None) of a sort used as an argument."""
    s = theory.sort(sort_name)
    if s.is_index:
        return s.cardinality, s.cardinality
    return s.dim, None


def _load_column(path: str, sort: SortDecl) -> np.ndarray:
    if not os.path.exists(path):
        raise DataLoadError(f"missing data file {path!r}")
    if path.endswith(".idx") or "ubyte" in os.path.basename(path):
        return load_idx(path)
    try:
        table = load_csv_table(path)
    except Exception as e:  # noqa: BLE001 - surface as a typed load error
        raise DataLoadError(f"{path}: {e}") from e
    if sort.is_index:
        return table.reshape(-1).astype(np.int64)
    if table.shape[1] != sort.dim:
        raise DataLoadError(f"{path}: expected {sort.dim} columns, got {table.shape[1]}")
    return table


def bind_theory(
    theory: Theory,
    externs: dict[str, object] | None = None,
    data: dict[str, tuple] | None = None,
    data_dir: str | None = None,
    seed: int = 0,
    big: float = BIG,
    equality: EqualityParams = DEFAULT_EQUALITY,
) -> Interpretation:
    """Attach a binding to every declared symbol and load every dataset.

    externs: name -> callable (functions/relations) or value (constants).
    data:    dataset name -> tuple of per-column arrays, overriding files.
    """
    externs = externs or {}
    data = data or {}
    rng = np.random.default_rng(seed)
    domains: dict[str, Domain] = {}
    symbols: dict[str, object] = {}

    for s in theory.sorts:
        if s.representation == "index-range":
            domains[s.name] = Domain(s.name, "index-range", s.cardinality,
                                     (IndexColumn(np.arange(s.cardinality), s.name),))
        elif s.representation == "embedding-table":
            param = Parameter(f"sort.{s.name}",
                              glorot_uniform(rng, s.cardinality, s.dim, (s.cardinality, s.dim)))
            domains[s.name] = Domain(s.name, "embedding-table", s.cardinality,
                                     (EmbeddingColumn(param, np.arange(s.cardinality), s.name),))
        # data-table sorts have no standalone population; rows arrive via datasets

    for c in theory.consts:
        sort = theory.sort(c.sort)
        if c.learned:
            if sort.dim is None:
                raise WidthMismatch(f"constant {c.name}: sort {c.sort} has no dim to learn")
            symbols[c.name] = EmbeddingBinding(f"const.{c.name}", sort.dim, rng)
        else:
            if c.name not in externs:
                raise MissingExtern(c.name)
            symbols[c.name] = FixedBinding(c.name, externs[c.name])

    for f in theory.funcs:
        symbols[f.name] = _bind_callable(theory, f.name, f.binding, f.arg_sorts,
                                         lambda f=f: _result_width(theory, f.result_sort),
                                         externs, rng)
    for r in theory.rels:
        symbols[r.name] = _bind_callable(theory, r.name, r.binding, r.arg_sorts,
                                         lambda r=r: r.out or 1, externs, rng)

    for d in theory.datasets:
        if isinstance(data.get(d.name), Domain):
            dom = data[d.name]
            if len(dom.columns) != len(d.column_sorts):
                raise DataLoadError(f"{d.name}: expected {len(d.column_sorts)} columns")
            domains[d.name] = Domain(d.name, dom.kind, dom.cardinality, dom.columns)
            continue
        if d.name in data:
            columns = data[d.name]
            if len(columns) != len(d.column_sorts):
                raise DataLoadError(f"{d.name}: expected {len(d.column_sorts)} columns")
        else:
            paths = [p.strip() for p in d.source.split(",")]
            if len(paths) != len(d.column_sorts):
                raise DataLoadError(f"{d.name}: {len(d.column_sorts)} sorts but {len(paths)} files")
            if data_dir is not None:
                paths = [p if os.path.isabs(p) else os.path.join(data_dir, p) for p in paths]
            columns = [_load_column(p, theory.sort(s)) for p, s in zip(paths, d.column_sorts)]
        cols, n = [], None
        for arr, sort_name in zip(columns, d.column_sorts):
            sort = theory.sort(sort_name)
            arr = np.asarray(arr)
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataLoadError(f"{d.name}: column lengths differ")
            if sort.is_index:
                cols.append(IndexColumn(arr.astype(np.int64), sort_name))
            else:
                if arr.ndim != 2 or arr.shape[1] != sort.dim:
                    raise DataLoadError(f"{d.name}: column of sort {sort_name} must be n x {sort.dim}")
                cols.append(RowColumn(arr, sort_name))
        domains[d.name] = Domain(d.name, "data-table", n or 0, tuple(cols))

    return Interpretation(theory, domains, symbols, big=big, equality=equality)


def _result_width(theory: Theory, sort_name: str) -> int:
    s = theory.sort(sort_name)
    if s.dim is None:
        raise WidthMismatch(f"function result sort {sort_name} has no dim")
    return s.dim


def _bind_callable(theory, name, binding, arg_sorts, out_width_fn, externs, rng):
    if isinstance(binding, ExternRef):
        if binding.name not in externs:
            raise MissingExtern(binding.name)
        return ExternBinding(name, externs[binding.name])
    widths, cards = [], []
    for s in arg_sorts:
        w, card = _sort_width(theory, s)
        widths.append(w)
        cards.append(card)
    return MlpBinding(name, binding, widths, cards, out_width_fn(), rng)
