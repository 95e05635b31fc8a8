"""Dataset ingestion and the synthetic spatial-relationship generator.

Covers the IDX container (big-endian header, unsigned byte payload), CSV
numeric tables, box-pair spatial features, crisp spatial predicates, and a
procedurally generated relationship-classification task whose labels
respect a set of semantic/spatial rules by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .logit import BIG

IDX_LABEL_MAGIC = 0x00000801
IDX_IMAGE_MAGIC = 0x00000803


class BadMagic(Exception):
    pass


class TruncatedFile(Exception):
    pass


class DegenerateBox(Exception):
    pass


class InvalidVocab(Exception):
    pass


def load_idx(path) -> np.ndarray:
    """Read an IDX file: images -> n x (rows*cols) floats in [0,1]; labels -> n ints."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) != 4:
            raise TruncatedFile(f"{path}: missing magic")
        (magic,) = struct.unpack(">I", head)
        if magic == IDX_LABEL_MAGIC:
            ndim = 1
        elif magic == IDX_IMAGE_MAGIC:
            ndim = 3
        else:
            raise BadMagic(f"{path}: magic 0x{magic:08x}")
        raw_dims = fh.read(4 * ndim)
        if len(raw_dims) != 4 * ndim:
            raise TruncatedFile(f"{path}: truncated header")
        dims = struct.unpack(f">{ndim}I", raw_dims)
        count = int(np.prod(dims))
        payload = fh.read(count)
        if len(payload) != count:
            raise TruncatedFile(f"{path}: expected {count} bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8)
    if magic == IDX_LABEL_MAGIC:
        return data.astype(np.int64)
    n = dims[0]
    return (data.reshape(n, dims[1] * dims[2]) / 255.0).astype(np.float64)


def write_idx(path, array: np.ndarray) -> None:
    """Write labels (1-D ints) or images (n x rows x cols uint8) as IDX."""
    arr = np.asarray(array)
    with open(path, "wb") as fh:
        if arr.ndim == 1:
            fh.write(struct.pack(">II", IDX_LABEL_MAGIC, arr.shape[0]))
            fh.write(arr.astype(np.uint8).tobytes())
        elif arr.ndim == 3:
            fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *arr.shape))
            fh.write(arr.astype(np.uint8).tobytes())
        else:
            raise ValueError(f"cannot write rank-{arr.ndim} array as IDX")


def load_csv_table(path) -> np.ndarray:
    """Numeric CSV with a header row; one row per element."""
    return np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)


def write_csv_table(path, array: np.ndarray, header: str | None = None) -> None:
    arr = np.atleast_2d(np.asarray(array, dtype=np.float64))
    cols = header or ",".join(f"c{i}" for i in range(arr.shape[1]))
    np.savetxt(path, arr, delimiter=",", header=cols, comments="")


# ---------------------------------------------------------------------------
# box pairs and spatial features


@dataclass(frozen=True)
class BoxPair:
    """Subject/object boxes in (x, y, w, h) center format plus labels."""

    subject_box: tuple[float, float, float, float]
    object_box: tuple[float, float, float, float]
    subject_class: int
    object_class: int
    predicate: int


def spatial_features(pair: BoxPair) -> np.ndarray:
    """Eight relative-geometry features of the subject/object boxes.

    [dx/w_o, dy/h_o, -dx/w_s, -dy/h_s, ln(w_s/w_o), ln(h_s/h_o),
     ln(w_o/w_s), ln(h_o/h_s)] with dx = x_s - x_o, dy = y_s - y_o.
    """
    xs, ys, ws, hs = pair.subject_box
    xo, yo, wo, ho = pair.object_box
    if ws <= 0 or hs <= 0 or wo <= 0 or ho <= 0:
        raise DegenerateBox(f"non-positive box size: {pair}")
    return np.array(
        [
            (xs - xo) / wo,
            (ys - yo) / ho,
            (xo - xs) / ws,
            (yo - ys) / hs,
            np.log(ws / wo),
            np.log(hs / ho),
            np.log(wo / ws),
            np.log(ho / hs),
        ],
        dtype=np.float64,
    )


def spatial_predicates(pair: BoxPair) -> dict[str, bool]:
    """Crisp spatial relations; boundaries are inclusive on both sides."""
    _, ys, _, _ = pair.subject_box
    _, yo, _, _ = pair.object_box
    xs = pair.subject_box[0]
    xo = pair.object_box[0]
    return {
        "above": ys >= yo,
        "below": ys <= yo,
        "right-of": xs >= xo,
        "left-of": xs <= xo,
    }


def spatial_predicate_externs(big: float = BIG) -> dict[str, object]:
    """Batched extern functions feature-rows -> crisp logits.

    Each extern reads the 8-feature encoding of spatial_features; rows may
    be a single 8-vector or a batch (n, 8).  above/below test the sign of
    dy = y_s - y_o (feature 1 before normalization keeps its sign), and
    left/right the sign of dx.
    """

    def crisp(mask: np.ndarray) -> np.ndarray:
        return np.where(mask, big, -big)

    def above(rows):
        rows = np.asarray(rows, dtype=np.float64)
        return crisp(rows[..., 1] >= 0)

    def below(rows):
        rows = np.asarray(rows, dtype=np.float64)
        return crisp(rows[..., 1] <= 0)

    def right_of(rows):
        rows = np.asarray(rows, dtype=np.float64)
        return crisp(rows[..., 0] >= 0)

    def left_of(rows):
        rows = np.asarray(rows, dtype=np.float64)
        return crisp(rows[..., 0] <= 0)

    return {"above": above, "below": below, "right_of": right_of, "left_of": left_of}


# ---------------------------------------------------------------------------
# synthetic relationship task


@dataclass(frozen=True)
class RelationVocab:
    """Object/predicate vocabularies plus the rule schema the data obeys.

    Semantic memberships are bit tuples over object classes; spatial
    constraints name one of the crisp predicates or None.  Predicates come
    in confusable pairs (2k, 2k+1) that share one context code in the
    generated features, so only class membership or geometry separates a
    pair.
    """

    object_classes: tuple[str, ...]
    predicates: tuple[str, ...]
    can_ride: tuple[int, ...]
    ridable: tuple[int, ...]
    living: tuple[int, ...]
    wearable: tuple[int, ...]
    sleepable: tuple[int, ...]
    eatable: tuple[int, ...]
    # predicate -> (subject member set or None, object member set or None, spatial or None)
    rules: dict[int, tuple[tuple[int, ...] | None, tuple[int, ...] | None, str | None]] = field(hash=False)

    def bits(self, members: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(1 if i in members else 0 for i in range(len(self.object_classes)))

    def predicate_mask(self, pred: int) -> tuple[int, ...]:
        return tuple(1 if i == pred else 0 for i in range(len(self.predicates)))


def default_relation_vocab() -> RelationVocab:
    objects = (
        "person", "dog", "cat", "horse", "bike",
        "shirt", "hat", "bed", "pizza", "table",
    )
    predicates = (
        "riding", "wear", "sleep-on", "eat", "above", "below",
        "left-of", "right-of", "on", "under", "near", "beside",
    )
    can_ride = (0, 1)
    ridable = (3, 4)
    living = (0, 1, 2)
    wearable = (5, 6)
    sleepable = (7, 9)
    eatable = (8,)
    rules = {
        0: (can_ride, ridable, "above"),   # riding
        1: (living, wearable, None),       # wear
        2: (living, sleepable, "above"),   # sleep-on
        3: (None, eatable, None),          # eat
        4: (None, None, "above"),
        5: (None, None, "below"),
        6: (None, None, "left-of"),
        7: (None, None, "right-of"),
        8: (None, None, "above"),          # on
        9: (None, None, "below"),          # under
    }
    return RelationVocab(objects, predicates, can_ride, ridable, living, wearable,
                         sleepable, eatable, rules)


def _rule_holds(vocab: RelationVocab, pair: BoxPair) -> bool:
    rule = vocab.rules.get(pair.predicate)
    if rule is None:
        return True
    subj, obj, spatial = rule
    if subj is not None and pair.subject_class not in subj:
        return False
    if obj is not None and pair.object_class not in obj:
        return False
    if spatial is not None and not spatial_predicates(pair)[spatial]:
        return False
    return True


def _sample_pair(vocab: RelationVocab, pred: int, subj: int, obj: int,
                 rng: np.random.Generator) -> BoxPair:
    rule = vocab.rules.get(pred)
    spatial = rule[2] if rule else None
    for _ in range(200):
        xs, ys, xo, yo = rng.uniform(-2.0, 2.0, size=4)
        ws, hs, wo, ho = np.exp(rng.uniform(-0.7, 0.7, size=4))
        if spatial == "above":
            ys = yo + abs(ys - yo) + 0.05
        elif spatial == "below":
            ys = yo - abs(ys - yo) - 0.05
        elif spatial == "left-of":
            xs = xo - abs(xs - xo) - 0.05
        elif spatial == "right-of":
            xs = xo + abs(xs - xo) + 0.05
        pair = BoxPair((xs, ys, ws, hs), (xo, yo, wo, ho), subj, obj, pred)
        if _rule_holds(vocab, pair):
            return pair
    raise InvalidVocab(f"cannot satisfy the rule for predicate {pred}")


@dataclass
class RelationSplit:
    """One split: box pairs plus their encoded model inputs.

    features = [8 spatial dims | n_pred/2 context dims].  The context block
    carries noisy evidence for the true predicate's PAIR (the stand-in for
    image appearance): confusable predicates (2k, 2k+1) share code k, so
    context alone never separates a pair.  Context noise depends on the
    subject class, so some subjects are systematically harder to read.
    """

    pairs: list[BoxPair]
    features: np.ndarray
    subject: np.ndarray
    object: np.ndarray
    predicate: np.ndarray


@dataclass
class RelationSplits:
    train: RelationSplit
    test_standard: RelationSplit
    test_zero_shot: RelationSplit
    vocab: RelationVocab
    zero_shot_combos: set[tuple[int, int, int]]


CONTEXT_SIGNAL = 2.0
CONTEXT_NOISE_BASE = 0.6
CONTEXT_NOISE_STEP = 0.25


def _encode_split(pairs: list[BoxPair], n_pred: int, rng: np.random.Generator) -> RelationSplit:
    spatial = np.stack([spatial_features(p) for p in pairs])
    pred = np.array([p.predicate for p in pairs], dtype=np.int64)
    subj = np.array([p.subject_class for p in pairs], dtype=np.int64)
    obj = np.array([p.object_class for p in pairs], dtype=np.int64)
    n_codes = (n_pred + 1) // 2
    noise_std = CONTEXT_NOISE_BASE + CONTEXT_NOISE_STEP * (subj % 3)
    context = rng.normal(0.0, 1.0, size=(len(pairs), n_codes)) * noise_std[:, None]
    context[np.arange(len(pairs)), pred // 2] += CONTEXT_SIGNAL
    return RelationSplit(pairs, np.hstack([spatial, context]), subj, obj, pred)


def gen_synth_relations(
    vocab: RelationVocab | None = None,
    n_train_pool: int = 20000,
    n_test: int = 2000,
    train_fraction: float = 0.01,
    zero_shot_fraction: float = 0.25,
    seed: int = 0,
) -> RelationSplits:
    """Generate train/test box-pair splits whose labels obey the rule schema.

    A fixed fraction of the legal (predicate, subject, object) combinations
    is held out entirely from the train pool and forms the zero-shot test
    split; the train set is a `train_fraction` subsample of the pool.
    """
    vocab = vocab or default_relation_vocab()
    n_obj = len(vocab.object_classes)
    n_pred = len(vocab.predicates)
    if n_obj < 2 or n_pred < 2:
        raise InvalidVocab("need at least two object classes and two predicates")
    rng = np.random.default_rng(seed)

    combos = []
    for p in range(n_pred):
        rule = vocab.rules.get(p)
        subj_ok = rule[0] if rule and rule[0] else tuple(range(n_obj))
        obj_ok = rule[1] if rule and rule[1] else tuple(range(n_obj))
        combos.extend((p, s, o) for s in subj_ok for o in obj_ok if s != o)
    combos.sort()
    rng.shuffle(combos)
    n_zero = max(1, int(len(combos) * zero_shot_fraction))
    zero_shot = set(map(tuple, combos[:n_zero]))
    seen = [tuple(c) for c in combos[n_zero:]]

    def draw(pool, count):
        out = []
        for _ in range(count):
            p, s, o = pool[rng.integers(len(pool))]
            out.append(_sample_pair(vocab, p, s, o, rng))
        return out

    pool = draw(seen, n_train_pool)
    n_train = max(1, int(np.ceil(train_fraction * n_train_pool)))
    train = pool[:n_train]
    test_standard = draw(seen, n_test)
    test_zero = draw(sorted(zero_shot), n_test)
    return RelationSplits(
        train=_encode_split(train, n_pred, rng),
        test_standard=_encode_split(test_standard, n_pred, rng),
        test_zero_shot=_encode_split(test_zero, n_pred, rng),
        vocab=vocab,
        zero_shot_combos=zero_shot,
    )
