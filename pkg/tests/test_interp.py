"""Domains, symbol bindings, samplers, and triple construction."""

import numpy as np
import pytest

from dasl.interp import (
    EmptyDomain,
    InsufficientClassCount,
    MissingExtern,
    Sampler,
    bind_theory,
    build_triples,
)
from dasl.lang import check_theory, parse_theory


MNIST_DECLS = """
sort Image dim 784;
sort Digit card 10;
rel digit : Image out 10 mlp 512 act sigmoid;
"""


class TestBindTheory:
    def test_mlp_parameter_count(self):
        th = check_theory(parse_theory(MNIST_DECLS))
        interp = bind_theory(th)
        assert interp.parameter_count == 784 * 512 + 512 + 512 * 10 + 10
        assert interp.parameter_count == 407050

    def test_missing_extern(self):
        th = check_theory(parse_theory("sort R dim 8;\nrel above : R extern above;"))
        with pytest.raises(MissingExtern):
            bind_theory(th)

    def test_embedding_sort_parameter(self):
        th = check_theory(parse_theory("sort E card 100 dim 16;"))
        interp = bind_theory(th)
        assert interp.domains["E"].columns[0].param.shape == (100, 16)

    def test_learned_constant(self):
        th = check_theory(parse_theory("sort E card 4 dim 6;\nconst c : E learned;"))
        interp = bind_theory(th)
        out = interp.symbols["c"]([])
        assert out.data.shape == (6,)


class TestEvalSymbol:
    def test_extern_modular_add(self):
        th = check_theory(parse_theory(
            "sort D card 10;\nfunc addmod : D x D -> D extern addmod;"))
        interp = bind_theory(th, externs={"addmod": lambda a, b: (a + b) % 10})
        assert interp.symbols["addmod"]([3, 9]) == 2

    def test_zero_weight_mlp_outputs_bias(self):
        th = check_theory(parse_theory(MNIST_DECLS))
        interp = bind_theory(th)
        binding = interp.symbols["digit"]
        for p in binding.parameters:
            p.value[...] = 0.0
        binding.biases[-1].value[...] = np.arange(10.0)
        out = binding([np.zeros((3, 784))])
        np.testing.assert_allclose(out.data, np.tile(np.arange(10.0), (3, 1)))

    def test_batched_shape_contract(self):
        th = check_theory(parse_theory(MNIST_DECLS))
        interp = bind_theory(th)
        out = interp.symbols["digit"]([np.random.default_rng(0).normal(size=(7, 784))])
        assert out.data.shape == (7, 10)

    def test_batch_consistency(self):
        th = check_theory(parse_theory(MNIST_DECLS.replace("512", "32")))
        interp = bind_theory(th, seed=3)
        rows = np.random.default_rng(1).normal(size=(5, 784))
        batched = interp.symbols["digit"]([rows]).data
        single = np.stack([interp.symbols["digit"]([rows[i]]).data for i in range(5)])
        np.testing.assert_allclose(batched, single, atol=1e-12)

    def test_index_argument_one_hot(self):
        th = check_theory(parse_theory(
            "sort D card 4;\nrel pick : D out 3 mlp 5 act relu;"))
        interp = bind_theory(th, seed=0)
        out = interp.symbols["pick"]([np.array([0, 1, 2, 3])])
        assert out.data.shape == (4, 3)


def _domain(n, dim=2):
    th = check_theory(parse_theory(
        f"sort Row dim {dim};\ndata Pool : Row from \"mem\";"))
    rows = np.arange(n * dim, dtype=np.float64).reshape(n, dim)
    interp = bind_theory(th, data={"Pool": (rows,)})
    return interp.domains["Pool"]


class TestSamplers:
    def test_full_returns_domain_in_order(self):
        s = Sampler(_domain(10), strategy="full")
        np.testing.assert_array_equal(s.sample(), np.arange(10))

    def test_minibatch_epoch_partition(self):
        s = Sampler(_domain(50000), strategy="shuffled-minibatch", batch_size=64,
                    rng=np.random.default_rng(5))
        batches = [s.sample() for _ in range(782)]
        assert len(batches) == 782
        assert len(batches[-1]) == 50000 - 781 * 64
        joined = np.concatenate(batches)
        assert len(joined) == 50000
        np.testing.assert_array_equal(np.sort(joined), np.arange(50000))

    def test_epoch_coverage_is_permutation(self):
        s = Sampler(_domain(103), strategy="shuffled-minibatch", batch_size=10,
                    rng=np.random.default_rng(6))
        epoch = np.concatenate([s.sample() for _ in range(11)])
        np.testing.assert_array_equal(np.sort(epoch), np.arange(103))

    def test_balanced_per_class(self):
        labels = np.tile(np.arange(10), 30)
        s = Sampler(_domain(300), strategy="balanced-per-class", batch_size=2,
                    labels=labels, rng=np.random.default_rng(7))
        picks = s.sample()
        assert len(picks) == 20
        counts = np.bincount(labels[picks], minlength=10)
        np.testing.assert_array_equal(counts, np.full(10, 2))

    def test_seed_determinism(self):
        def batches(seed):
            s = Sampler(_domain(64), strategy="shuffled-minibatch", batch_size=7,
                        rng=np.random.default_rng(seed))
            return [s.sample().tolist() for _ in range(30)]

        assert batches(9) == batches(9)
        assert batches(9) != batches(10)

    def test_empty_domain(self):
        s = Sampler(_domain(4), strategy="full")
        s.set_active_size(0)
        with pytest.raises(EmptyDomain):
            s.sample()

    def test_active_size_prefix(self):
        s = Sampler(_domain(100), strategy="shuffled-minibatch", batch_size=100,
                    rng=np.random.default_rng(8))
        s.set_active_size(30)
        batch = s.sample()
        assert len(batch) == 30
        assert batch.max() < 30


class TestBuildTriples:
    def _data(self, per_label=30, seed=0):
        rng = np.random.default_rng(seed)
        labels = np.tile(np.arange(10), per_label)
        rows = rng.normal(size=(len(labels), 8))
        return rows, labels

    def test_every_triple_satisfies_the_rule(self):
        rows, labels = self._data()
        dom = build_triples(rows, labels, per_class=20, seed=1)
        i1, i2, i3 = (c.ids for c in dom.columns)
        y1, y2, y3 = labels[i1], labels[i2], labels[i3]
        assert np.all((y1 + y2) % 10 == y3)

    def test_spec_examples(self):
        assert (3 + 9) % 10 == 2
        assert (0 + 0) % 10 == 0
        assert (5 + 5) % 10 != 1

    def test_rows_exposed_not_labels(self):
        rows, labels = self._data()
        dom = build_triples(rows, labels, per_class=5, seed=2)
        taken = dom.columns[0].take(np.array([0, 1]))
        assert taken.shape == (2, 8)

    def test_class_balanced_prefix(self):
        rows, labels = self._data()
        dom = build_triples(rows, labels, per_class=12, seed=3)
        y3 = labels[dom.columns[2].ids]
        for k in (1, 4, 12):
            counts = np.bincount(y3[: 10 * k], minlength=10)
            np.testing.assert_array_equal(counts, np.full(10, k))

    def test_insufficient_class(self):
        rows, labels = self._data()
        labels = labels.copy()
        labels[labels == 7] = 6  # class 7 vanishes
        with pytest.raises(InsufficientClassCount):
            build_triples(rows, labels, per_class=5, seed=4)

    def test_seed_determinism(self):
        rows, labels = self._data()
        a = build_triples(rows, labels, per_class=8, seed=5)
        b = build_triples(rows, labels, per_class=8, seed=5)
        for ca, cb in zip(a.columns, b.columns):
            np.testing.assert_array_equal(ca.ids, cb.ids)
