import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oodkit.errors import InputError
from oodkit.seeding import make_rng
from oodkit.store import EmbeddingStore


def vec(*values):
    return np.array(values, dtype=np.float64)


class TestPush:
    def test_fifo_eviction(self):
        store = EmbeddingStore(k_classes=1, dim=1, capacity=3)
        for v in (1.0, 2.0, 3.0, 4.0):
            store.push(0, vec(v))
        x, y = store.snapshot()
        assert np.array_equal(x, [[2.0], [3.0], [4.0]])
        assert np.array_equal(y, [0, 0, 0])

    def test_classes_do_not_interfere(self):
        store = EmbeddingStore(k_classes=2, dim=1, capacity=2)
        store.push(0, vec(1.0))
        store.push(0, vec(2.0))
        for v in range(10):
            store.push(1, vec(float(v)))
        assert store.count(0) == 2
        x, y = store.snapshot()
        assert np.array_equal(x[y == 0], [[1.0], [2.0]])

    def test_dimension_and_class_validation(self):
        store = EmbeddingStore(k_classes=2, dim=2, capacity=4)
        with pytest.raises(InputError):
            store.push(0, vec(1.0))
        with pytest.raises(InputError):
            store.push(5, vec(1.0, 2.0))

    def test_push_copies_input(self):
        store = EmbeddingStore(k_classes=1, dim=2, capacity=4)
        v = vec(1.0, 2.0)
        store.push(0, v)
        v[0] = 99.0
        x, _ = store.snapshot()
        assert x[0, 0] == 1.0


class TestReady:
    def test_empty_store(self):
        store = EmbeddingStore(k_classes=2, dim=1, capacity=4)
        assert not store.ready(1)

    def test_all_full(self):
        store = EmbeddingStore(k_classes=2, dim=1, capacity=2)
        for k in range(2):
            store.push(k, vec(0.0))
            store.push(k, vec(1.0))
        assert store.ready(2)

    def test_exact_boundary(self):
        store = EmbeddingStore(k_classes=3, dim=1, capacity=10)
        for k in range(3):
            store.push(k, vec(float(k)))
        assert store.ready(1)
        assert not store.ready(2)


class TestSnapshot:
    def test_counts_and_purity(self):
        store = EmbeddingStore(k_classes=2, dim=1, capacity=10)
        for v in (1.0, 2.0):
            store.push(0, vec(v))
        for v in (3.0, 4.0, 5.0):
            store.push(1, vec(v))
        x1, y1 = store.snapshot()
        x2, y2 = store.snapshot()
        assert x1.shape == (5, 1)
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)

    def test_snapshot_after_push_differs_by_one(self):
        store = EmbeddingStore(k_classes=1, dim=1, capacity=10)
        store.push(0, vec(1.0))
        x1, _ = store.snapshot()
        store.push(0, vec(2.0))
        x2, _ = store.snapshot()
        assert x2.shape[0] == x1.shape[0] + 1
        assert np.array_equal(x2[:-1], x1)


@settings(max_examples=50, deadline=None)
@given(
    capacity=st.integers(min_value=1, max_value=8),
    pushes=st.lists(st.integers(min_value=0, max_value=2), max_size=200),
)
def test_contents_match_replay_oracle(capacity, pushes):
    store = EmbeddingStore(k_classes=3, dim=1, capacity=capacity)
    replay = {k: [] for k in range(3)}
    for i, k in enumerate(pushes):
        store.push(k, vec(float(i)))
        replay[k].append(float(i))
    x, y = store.snapshot()
    for k in range(3):
        expected = replay[k][-capacity:]
        got = list(x[y == k, 0])
        assert got == expected
        # eviction count per class
        assert len(replay[k]) - len(got) == max(0, len(replay[k]) - capacity)


def test_randomized_pushes_against_replay_oracle():
    rng = make_rng(123)
    capacity = 64
    store = EmbeddingStore(k_classes=4, dim=3, capacity=capacity)
    replay = {k: [] for k in range(4)}
    for _ in range(10_000):
        k = int(rng.integers(4))
        v = rng.standard_normal(3)
        store.push(k, v)
        replay[k].append(v.copy())
    x, y = store.snapshot()
    for k in range(4):
        expected = np.array(replay[k][-capacity:])
        assert np.array_equal(x[y == k], expected)
