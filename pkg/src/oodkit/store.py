"""Bounded per-class FIFO queues of latent embeddings.

The trainer pushes each batch's latents here; once every class holds enough
vectors the queues are snapshotted to fit the latent Gaussian model. When a
queue is full the oldest embedding of that class is dropped, so contents
track the most recent (highest quality) representations.
"""

from collections import deque

import numpy as np

from .errors import InputError


class EmbeddingStore:
    def __init__(self, k_classes: int, dim: int, capacity: int = 1000):
        if k_classes < 1:
            raise InputError("k_classes must be >= 1")
        if dim < 1:
            raise InputError("dim must be >= 1")
        if capacity < 1:
            raise InputError("capacity must be >= 1")
        self.k_classes = k_classes
        self.dim = dim
        self.capacity = capacity
        self._queues = [deque(maxlen=capacity) for _ in range(k_classes)]

    def _check_class(self, class_id) -> int:
        class_id = int(class_id)
        if not 0 <= class_id < self.k_classes:
            raise InputError(f"class id {class_id} out of range [0, {self.k_classes})")
        return class_id

    def push(self, class_id, embedding) -> None:
        """Append one embedding, evicting that class's oldest entry if full."""
        class_id = self._check_class(class_id)
        v = np.asarray(embedding, dtype=np.float64)
        if v.shape != (self.dim,):
            raise InputError(f"expected dimension {self.dim}, got shape {v.shape}")
        self._queues[class_id].append(v.copy())

    def push_batch(self, class_ids, embeddings) -> None:
        embeddings = np.asarray(embeddings, dtype=np.float64)
        for class_id, v in zip(class_ids, embeddings):
            self.push(class_id, v)

    def count(self, class_id) -> int:
        return len(self._queues[self._check_class(class_id)])

    def ready(self, min_per_class: int) -> bool:
        """True iff every class queue holds at least min_per_class embeddings."""
        return all(len(q) >= min_per_class for q in self._queues)

    def snapshot(self):
        """Current contents as (embeddings, labels); does not mutate the store."""
        xs, ys = [], []
        for class_id, q in enumerate(self._queues):
            for v in q:
                xs.append(v)
                ys.append(class_id)
        if not xs:
            return np.zeros((0, self.dim)), np.zeros(0, dtype=np.int64)
        return np.array(xs, dtype=np.float64), np.array(ys, dtype=np.int64)
