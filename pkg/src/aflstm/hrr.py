"""Holographic reduced representation store / retrieve / clean up."""

from __future__ import annotations

from typing import Hashable

import numpy as np

from .autograd import DimensionError
from .holo import circ_conv_fft, circ_corr_fft


class EmptyStoreError(LookupError):
    pass


def encode(h, s) -> np.ndarray:
    """Bind ``s`` to key ``h`` by circular convolution."""
    return circ_conv_fft(h, s)


def decode(h, m) -> np.ndarray:
    """Noisy retrieval of whatever was bound to ``h`` in trace ``m``."""
    return circ_corr_fft(h, m)


def random_unit_vectors(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class CleanupMemory:
    """Candidate vectors resolved by maximum dot product.

    Items are unit-normalized on insertion; ties go to the earliest item.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.keys: list[Hashable] = []
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.keys)

    def add(self, key: Hashable, vector) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DimensionError(f"expected a vector of length {self.dim}, got {vector.shape}")
        if key in self.keys:
            raise KeyError(f"duplicate key {key!r}")
        norm = np.linalg.norm(vector)
        self.keys.append(key)
        self._rows.append(vector / norm if norm > 0 else vector)
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.array(self._rows).reshape(len(self._rows), self.dim)
        return self._matrix

    def cleanup(self, probe) -> Hashable:
        return cleanup(probe, self)


def cleanup(probe, mem: CleanupMemory) -> Hashable:
    if not len(mem):
        raise EmptyStoreError("cleanup on an empty memory")
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (mem.dim,):
        raise DimensionError(f"probe length {probe.shape} does not match memory dim {mem.dim}")
    return mem.keys[int(np.argmax(mem.matrix @ probe))]


def capacity_experiment(d: int, num_pairs: int, trials: int, seed: int,
                        distractors: int = 10) -> float:
    """Fraction of pairs correctly retrieved from a superposed trace.

    Each trial draws ``num_pairs + distractors`` random unit items and
    ``num_pairs`` random unit keys, sums the bound pairs into one trace, then
    decodes every key and cleans the result up against all items.
    """
    if d < 2 or num_pairs < 1:
        raise ValueError("need d >= 2 and num_pairs >= 1")
    rng = np.random.default_rng(seed)
    correct = 0
    for _ in range(trials):
        items = random_unit_vectors(rng, num_pairs + distractors, d)
        keys = random_unit_vectors(rng, num_pairs, d)
        trace = encode(keys, items[:num_pairs]).sum(axis=0)
        probes = decode(keys, np.broadcast_to(trace, keys.shape))
        correct += int((np.argmax(probes @ items.T, axis=1) == np.arange(num_pairs)).sum())
    return correct / (trials * num_pairs)
