"""Discrete Fourier transforms along the last axis.

Power-of-two lengths use an iterative radix-2 decimation-in-time FFT; any
other length falls back to the direct O(d^2) sum.  Zero-padding is never
applied because it would change the circular index structure.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@lru_cache(maxsize=64)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(m: int, sign: int) -> np.ndarray:
    return np.exp(sign * 2j * np.pi * np.arange(m // 2) / m)


@lru_cache(maxsize=16)
def _dft_matrix(n: int, sign: int) -> np.ndarray:
    k = np.arange(n)
    # reduce k*j mod n before scaling so large products keep full precision
    return np.exp(sign * 2j * np.pi * (np.outer(k, k) % n) / n)


def _transform(x: np.ndarray, sign: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("transform length must be at least 1")
    if not _is_pow2(n):
        return x @ _dft_matrix(n, sign).T
    lead = x.shape[:-1]
    a = x[..., _bit_reverse(n)].reshape(-1, n)
    m = 2
    while m <= n:
        half = m // 2
        blocks = a.reshape(a.shape[0], n // m, m)
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(m, sign)
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(-1, n)
        m *= 2
    return a.reshape(*lead, n)


def dft(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT: ``X[k] = sum_j x[j] exp(-2 pi i jk/d)``."""
    return _transform(x, -1)


def idft(X: np.ndarray, real: bool = True) -> np.ndarray:
    """Inverse DFT with 1/d scaling; returns the real part when ``real``."""
    X = np.asarray(X)
    out = _transform(X, +1) / X.shape[-1]
    return out.real if real else out
