"""Circular convolution / correlation and the word-aspect association layer.

Index conventions (zero-based, all lengths ``d``)::

    conv(h, s)[k] = sum_i h[i] * s[(k - i) mod d]
    corr(h, s)[k] = sum_i h[i] * s[(k + i) mod d]

Convolution is commutative; correlation is not (``corr(h, s)`` is
``corr(s, h)`` read backwards).  In the frequency domain conv is
``F^-1(F(h) F(s))`` and corr is ``F^-1(conj(F(h)) F(s))``.

The numeric functions accept numpy arrays and operate on the last axis with
numpy broadcasting over leading axes.  :func:`associate` and
:func:`norm_clip` are the differentiable tensor ops used by the model.
"""

from __future__ import annotations

import enum

import numpy as np

from .autograd import DimensionError, Tensor, _as_tensor, _result
from .fft import dft, idft


class FusionOperator(str, enum.Enum):
    CONV = "conv"
    CORR = "corr"
    MUL = "mul"

    @classmethod
    def parse(cls, name: str) -> "FusionOperator":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown fusion operator {name!r}; expected conv, corr or mul") from None

    def __str__(self) -> str:
        return self.value


def _check(h: np.ndarray, s: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if h.shape[-1:] != s.shape[-1:] or h.ndim == 0:
        raise DimensionError(f"{name}: lengths differ ({h.shape} vs {s.shape})")
    if h.shape[-1] < 1:
        raise DimensionError(f"{name}: length must be at least 1")
    return h, s


def circ_corr_naive(h, s) -> np.ndarray:
    h, s = _check(h, s, "circ_corr")
    d = h.shape[-1]
    k, i = np.indices((d, d))
    # shifted[..., k, i] = s[(k + i) mod d]
    shifted = s[..., (k + i) % d]
    return np.einsum("...i,...ki->...k", h, shifted)


def circ_conv_naive(h, s) -> np.ndarray:
    h, s = _check(h, s, "circ_conv")
    d = h.shape[-1]
    k, i = np.indices((d, d))
    shifted = s[..., (k - i) % d]
    return np.einsum("...i,...ki->...k", h, shifted)


def circ_conv_fft(h, s) -> np.ndarray:
    h, s = _check(h, s, "circ_conv")
    return idft(dft(h) * dft(s))


def circ_corr_fft(h, s) -> np.ndarray:
    h, s = _check(h, s, "circ_corr")
    return idft(np.conj(dft(h)) * dft(s))


circ_conv = circ_conv_fft
circ_corr = circ_corr_fft


def involution(x) -> np.ndarray:
    """``x[-k mod d]``: the approximate inverse of ``x`` under convolution."""
    x = np.asarray(x)
    return np.roll(x[..., ::-1], 1, axis=-1)


def fuse_forward(op: FusionOperator, h, s) -> np.ndarray:
    op = FusionOperator(op)
    if op is FusionOperator.CONV:
        return circ_conv_fft(h, s)
    if op is FusionOperator.CORR:
        return circ_corr_fft(h, s)
    h, s = _check(h, s, "mul")
    return h * s


def fuse_backward(op: FusionOperator, grad_out, h, s) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``fuse_forward(op, h, s)`` w.r.t. ``h`` and ``s``.

    Binding by convolution is undone by correlation, so the conv gradients
    are correlations with the upstream gradient and vice versa.
    """
    op = FusionOperator(op)
    h, s = _check(h, s, "fuse_backward")
    grad_out, _ = _check(grad_out, h, "fuse_backward")
    if op is FusionOperator.CONV:
        return circ_corr_fft(s, grad_out), circ_corr_fft(h, grad_out)
    if op is FusionOperator.CORR:
        return circ_corr_fft(grad_out, s), circ_conv_fft(h, grad_out)
    return s * grad_out, h * grad_out


def associate(H: Tensor, s: Tensor, op: FusionOperator) -> Tensor:
    """Row-wise ``M[..., i, :] = H[..., i, :] o s[..., :]`` for the chosen operator.

    ``H`` is ``[..., L, d]`` and ``s`` is ``[..., d]`` with matching leading
    axes; ``s`` is shared across the ``L`` rows.  No parameters.
    """
    op = FusionOperator(op)
    H, s = _as_tensor(H), _as_tensor(s)
    if H.data.ndim < 2 or H.shape[:-2] + H.shape[-1:] != s.shape:
        raise DimensionError(f"associate: H {H.shape} incompatible with aspect {s.shape}")
    s_rows = np.broadcast_to(s.data[..., None, :], H.shape)
    out = fuse_forward(op, H.data, s_rows)

    def fn(g):
        gh, gs = fuse_backward(op, g, H.data, s_rows)
        return gh, gs.sum(axis=-2)

    return _result(out, (H, s), fn)


def norm_clip(v) -> Tensor:
    """Project each last-axis vector onto the unit L2 ball."""
    v = _as_tensor(v)
    norm = np.sqrt((v.data * v.data).sum(axis=-1, keepdims=True))
    over = norm > 1.0
    scale = np.where(over, norm, 1.0)
    y = v.data / scale

    def fn(g):
        radial = (y * g).sum(axis=-1, keepdims=True)
        return (np.where(over, (g - y * radial) / scale, g),)

    return _result(y, (v,), fn)
