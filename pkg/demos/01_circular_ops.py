"""Circular convolution and correlation, by loop and by FFT."""
import time

import numpy as np

from aflstm.holo import (circ_conv_fft, circ_conv_naive, circ_corr_fft, circ_corr_naive,
                         involution)

# SMALL HAND-SIZED CASES

h = np.array([1.0, 2.0, 3.0])
s = np.array([4.0, 5.0, 6.0])

print("conv(h, s) =", circ_conv_naive(h, s))        # [31. 31. 28.]
print("corr(h, s) =", circ_corr_naive(h, s))        # [32. 29. 29.]

# both outputs sum to sum(h) * sum(s) = 6 * 15 = 90
print("sums:", circ_conv_naive(h, s).sum(), circ_corr_naive(h, s).sum())

# convolution commutes, correlation does not
unit = np.array([0.0, 1.0, 0.0])
print("corr(h, e1) =", circ_corr_naive(h, unit), " corr(e1, h) =", circ_corr_naive(unit, h))

# the impulse is the identity for both; correlating *against* it reverses
delta = np.eye(3)[0]
print("conv(delta, h) =", circ_conv_naive(delta, h))
print("corr(h, delta) =", circ_corr_naive(h, delta), "== involution(h) =", involution(h))

# FFT PATH
# same numbers, O(d log d) instead of O(d^2)

rng = np.random.default_rng(0)
for d in (64, 256, 1024):
    a, b = rng.standard_normal(d), rng.standard_normal(d)
    t0 = time.perf_counter()
    slow = circ_conv_naive(a, b)
    t1 = time.perf_counter()
    fast = circ_conv_fft(a, b)
    t2 = time.perf_counter()
    diff = max(np.abs(slow - fast).max(), np.abs(circ_corr_naive(a, b) - circ_corr_fft(a, b)).max())
    print(f"d={d:5d}  naive {1e3 * (t1 - t0):7.2f} ms  fft {1e3 * (t2 - t1):6.2f} ms  max diff {diff:.1e}")
