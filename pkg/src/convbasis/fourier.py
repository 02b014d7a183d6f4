"""Complex DFT primitive with a power-of-two contract.

Forward transform: X_k = sum_j x_j exp(-2*pi*i*j*k/n); inverse includes 1/n.
Structured matvecs elsewhere in the library pad to a power of two and go
through numpy's FFT directly; this wrapper is the user-facing primitive and
rejects sizes the radix-2 contract does not cover.
"""

import numpy as np


def is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n):
    """Smallest power of two >= n."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p = 1
    while p < n:
        p <<= 1
    return p


def fft(x, inverse=False):
    """DFT (or inverse DFT) of a complex vector whose length is a power of two."""
    v = np.ascontiguousarray(x, dtype=np.complex128)
    if v.ndim != 1:
        raise ValueError(f"fft input must be 1-D, got shape {v.shape}")
    if not is_pow2(v.size):
        raise ValueError(f"fft length must be a power of two, got {v.size}")
    if inverse:
        return np.fft.ifft(v)
    return np.fft.fft(v)


def ifft(x):
    return fft(x, inverse=True)
