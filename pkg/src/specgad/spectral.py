"""Discrete Fourier transforms built from scratch.

Forward transform is unnormalized, X[k] = sum_n x[n] exp(-2j*pi*n*k/N);
the inverse carries the 1/N factor. Power-of-two lengths go through an
iterative radix-2 decimation-in-time pass, everything else through
Bluestein's chirp-z reduction onto the power-of-two path, so any N >= 1
is supported without padding (padding would move the bin frequencies).

All transforms accept arrays of shape (..., N) and operate along the
last axis; double precision throughout.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class HalfSpectrum:
    """First floor(L/2)+1 DFT bins of a real signal of length L.

    The dropped upper bins are recoverable through conjugate symmetry
    X[L-k] = conj(X[k]), so this is a lossless storage format for real
    input. DC is real, and so is the Nyquist bin when L is even.
    """

    bins: np.ndarray  # complex128, shape (floor(L/2)+1,)
    original_len: int

    def __post_init__(self):
        expected = self.original_len // 2 + 1
        if self.original_len < 1:
            raise ValueError("original_len must be >= 1")
        if self.bins.shape[-1] != expected:
            raise ValueError(
                f"expected {expected} bins for length {self.original_len}, "
                f"got {self.bins.shape[-1]}"
            )


def dft_naive(x) -> np.ndarray:
    """Direct O(N^2) DFT by evaluating the defining sum. Reference oracle."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("empty input")
    idx = np.arange(n)
    kernel = np.exp(-2j * np.pi * np.outer(idx, idx) / n)
    return x @ kernel


@lru_cache(maxsize=64)
def _bit_reverse_indices(n: int) -> np.ndarray:
    """Bit-reversal permutation for n = 2^m (immutable, cached)."""
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=64)
def _twiddles(size: int) -> np.ndarray:
    """exp(-2j*pi*k/size) for k in [0, size/2). Immutable, cached."""
    w = np.exp(-2j * np.pi * np.arange(size // 2) / size)
    w.setflags(write=False)
    return w


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time butterflies; N must be 2^m."""
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    out = x[..., _bit_reverse_indices(n)]
    size = 2
    while size <= n:
        half = size // 2
        tw = _twiddles(size)
        view = out.reshape(out.shape[:-1] + (n // size, size))
        even = view[..., :half]
        odd = view[..., half:] * tw  # fresh array; even stays a view
        view[..., half:] = even - odd
        view[..., :half] = even + odd
        size *= 2
    return out


def _bluestein(x: np.ndarray) -> np.ndarray:
    """Chirp-z DFT for arbitrary N via one power-of-two convolution.

    Uses nk = (n^2 + k^2 - (k-n)^2)/2 to rewrite the DFT as a linear
    convolution against the chirp exp(1j*pi*m^2/N). Squares are reduced
    mod 2N in exact integer arithmetic before entering exp(), which keeps
    the chirp phase accurate for large N.
    """
    n = x.shape[-1]
    sq = (np.arange(n, dtype=np.int64) ** 2) % (2 * n)
    w = np.exp(-1j * np.pi * sq / n)

    m = 1 << (2 * n - 2).bit_length()
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * w
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(w)
    b[m - n + 1:] = np.conj(w[1:][::-1])

    conv = _ifft_pow2(_fft_pow2(a) * _fft_pow2(b))
    return conv[..., :n] * w


def _ifft_pow2(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(x))) / x.shape[-1]


def fft(x) -> np.ndarray:
    """DFT of x along the last axis, numerically equal to dft_naive."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("empty input")
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    return _bluestein(x)


def ifft(X) -> np.ndarray:
    """Inverse DFT along the last axis; carries the 1/N factor."""
    X = np.asarray(X, dtype=np.complex128)
    if X.shape[-1] == 0:
        raise ValueError("empty input")
    return np.conj(fft(np.conj(X))) / X.shape[-1]


# Imaginary parts larger than this on bins that must be real (DC, Nyquist
# of a real signal) indicate the input was not real / not a valid half
# spectrum rather than rounding noise.
_REALNESS_TOL = 1e-9


def rfft_half(x) -> HalfSpectrum:
    """DFT of a real signal, keeping only the first floor(L/2)+1 bins."""
    x = np.asarray(x, dtype=np.float64)
    L = x.shape[-1]
    if L == 0:
        raise ValueError("empty input")
    bins = fft(x)[..., : L // 2 + 1].copy()
    # DC (and Nyquist for even L) are real in exact arithmetic; zero the
    # rounding residue so the HalfSpectrum invariant holds exactly.
    if abs(bins[..., 0].imag).max() > _REALNESS_TOL:
        raise ValueError("DC bin has non-negligible imaginary part")
    bins[..., 0] = bins[..., 0].real
    if L % 2 == 0:
        if abs(bins[..., -1].imag).max() > _REALNESS_TOL:
            raise ValueError("Nyquist bin has non-negligible imaginary part")
        bins[..., -1] = bins[..., -1].real
    return HalfSpectrum(bins=bins, original_len=L)


def irfft_half(h: HalfSpectrum) -> np.ndarray:
    """Reconstruct the real signal from its half spectrum.

    Expands to the full conjugate-symmetric spectrum, inverts, and drops
    imaginary residuals (checked to be below 1e-9).
    """
    L = h.original_len
    bins = np.asarray(h.bins, dtype=np.complex128)
    if abs(bins[..., 0].imag).max(initial=0.0) > _REALNESS_TOL:
        raise ValueError("invalid half spectrum: DC bin must be real")
    if L % 2 == 0 and abs(bins[..., -1].imag).max(initial=0.0) > _REALNESS_TOL:
        raise ValueError("invalid half spectrum: Nyquist bin must be real")
    full = np.zeros(bins.shape[:-1] + (L,), dtype=np.complex128)
    full[..., : bins.shape[-1]] = bins
    if L > 1:
        full[..., bins.shape[-1]:] = np.conj(bins[..., 1 : (L + 1) // 2])[..., ::-1]
    x = ifft(full)
    if abs(x.imag).max() > _REALNESS_TOL:
        raise ValueError("imaginary residual exceeds tolerance")
    return x.real


def circular_convolve_naive(h, x) -> np.ndarray:
    """w[n] = sum_m h[m] * x[(n - m) mod N], evaluated directly."""
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if h.shape != x.shape or h.ndim != 1:
        raise ValueError("h and x must be 1-D with equal length")
    n = h.shape[0]
    if n == 0:
        raise ValueError("empty input")
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return x[idx] @ h


def circular_convolve_fft(h, x) -> np.ndarray:
    """Circular convolution through the frequency domain: ifft(fft(h)*fft(x))."""
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if h.shape != x.shape or h.ndim != 1:
        raise ValueError("h and x must be 1-D with equal length")
    return ifft(fft(h) * fft(x)).real
