"""Perceptual hashing and near-duplicate classification for keyframes.

The hash recipe is fixed and bit-exact: resize the grayscale raster to
32x32 (Lanczos), apply a 2-D DCT-II, keep the top-left 8x8 coefficient
block, and set bit k (row-major) iff coefficient k exceeds the median of
those 64 coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.fft import dctn

from .errors import InputError

HASH_BITS = 64
_RESIZE = 32
_BLOCK = 8


@dataclass(frozen=True)
class PerceptualHash:
    """64-bit perceptual hash, stored as an unsigned integer."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << HASH_BITS):
            raise InputError(f"hash out of range for {HASH_BITS} bits: {self.bits:#x}")

    @classmethod
    def from_hex(cls, hex_str: str) -> "PerceptualHash":
        if len(hex_str) != HASH_BITS // 4:
            raise InputError(f"expected {HASH_BITS // 4} hex chars, got {len(hex_str)}")
        return cls(int(hex_str, 16))

    def to_hex(self) -> str:
        return f"{self.bits:016x}"

    def __invert__(self) -> "PerceptualHash":
        return PerceptualHash(self.bits ^ ((1 << HASH_BITS) - 1))


@dataclass(frozen=True)
class DedupConfig:
    """Similarity threshold for near-duplicate classification."""

    tau: float = 0.8

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise InputError(f"tau must be in (0, 1], got {self.tau}")


def compute_phash(image: np.ndarray) -> PerceptualHash:
    """Hash a grayscale raster (2-D array) into a 64-bit fingerprint."""
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise InputError("image must be a non-empty 2-D grayscale raster")
    small = Image.fromarray(arr.astype(np.float32), mode="F").resize(
        (_RESIZE, _RESIZE), Image.LANCZOS
    )
    coeffs = dctn(np.asarray(small, dtype=np.float64), type=2, norm="ortho")
    block = coeffs[:_BLOCK, :_BLOCK].ravel()
    median = np.median(block)
    bits = 0
    for k, c in enumerate(block):
        if c > median:
            bits |= 1 << (HASH_BITS - 1 - k)
    return PerceptualHash(bits)


def hamming_distance(h1: PerceptualHash, h2: PerceptualHash) -> int:
    """Number of differing bit positions (popcount of XOR)."""
    return (h1.bits ^ h2.bits).bit_count()


def is_near_duplicate(h1: PerceptualHash, h2: PerceptualHash, cfg: DedupConfig) -> bool:
    """True iff the Hamming distance is at most N*(1 - tau).

    The comparison is exact at the threshold boundary: with N=64, tau=0.8
    the cutoff is 12.8, so distance 12 qualifies and 13 does not.
    """
    # D is an exact integer; the tiny epsilon keeps integer-valued cutoffs
    # (e.g. tau=0.875 -> 8.0) from flipping on float rounding of N*(1-tau).
    return hamming_distance(h1, h2) <= HASH_BITS * (1.0 - cfg.tau) + 1e-9
