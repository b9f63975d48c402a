"""Occupation bitstrings and fixed-(N_alpha, N_beta) sectors.

A configuration is an integer whose bit ``i`` is the occupation of spin
orbital ``i``. Spin orbitals are interleaved: qubit ``2k`` is spatial orbital
``k`` with spin alpha, qubit ``2k + 1`` the same orbital with spin beta.
Strings are printed orbital 0 first, so ``"1100"`` has qubits 0 and 1 filled.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

__all__ = [
    "SectorSpec",
    "to_bits",
    "from_bits",
    "to_string",
    "from_string",
    "popcount",
    "channel_mask",
    "in_sector",
    "sector_mask",
    "masks_along",
    "sector_configs",
]


@dataclass(frozen=True)
class SectorSpec:
    n_alpha: int
    n_beta: int

    def __post_init__(self):
        if self.n_alpha < 0 or self.n_beta < 0:
            raise ValueError("electron counts must be nonnegative")

    @classmethod
    def from_integrals(cls, ints) -> "SectorSpec":
        return cls(ints.n_alpha, ints.n_beta)

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta

    @property
    def ms2(self) -> int:
        return self.n_alpha - self.n_beta

    def target(self, channel: int) -> int:
        return self.n_beta if channel else self.n_alpha

    def check(self, n_orbitals: int) -> None:
        if n_orbitals % 2:
            raise ValueError(f"need an even number of spin orbitals, got {n_orbitals}")
        half = n_orbitals // 2
        if self.n_alpha > half or self.n_beta > half:
            raise ValueError(f"sector {self} does not fit in {n_orbitals} spin orbitals")

    def dimension(self, n_orbitals: int) -> int:
        self.check(n_orbitals)
        half = n_orbitals // 2
        return comb(half, self.n_alpha) * comb(half, self.n_beta)


def to_bits(x, n: int) -> np.ndarray:
    """Integer configurations of shape ``(B,)`` to a ``(B, n)`` 0/1 array."""
    x = np.asarray(x, dtype=np.int64)
    return ((x[..., None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)


def from_bits(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    return (bits << np.arange(bits.shape[-1], dtype=np.int64)).sum(axis=-1)


def to_string(x: int, n: int) -> str:
    return "".join(str((int(x) >> i) & 1) for i in range(n))


def from_string(s: str) -> int:
    return sum(1 << i for i, c in enumerate(s) if c == "1")


def popcount(x) -> np.ndarray:
    return np.bitwise_count(np.asarray(x, dtype=np.int64)).astype(np.int64)


def channel_mask(n_orbitals: int, channel: int) -> int:
    return sum(1 << i for i in range(channel, n_orbitals, 2))


def in_sector(x, n_orbitals: int, sector: SectorSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    na = popcount(x & channel_mask(n_orbitals, 0))
    nb = popcount(x & channel_mask(n_orbitals, 1))
    inside = (x >> n_orbitals) == 0 if n_orbitals < 63 else np.ones(x.shape, bool)
    return (na == sector.n_alpha) & (nb == sector.n_beta) & inside


def sector_mask(prefix, sector: SectorSpec, n_orbitals: int) -> np.ndarray:
    """Allowed next tokens after ``prefix``.

    ``prefix`` is a 0/1 sequence of length ``i`` or a ``(B, i)`` array.
    Returns booleans ``[allow_0, allow_1]`` of shape ``(2,)`` or ``(B, 2)``.
    """
    prefix = np.asarray(prefix, dtype=np.int64)
    single = prefix.ndim == 1
    prefix = np.atleast_2d(prefix)
    i = prefix.shape[1]
    if i >= n_orbitals:
        raise ValueError("prefix is already a full configuration")
    c = i % 2
    placed = prefix[:, c::2].sum(axis=1)
    target = sector.target(c)
    remaining = (n_orbitals - 1 - i) // 2
    allowed = np.stack([placed + remaining >= target, placed < target], axis=1)
    return allowed[0] if single else allowed


def masks_along(bits, sector: SectorSpec) -> np.ndarray:
    """Allowed tokens at every position of full configurations.

    ``bits`` has shape ``(B, n)``; the result has shape ``(B, n, 2)`` and entry
    ``[b, i]`` equals ``sector_mask(bits[b, :i])``.
    """
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[1]
    parity = np.arange(n) % 2
    placed = np.zeros(bits.shape, dtype=np.int64)
    for c in (0, 1):
        ch = bits[:, c::2]
        before = np.cumsum(ch, axis=1) - ch
        placed[:, c::2] = before
    target = np.where(parity == 1, sector.n_beta, sector.n_alpha)
    remaining = (n - 1 - np.arange(n)) // 2
    return np.stack([placed + remaining >= target, placed < target], axis=2)


def sector_configs(n_orbitals: int, sector: SectorSpec) -> np.ndarray:
    """All configurations of the sector as a sorted int64 array."""
    sector.check(n_orbitals)
    half = n_orbitals // 2
    alpha = [sum(1 << (2 * k) for k in occ) for occ in combinations(range(half), sector.n_alpha)]
    beta = [sum(1 << (2 * k + 1) for k in occ) for occ in combinations(range(half), sector.n_beta)]
    out = (np.asarray(alpha, dtype=np.int64)[:, None] | np.asarray(beta, dtype=np.int64)[None, :]).ravel()
    return np.sort(out)
