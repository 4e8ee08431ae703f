"""PAM constellations, symbol generation, decisions and error counting.

Levels are equidistant, zero-mean and have unit peak amplitude. PAM4 and PAM8
use binary-reflected Gray labels. PAM6 carries 5 bits on every pair of
symbols (32 of the 36 pairs, the four corner pairs are unused); BER for PAM6
therefore depends on this particular labeling, SER does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (4, 6, 8)


def gray(n):
    n = np.asarray(n)
    return n ^ (n >> 1)


@lru_cache(maxsize=None)
def _pam6_pair_table() -> tuple[np.ndarray, np.ndarray]:
    """5-bit label -> (i, j) level-index pair, and the inverse 6x6 lookup.

    Built by folding an 8x4 Gray-labeled rectangle into the 6x6 cross: the
    inner columns keep their place, the outermost columns wrap onto the top
    and bottom rows.
    """
    fold = {0: [(1, 0), (2, 0), (2, 5), (1, 5)], 7: [(4, 0), (3, 0), (3, 5), (4, 5)]}
    pairs = np.empty((32, 2), dtype=np.int64)
    for a in range(8):
        for b in range(4):
            label = (int(gray(a)) << 2) | int(gray(b))
            if a in fold:
                pairs[label] = fold[a][b]
            elif a == 1:
                pairs[label] = (0, b + 1)
            elif a == 6:
                pairs[label] = (5, b + 1)
            else:
                pairs[label] = (a - 1, b + 1)
    inverse = -np.ones((6, 6), dtype=np.int64)
    inverse[pairs[:, 0], pairs[:, 1]] = np.arange(32)
    # unused corner pairs decode as their horizontal neighbour
    for i, j, ni in ((0, 0, 1), (0, 5, 1), (5, 0, 4), (5, 5, 4)):
        inverse[i, j] = inverse[ni, j]
    return pairs, inverse


@dataclass(frozen=True)
class Constellation:
    order: int

    def __post_init__(self):
        if self.order not in SUPPORTED_ORDERS:
            raise ValueError(f"unsupported PAM order {self.order}; use one of {SUPPORTED_ORDERS}")

    @property
    def levels(self) -> np.ndarray:
        M = self.order
        return (2.0 * np.arange(M) - (M - 1)) / (M - 1)

    @property
    def spacing(self) -> float:
        return 2.0 / (self.order - 1)

    @property
    def bits_per_symbol(self) -> float:
        return 2.5 if self.order == 6 else float(np.log2(self.order))

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.levels**2)))

    def map(self, symbols) -> np.ndarray:
        """Symbol indices -> amplitudes."""
        return self.levels[np.asarray(symbols)]

    def demap(self, amplitudes) -> np.ndarray:
        """Amplitudes lying on the grid -> symbol indices."""
        idx = np.rint((np.asarray(amplitudes) + 1.0) / self.spacing).astype(np.int64)
        return np.clip(idx, 0, self.order - 1)

    def decide_index(self, y) -> np.ndarray:
        """Nearest level index; a value exactly between two levels goes to the lower one."""
        lv = self.levels
        thresholds = (lv[:-1] + lv[1:]) / 2
        return np.searchsorted(thresholds, np.asarray(y, dtype=np.float64), side="left").astype(np.int64)

    def decide(self, y) -> np.ndarray:
        return self.levels[self.decide_index(y)]

    def symbols_to_bits(self, symbols) -> np.ndarray:
        """Bit labels. PAM6 pairs symbols (0, 1), (2, 3), ...; an odd trailing symbol is dropped."""
        symbols = np.asarray(symbols, dtype=np.int64)
        if self.order == 6:
            _, inverse = _pam6_pair_table()
            n = len(symbols) // 2
            labels = inverse[symbols[0:2 * n:2], symbols[1:2 * n:2]]
            return ((labels[:, None] >> np.arange(4, -1, -1)) & 1).astype(np.uint8).reshape(-1)
        k = int(np.log2(self.order))
        labels = gray(symbols)
        return ((labels[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8).reshape(-1)

    def bits_to_symbols(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        if self.order == 6:
            pairs, _ = _pam6_pair_table()
            labels = bits.reshape(-1, 5) @ (1 << np.arange(4, -1, -1))
            return pairs[labels].reshape(-1)
        k = int(np.log2(self.order))
        g = bits.reshape(-1, k) @ (1 << np.arange(k - 1, -1, -1))
        # inverse Gray
        b = g.copy()
        shift = 1
        while shift < k:
            b ^= b >> shift
            shift <<= 1
        return b


def generate_prms(seed: int, length: int, order: int) -> np.ndarray:
    """Pseudo-random multilevel sequence of symbol indices, i.i.d. uniform.

    For PAM6 this includes the four unused corner pairs (probability 1/9);
    they are counted in bits through their decoding neighbour, see
    :meth:`Constellation.symbols_to_bits`.
    """
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    Constellation(order)
    rng = np.random.default_rng(seed)
    return rng.integers(0, order, size=length, dtype=np.int64)


@dataclass(frozen=True)
class BerReport:
    symbols: int
    symbol_errors: int
    bits: int
    bit_errors: int
    order: int
    N1: int = 0
    N2: int = 0
    N3: int = 0
    mult_count: int = 0

    @property
    def ser(self) -> float:
        return self.symbol_errors / self.symbols if self.symbols else float("nan")

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")


def count_errors(tx_symbols, rx_decisions, order: int) -> BerReport:
    """Symbol and bit errors between aligned index sequences."""
    tx = np.asarray(tx_symbols, dtype=np.int64)
    rx = np.asarray(rx_decisions, dtype=np.int64)
    if tx.shape != rx.shape:
        raise ValueError(f"length mismatch: {tx.shape} vs {rx.shape}")
    const = Constellation(order)
    tx_bits = const.symbols_to_bits(tx)
    rx_bits = const.symbols_to_bits(rx)
    return BerReport(
        symbols=len(tx),
        symbol_errors=int(np.count_nonzero(tx != rx)),
        bits=len(tx_bits),
        bit_errors=int(np.count_nonzero(tx_bits != rx_bits)),
        order=order,
    )
