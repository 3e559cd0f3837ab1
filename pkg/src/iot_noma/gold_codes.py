"""Gold spreading codes built from LFSR m-sequences.

Chips are bipolar int8 values: binary 1 maps to +1 and binary 0 to -1, so an
m-sequence sums to +1. Family members are formed by XOR in the binary domain
before mapping, which keeps cross-correlations identical under either
bipolar convention.

Polynomials are integer masks with bit k set for the x^k term, e.g.
``0x89`` is x^7 + x^3 + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Preferred pairs, verified exhaustively at construction time.
PREFERRED_PAIRS = {
    5: (0x25, 0x3D),  # x^5+x^2+1, x^5+x^4+x^3+x^2+1
    7: (0x89, 0x8F),  # x^7+x^3+1, x^7+x^3+x^2+x+1
}


def gold_t(degree: int) -> int:
    """Peak correlation parameter t(n) of a degree-n Gold family."""
    if degree % 2:
        return 1 + 2 ** ((degree + 1) // 2)
    return 1 + 2 ** ((degree + 2) // 2)


@dataclass(frozen=True)
class MSequence:
    chips: np.ndarray
    degree: int
    taps: int

    @property
    def length(self) -> int:
        return self.chips.size

    @property
    def bits(self) -> np.ndarray:
        return ((self.chips + 1) // 2).astype(np.int8)


def generate_m_sequence(degree: int, taps: int, seed_state: int = 1) -> MSequence:
    """Run a Fibonacci LFSR for one full period.

    The output obeys ``s[t+n] = XOR_k taps_k * s[t+k]`` for k < n, so ``taps``
    is the characteristic polynomial. ``seed_state`` supplies the first n
    output bits (bit k is s[k]).

    Raises:
        ValueError: if the polynomial is not primitive, reported via the
            observed period.
    """
    if degree < 2:
        raise ValueError(f"degree must be >= 2, got {degree}")
    if not (taps >> degree) & 1 or not taps & 1 or taps >> (degree + 1):
        raise ValueError(f"taps {taps:#x} is not a degree-{degree} polynomial with constant term")
    mask = (1 << degree) - 1
    seed_state &= mask
    if seed_state == 0:
        raise ValueError("seed_state must be nonzero")

    length = (1 << degree) - 1
    feedback_mask = taps & mask
    state = seed_state  # bit k holds s[t+k]
    bits = np.empty(length, dtype=np.int8)
    period = None
    for t in range(length):
        bits[t] = state & 1
        fb = bin(state & feedback_mask).count("1") & 1
        state = (state >> 1) | (fb << (degree - 1))
        if state == seed_state:
            period = t + 1
            break
    if period != length:
        raise ValueError(
            f"taps {taps:#x} are not primitive: observed period {period}, expected {length}"
        )
    return MSequence(chips=(2 * bits - 1).astype(np.int8), degree=degree, taps=taps)


def _as_int(code: np.ndarray) -> np.ndarray:
    return np.asarray(code, dtype=np.int64)


def raw_cross_correlation(a: np.ndarray, b: np.ndarray, shift: int) -> int:
    """Unnormalized periodic correlation sum_l a[l] * b[(l + shift) mod L]."""
    a = _as_int(a)
    b = _as_int(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(a @ np.roll(b, -(shift % a.size)))


def cross_correlation(a: np.ndarray, b: np.ndarray, shift: int = 0) -> float:
    """Normalized periodic cross-correlation, in [-1, 1]."""
    return raw_cross_correlation(a, b, shift) / len(a)


def all_shift_correlations(codes: np.ndarray) -> np.ndarray:
    """Integer correlations for every ordered pair and every cyclic shift.

    Returns an array ``R`` of shape (M, M, L) with
    ``R[i, j, k] = sum_l codes[i, l] * codes[j, (l + k) mod L]``.
    """
    codes = _as_int(codes)
    m, length = codes.shape
    idx = (np.arange(length)[:, None] + np.arange(length)[None, :]) % length
    shifted = codes[:, idx]  # (M, L shifts, L chips)
    r = codes @ shifted.reshape(m * length, length).T
    return r.reshape(m, m, length)


def effective_rho(a: np.ndarray, b: np.ndarray, max_misalignment: int = 2) -> float:
    """Worst |correlation| over shifts in [-max_misalignment, +max_misalignment]."""
    if max_misalignment < 0:
        raise ValueError("max_misalignment must be >= 0")
    a = _as_int(a)
    return max(
        abs(raw_cross_correlation(a, b, s))
        for s in range(-max_misalignment, max_misalignment + 1)
    ) / a.size


def effective_rho_matrix(codes: np.ndarray, max_misalignment: int = 2) -> np.ndarray:
    """Pairwise effective_rho for a stack of codes (symmetric, unit diagonal)."""
    if max_misalignment < 0:
        raise ValueError("max_misalignment must be >= 0")
    codes = _as_int(codes)
    length = codes.shape[1]
    peak = np.zeros((codes.shape[0], codes.shape[0]), dtype=np.int64)
    for s in range(-max_misalignment, max_misalignment + 1):
        peak = np.maximum(peak, np.abs(codes @ np.roll(codes, -s, axis=1).T))
    # shift -s for (a,b) equals shift +s for (b,a), so the window max is symmetric
    return peak / length


@dataclass(frozen=True)
class GoldCodeFamily:
    codes: np.ndarray  # (2^n + 1, L) int8
    degree: int
    preferred_pair: tuple[MSequence, MSequence]
    t_n: int

    @property
    def length(self) -> int:
        return self.codes.shape[1]

    @property
    def size(self) -> int:
        return self.codes.shape[0]

    def allowed_values(self) -> tuple[int, int, int]:
        """Integer cross-correlation values (times L) allowed between members."""
        return (-1, -self.t_n, self.t_n - 2)

    def correlation_histogram(self) -> dict[int, int]:
        """Counts of integer cross-correlation values over distinct pairs and all shifts."""
        r = all_shift_correlations(self.codes)
        off = ~np.eye(self.size, dtype=bool)
        values, counts = np.unique(r[off], return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def check_three_valued(codes: np.ndarray, t_n: int) -> None:
    """Raise ValueError unless every distinct-pair correlation lies in {-1, -t, t-2}."""
    r = all_shift_correlations(codes)
    off = ~np.eye(codes.shape[0], dtype=bool)
    vals = r[off]
    bad = ~np.isin(vals, (-1, -t_n, t_n - 2))
    if bad.any():
        v = int(vals[bad][0])
        raise ValueError(
            f"not a preferred pair: correlation {v}/{codes.shape[1]} outside "
            f"{{-1, {-t_n}, {t_n - 2}}}/{codes.shape[1]}"
        )


def generate_gold_family(pair: tuple[MSequence, MSequence]) -> GoldCodeFamily:
    """Build {u, v, u xor shift_k(v) : k = 0..L-1} and prove it three-valued."""
    u, v = pair
    if u.degree != v.degree:
        raise ValueError(f"degree mismatch: {u.degree} vs {v.degree}")
    ub, vb = u.bits, v.bits
    length = ub.size
    members = [ub, vb] + [ub ^ np.roll(vb, -k) for k in range(length)]
    codes = (2 * np.stack(members) - 1).astype(np.int8)
    t_n = gold_t(u.degree)
    check_three_valued(codes, t_n)
    return GoldCodeFamily(codes=codes, degree=u.degree, preferred_pair=(u, v), t_n=t_n)


def default_family(degree: int = 7) -> GoldCodeFamily:
    try:
        p1, p2 = PREFERRED_PAIRS[degree]
    except KeyError:
        raise ValueError(f"no default preferred pair for degree {degree}") from None
    return generate_gold_family((generate_m_sequence(degree, p1), generate_m_sequence(degree, p2)))


@dataclass(frozen=True)
class Codebook:
    selected: tuple[int, ...]
    rho: np.ndarray
    codes: np.ndarray = field(repr=False)
    max_misalignment: int = 2

    @property
    def size(self) -> int:
        return len(self.selected)

    @property
    def rho_avg(self) -> np.ndarray:
        c = self.size
        if c == 1:
            return np.zeros(1)
        return (self.rho.sum(axis=1) - np.diag(self.rho)) / (c - 1)

    def mean_offdiag(self) -> float:
        c = self.size
        if c == 1:
            return 0.0
        return float((self.rho.sum() - np.trace(self.rho)) / (c * (c - 1)))


def _greedy_order(rho: np.ndarray, count: int) -> list[int]:
    chosen = [0]  # empty set: every candidate ties, lowest index wins
    remaining = np.ones(rho.shape[0], dtype=bool)
    remaining[0] = False
    total = rho[:, 0].copy()
    while len(chosen) < count:
        score = np.where(remaining, total, np.inf)
        # argmin returns the first (lowest-index) minimum
        nxt = int(np.argmin(score))
        chosen.append(nxt)
        remaining[nxt] = False
        total += rho[:, nxt]
    return chosen


def select_codebook(
    family: GoldCodeFamily,
    count: int,
    strategy: str = "greedy",
    max_misalignment: int = 2,
) -> Codebook:
    """Pick ``count`` codes and precompute their effective correlation matrix.

    ``strategy`` is ``"first"`` (lowest indices) or ``"greedy"`` (repeatedly add
    the code with the smallest mean correlation to those already chosen).
    """
    if count < 1 or count > family.size:
        raise ValueError(f"codebook size {count} outside [1, {family.size}]")
    if strategy == "first":
        selected = list(range(count))
    elif strategy == "greedy":
        full = effective_rho_matrix(family.codes, max_misalignment)
        selected = _greedy_order(full, count)
    else:
        raise ValueError(f"unknown codebook strategy {strategy!r}")
    codes = family.codes[selected]
    rho = effective_rho_matrix(codes, max_misalignment)
    return Codebook(
        selected=tuple(selected), rho=rho, codes=codes, max_misalignment=max_misalignment
    )


def build_codebook(
    degree: int = 7, count: int = 80, strategy: str = "greedy", max_misalignment: int = 2
) -> Codebook:
    return select_codebook(default_family(degree), count, strategy, max_misalignment)


def codebook_rows(codebook: Codebook) -> list[Sequence[int]]:
    """CSV rows: family index followed by the chips as +-1 integers."""
    return [[idx, *map(int, chips)] for idx, chips in zip(codebook.selected, codebook.codes)]
