"""Exact combinatorics of faulty positions and expected step counts.

Every quantity is an ``int`` or a :class:`fractions.Fraction`; floats only
appear when values are formatted for output.

Terminology: for two equal-length replica lists with ``m1`` and ``m2``
faulty entries, a *faulty position* is an index where either list holds a
faulty replica.  ``FC(n, m1, m2, k)`` counts the permutation pairs with
exactly ``k`` faulty positions and ``PT(n, m1, m2)`` is the expected number
of uniform (with replacement) position inspections needed to hit a
non-faulty position of a uniformly random permutation pair.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

from . import kernels

Rational = Fraction

#: exhaustive enumeration over n!^2 permutation pairs is refused above this n
BRUTEFORCE_MAX_N = 6


class DomainError(ValueError):
    pass


def list_merge_count(v: int, w: int) -> int:
    """Number of interleavings of two disjoint lists of lengths v and w."""
    if v < 0 or w < 0:
        raise DomainError("list lengths must be non-negative")
    return factorial(v + w) // (factorial(v) * factorial(w))


@lru_cache(maxsize=None)
def list_merge_recursive(v: int, w: int) -> int:
    # take the head of either list first
    if v == 0 or w == 0:
        return 1
    return list_merge_recursive(v - 1, w) + list_merge_recursive(v, w - 1)


def feasible_k(n: int, m1: int, m2: int) -> range:
    return range(max(m1, m2), min(n, m1 + m2) + 1)


@lru_cache(maxsize=None)
def fc_recursive(n: int, m1: int, m2: int, k: int) -> int:
    """FC by case analysis on the pair placed at position 0."""
    if m1 < 0 or m2 < 0 or m1 > n or m2 > n:
        return 0
    if k < max(m1, m2) or k > min(n, m1 + m2):
        return 0
    if n == 0:
        return 1
    return (
        (n - m1) * (n - m2) * fc_recursive(n - 1, m1, m2, k)
        + m1 * (n - m2) * fc_recursive(n - 1, m1 - 1, m2, k - 1)
        + (n - m1) * m2 * fc_recursive(n - 1, m1, m2 - 1, k - 1)
        + m1 * m2 * fc_recursive(n - 1, m1 - 1, m2 - 1, k - 1)
    )


@dataclass(frozen=True)
class PairTypeCounts:
    b1: int
    b2: int
    b12: int
    good: int

    @property
    def total(self) -> int:
        return self.b1 + self.b2 + self.b12 + self.good


def pair_type_counts(n: int, m1: int, m2: int, k: int) -> PairTypeCounts:
    """Split k faulty positions into 1-faulty, 2-faulty and both-faulty pairs."""
    if not (0 <= m1 <= n and 0 <= m2 <= n):
        raise DomainError(f"need 0 <= m1, m2 <= n, got n={n}, m1={m1}, m2={m2}")
    if k not in feasible_k(n, m1, m2):
        raise DomainError(f"k={k} infeasible for n={n}, m1={m1}, m2={m2}")
    return PairTypeCounts(b1=k - m2, b2=k - m1, b12=m1 + m2 - k, good=n - k)


def fc_closed(n: int, m1: int, m2: int, k: int) -> int:
    t = pair_type_counts(n, m1, m2, k)
    num = factorial(m1) * factorial(m2) * factorial(n - m1) * factorial(n - m2) * factorial(n)
    den = factorial(t.b1) * factorial(t.b2) * factorial(t.b12) * factorial(t.good)
    q, r = divmod(num, den)
    assert r == 0
    return q


def fc_product(n: int, m1: int, m2: int, k: int) -> int:
    """FC assembled from its construction: choose and order the 1-faulty,
    2-faulty, both-faulty and non-faulty pair lists, then merge them."""
    t = pair_type_counts(n, m1, m2, k)
    b1, b2, b12, good = t.b1, t.b2, t.b12, t.good
    lists_1 = factorial(b1) ** 2 * comb(m1, b1) * comb(n - m2, b1)
    lists_2 = factorial(b2) ** 2 * comb(n - m1, b2) * comb(m2, b2)
    return (
        lists_1
        * lists_2
        * list_merge_count(b1, b2)
        * factorial(b12) ** 2
        * list_merge_count(b1 + b2, b12)
        * factorial(good) ** 2
        * list_merge_count(k, good)
    )


def _check_pt_domain(n: int, m1: int, m2: int) -> None:
    if n < 1 or m1 < 0 or m2 < 0:
        raise DomainError(f"need n >= 1 and m1, m2 >= 0, got ({n}, {m1}, {m2})")
    if m1 + m2 >= n:
        raise DomainError(
            f"m1 + m2 = {m1 + m2} >= n = {n}: some permutation pair has no "
            "non-faulty position, so the expectation is unbounded"
        )


def pt_exact(n: int, m1: int, m2: int) -> Fraction:
    _check_pt_domain(n, m1, m2)
    total = sum(
        Fraction(n, n - k) * fc_closed(n, m1, m2, k) for k in range(max(m1, m2), m1 + m2 + 1)
    )
    return total / factorial(n) ** 2


def pt_equal_half(f: int) -> Fraction:
    """PT(2f+1, f, f) in closed form."""
    if f < 0:
        raise DomainError("f must be non-negative")
    return 4 - Fraction(2, f + 1) - Fraction(factorial(f) ** 2, factorial(2 * f))


def plcs_expected_steps(n: int, m1: int, m2: int) -> Fraction:
    """Exact mean step count of sequential inspection of a random permutation pair.

    With k faulty positions in random order, the first non-faulty position
    is expected at index (n + 1) / (n - k + 1) (1-based).  Always <= PT.
    """
    _check_pt_domain(n, m1, m2)
    total = sum(
        Fraction(n + 1, n - k + 1) * fc_closed(n, m1, m2, k)
        for k in range(max(m1, m2), m1 + m2 + 1)
    )
    return total / factorial(n) ** 2


def pcs_expected_steps(n1: int, f1: int, n2: int, f2: int) -> Fraction:
    if not (0 <= f1 < n1 and 0 <= f2 < n2):
        raise DomainError(f"need 0 <= f < n on both sides, got ({n1}, {f1}, {n2}, {f2})")
    return Fraction(n1 * n2, (n1 - f1) * (n2 - f2))


@dataclass(frozen=True)
class ListPair:
    p1: tuple
    p2: tuple
    faulty1: tuple
    faulty2: tuple

    def __post_init__(self) -> None:
        if not (len(self.p1) == len(self.p2) == len(self.faulty1) == len(self.faulty2)):
            raise DomainError("list pair components must have equal length")

    @property
    def n(self) -> int:
        return len(self.p1)

    @property
    def f1(self) -> int:
        return sum(map(bool, self.faulty1))

    @property
    def f2(self) -> int:
        return sum(map(bool, self.faulty2))


def faulty_positions(pair: ListPair) -> int:
    return sum(1 for a, b in zip(pair.faulty1, pair.faulty2) if a or b)


def permutation_masks(n: int, m: int) -> list[int]:
    """Faulty-position bitmask of every permutation of a list with m faulty entries.

    Entries 0..m-1 are the faulty ones; one mask per permutation (n! total).
    """
    masks = []
    for perm in itertools.permutations(range(n)):
        mask = 0
        for pos, item in enumerate(perm):
            if item < m:
                mask |= 1 << pos
        masks.append(mask)
    return masks


def faulty_position_distribution(n: int, m1: int, m2: int) -> list[int]:
    """Count permutation pairs per number of faulty positions, by enumeration."""
    if n > BRUTEFORCE_MAX_N:
        raise DomainError(f"refusing to enumerate {n}!^2 permutation pairs (n > {BRUTEFORCE_MAX_N})")
    return kernels.faulty_position_histogram(permutation_masks(n, m1), permutation_masks(n, m2), n)


def pt_bruteforce(n: int, m1: int, m2: int) -> Fraction:
    _check_pt_domain(n, m1, m2)
    counts = faulty_position_distribution(n, m1, m2)
    total = sum(Fraction(n * c, n - k) for k, c in enumerate(counts) if c)
    return total / factorial(n) ** 2


def plcs_expected_bruteforce(n: int, m1: int, m2: int) -> Fraction:
    """Mean 1-based index of the first non-faulty position over all pairs."""
    _check_pt_domain(n, m1, m2)
    if n > BRUTEFORCE_MAX_N:
        raise DomainError(f"refusing to enumerate {n}!^2 permutation pairs (n > {BRUTEFORCE_MAX_N})")
    masks1 = permutation_masks(n, m1)
    masks2 = permutation_masks(n, m2)
    total = 0
    for a in masks1:
        for b in masks2:
            bad = a | b
            i = 0
            while bad >> i & 1:
                i += 1
            total += i + 1
    return Fraction(total, len(masks1) * len(masks2))


@dataclass(frozen=True)
class ReferenceCurves:
    pbs_cs: int
    pbs_cs_3f: int
    geobft_opt: int
    chainspace: int
    pcs_expected: Fraction
    plcs_expected_equal_half: Fraction | None

    def as_dict(self) -> dict:
        return {
            "pbs_cs": self.pbs_cs,
            "pbs_cs_3f": self.pbs_cs_3f,
            "geobft_opt": self.geobft_opt,
            "chainspace": self.chainspace,
            "pcs_expected": self.pcs_expected,
            "plcs_expected_equal_half": self.plcs_expected_equal_half,
        }


def reference_curves(n1: int, f1: int, n2: int, f2: int) -> ReferenceCurves:
    """Step counts of the compared protocols for the given cluster sizes."""
    equal_half = None
    if n1 == n2 and f1 == f2 and n1 == 2 * f1 + 1:
        equal_half = pt_equal_half(f1)
    return ReferenceCurves(
        pbs_cs=f1 + f2 + 1,
        pbs_cs_3f=max(n1, n2),
        geobft_opt=f2 + 1,
        chainspace=n1 * n2,
        pcs_expected=pcs_expected_steps(n1, f1, n2, f2),
        plcs_expected_equal_half=equal_half,
    )


def fmt_decimal(x: Fraction | int, digits: int = 12) -> str:
    """Format with ``digits`` significant digits."""
    return f"{float(x):.{digits}g}"


def fmt_rational(x: Fraction | int) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def fc_table(n: int, m1: int, m2: int) -> dict[int, int]:
    return {k: fc_recursive(n, m1, m2, k) for k in feasible_k(n, m1, m2)}


def _flags(n: int, m: int) -> list[int]:
    return [1] * m + [0] * (n - m)


def sample_pcs(n1: int, f1: int, n2: int, f2: int, trials: int, seed: int = 0,
               max_iters: int = 10 ** 6) -> list[int]:
    """Step counts of the abstract Pcs process (uniform pairs with replacement)."""
    return kernels.sample_pcs_steps(_flags(n1, f1), _flags(n2, f2), trials, seed, max_iters)


def sample_plcs(n: int, m1: int, m2: int, trials: int, seed: int = 0) -> list[int]:
    """Step counts of sequential inspection of random permutation pairs."""
    _check_pt_domain(n, m1, m2)
    return kernels.sample_plcs_steps(_flags(n, m1), _flags(n, m2), trials, seed)
