"""Pure-Python kernels.  ``_ckernels.pyx`` mirrors these line for line."""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def faulty_position_histogram(masks1, masks2, n):
    """counts[k] = number of (a, b) in masks1 x masks2 with popcount(a | b) == k."""
    counts = [0] * (n + 1)
    for a in masks1:
        for b in masks2:
            counts[bin(a | b).count("1")] += 1
    return counts


def sample_pcs_steps(faulty1, faulty2, trials, seed, max_iters):
    """Steps until a uniformly drawn pair (with replacement) has no faulty end.

    A trial that exhausts ``max_iters`` reports ``max_iters + 1``.
    """
    n1 = len(faulty1)
    n2 = len(faulty2)
    rng = SplitMix64(seed)
    out = []
    for _ in range(trials):
        steps = 0
        while True:
            steps += 1
            a = rng.next() % n1
            b = rng.next() % n2
            if not faulty1[a] and not faulty2[b]:
                break
            if steps >= max_iters:
                steps = max_iters + 1
                break
        out.append(steps)
    return out


def sample_plcs_steps(faulty1, faulty2, trials, seed):
    """Steps until the first non-faulty position of a random permutation pair."""
    n = len(faulty1)
    rng = SplitMix64(seed)
    out = []
    for _ in range(trials):
        p1 = list(range(n))
        p2 = list(range(n))
        for i in range(n - 1, 0, -1):
            j = rng.next() % (i + 1)
            p1[i], p1[j] = p1[j], p1[i]
        for i in range(n - 1, 0, -1):
            j = rng.next() % (i + 1)
            p2[i], p2[j] = p2[j], p2[i]
        steps = n + 1
        for i in range(n):
            if not faulty1[p1[i]] and not faulty2[p2[i]]:
                steps = i + 1
                break
        out.append(steps)
    return out
