"""Cluster-sending protocols on top of :mod:`clustersend.simnet`.

* :func:`cs_step` -- one attempt through a single sender/receiver pair.
* :func:`pcs` -- repeat uniformly random attempts (with replacement).
* :func:`ppcs` -- like ``pcs`` but never retries a pair that provably fails.
* :func:`plcs` -- walk one random permutation pair of two equal-length lists.
* :func:`async_drive` -- deadline-based driver for unreliable networks.

All random choices of the sending cluster come from its shared coin.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional

from .analysis import ListPair
from .core import (
    ClusterConfig,
    ConfigurationError,
    InvariantViolation,
    ProtocolMisuseError,
    ReplicaId,
)
from .simnet import Mode, SharedCoin, Simulation, TrialStats

#: pulses a synchronous cs-step needs: send, receive + reply, confirm
STEP_PULSES = 3


@dataclass(frozen=True)
class CsStepOutcome:
    success: bool
    messages_sent: int
    initiating_pair: tuple


def start_cs_step(sim: Simulation, r1: ReplicaId, r2: ReplicaId, value: bytes) -> None:
    if not sim.agreed(value) or sim.send_message is None or sim.send_message.value != bytes(value):
        raise ProtocolMisuseError("cs-step requires an agree decision on sending the value")
    if not (sim.c1.contains(r1) and sim.c2.contains(r2)):
        raise ConfigurationError(f"pair ({r1}, {r2}) does not span the two clusters")
    sim.stats.cs_steps += 1
    sim.instruct_send(r1, r2)


def cs_step(sim: Simulation, r1: ReplicaId, r2: ReplicaId, value: bytes) -> CsStepOutcome:
    """Run one cluster-sending step and wait out its three pulses."""
    before = sim.stats.inter_cluster_msgs
    start_cs_step(sim, r1, r2, value)
    for _ in range(STEP_PULSES):
        sim.advance_pulse()
    return CsStepOutcome(sim.confirmed(value), sim.stats.inter_cluster_msgs - before, (r1, r2))


def _require_sync(sim: Simulation, name: str) -> None:
    if sim.network.mode is not Mode.SYNC:
        raise ProtocolMisuseError(f"{name} waits on pulses and needs a synchronous network; use async_drive")


def default_max_iters(c1: ClusterConfig, c2: ClusterConfig) -> int:
    return 10 * (c1.f + 1) * (c2.f + 1)


def pcs(sim: Simulation, value: bytes, max_iters: Optional[int] = None) -> TrialStats:
    _require_sync(sim, "pcs")
    c1, c2 = sim.c1, sim.c2
    if max_iters is None:
        max_iters = default_max_iters(c1, c2)
    sim.agree(value)
    coin = sim.coin(c1.id)
    for _ in range(max_iters):
        r1 = c1.replica(coin.draw(c1.n))
        r2 = c2.replica(coin.draw(c2.n))
        if cs_step(sim, r1, r2, value).success:
            break
    return sim.finish()


# --------------------------------------------------------------------- pruning
def _coverable(edges: list, budget1: int, budget2: int) -> bool:
    """Can at most budget1 left and budget2 right endpoints cover every edge?"""
    if not edges:
        return True
    a, b = edges[0]
    if budget1 > 0 and _coverable([e for e in edges if e[0] != a], budget1 - 1, budget2):
        return True
    if budget2 > 0 and _coverable([e for e in edges if e[1] != b], budget1, budget2 - 1):
        return True
    return False


@dataclass
class PruneState:
    """What failed steps reveal about the two clusters under synchrony.

    Every failed pair has a faulty endpoint.  A replica that failed with
    ``f + 1`` distinct partners of the other cluster is faulty itself
    (``excluded_1`` / ``excluded_2``).  On top of that, a pair is only
    offered if some placement of at most ``f1`` and ``f2`` faulty replicas
    explains every failure while leaving both members of the pair non-faulty.
    """

    c1: ClusterConfig
    c2: ClusterConfig
    tried: set = field(default_factory=set)
    fail_partners_1: dict = field(default_factory=dict)
    fail_partners_2: dict = field(default_factory=dict)
    excluded_1: set = field(default_factory=set)
    excluded_2: set = field(default_factory=set)

    @property
    def fail_count_1(self) -> dict:
        return {r: len(s) for r, s in self.fail_partners_1.items()}

    @property
    def fail_count_2(self) -> dict:
        return {r: len(s) for r, s in self.fail_partners_2.items()}

    def record_failure(self, r1: ReplicaId, r2: ReplicaId) -> None:
        self.tried.add((r1, r2))
        p1 = self.fail_partners_1.setdefault(r1, set())
        p1.add(r2)
        if len(p1) >= self.c2.f + 1:
            self.excluded_1.add(r1)
        p2 = self.fail_partners_2.setdefault(r2, set())
        p2.add(r1)
        if len(p2) >= self.c1.f + 1:
            self.excluded_2.add(r2)

    def viable(self, r1: ReplicaId, r2: ReplicaId) -> bool:
        if (r1, r2) in self.tried or r1 in self.excluded_1 or r2 in self.excluded_2:
            return False
        forced_2 = self.fail_partners_1.get(r1, ())
        forced_1 = self.fail_partners_2.get(r2, ())
        budget1 = self.c1.f - len(forced_1)
        budget2 = self.c2.f - len(forced_2)
        if budget1 < 0 or budget2 < 0:
            return False
        rest = [(a, b) for (a, b) in self.tried if a not in forced_1 and b not in forced_2]
        return _coverable(rest, budget1, budget2)

    def candidates(self) -> list:
        c2_members = [b for b in self.c2.members if b not in self.excluded_2]
        return [
            (a, b)
            for a in self.c1.members
            if a not in self.excluded_1
            for b in c2_members
            if self.viable(a, b)
        ]

    def copy(self) -> "PruneState":
        new = PruneState(self.c1, self.c2)
        for pair in sorted(self.tried):
            new.record_failure(*pair)
        return new

    def is_sound(self) -> bool:
        """Under synchrony nothing non-faulty may be pruned."""
        if not self.excluded_1 <= self.c1.faulty or not self.excluded_2 <= self.c2.faulty:
            return False
        for a in self.c1.nonfaulty:
            for b in self.c2.nonfaulty:
                if not self.viable(a, b):
                    return False
        return True


def ppcs(sim: Simulation, value: bytes, max_iters: Optional[int] = None,
         prune: Optional[PruneState] = None) -> TrialStats:
    _require_sync(sim, "ppcs")
    c1, c2 = sim.c1, sim.c2
    if max_iters is None:
        max_iters = default_max_iters(c1, c2)
    state = prune if prune is not None else PruneState(c1, c2)
    sim.agree(value)
    coin = sim.coin(c1.id)
    for _ in range(max_iters):
        cands = state.candidates()
        if not cands:
            raise InvariantViolation("ppcs pruned every replica pair")
        r1, r2 = cands[coin.draw(len(cands))]
        if cs_step(sim, r1, r2, value).success:
            break
        state.record_failure(r1, r2)
    return sim.finish()


def _canonical_key(tried: set, c1: ClusterConfig, c2: ClusterConfig, perms1: list, perms2: list) -> tuple:
    """Failure graph up to renaming replicas inside each (cluster, faultiness) class.

    Non-faulty replicas of one cluster are interchangeable, so they are kept
    as a sorted multiset of neighbourhoods; faulty replicas are few, so every
    renaming of them is tried and the smallest encoding wins.
    """
    best = None
    for pi1 in perms1:
        for pi2 in perms2:
            ff = []
            nb1: dict = {}
            nb2: dict = {}
            for a, b in tried:
                fa, fb = a in pi1, b in pi2
                if fa and fb:
                    ff.append((pi1[a], pi2[b]))
                elif fa:
                    nb2.setdefault(b, []).append(pi1[a])
                else:
                    nb1.setdefault(a, []).append(pi2[b])
            key = (
                tuple(sorted(ff)),
                tuple(sorted(tuple(sorted(v)) for v in nb1.values())),
                tuple(sorted(tuple(sorted(v)) for v in nb2.values())),
            )
            if best is None or key < best:
                best = key
    return best


def ppcs_worst_case(c1: ClusterConfig, c2: ClusterConfig) -> int:
    """Largest step count over every possible sequence of ppcs choices.

    A step fails iff one of its endpoints is faulty (the adversary makes
    every faulty endpoint fail).  Exhaustive over all candidate orders;
    states equal up to renaming replicas of the same kind share one entry.
    Every reached state is checked to never prune a non-faulty pair.
    """
    perms1 = [dict(zip(p, range(len(p)))) for p in itertools.permutations(sorted(c1.faulty))]
    perms2 = [dict(zip(p, range(len(p)))) for p in itertools.permutations(sorted(c2.faulty))]
    memo: dict = {}

    def worst(state: PruneState) -> int:
        key = _canonical_key(state.tried, c1, c2, perms1, perms2)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if not state.is_sound():
            raise InvariantViolation(f"pruning excluded a non-faulty pair after {sorted(state.tried)}")
        cands = state.candidates()
        if not cands:
            raise InvariantViolation("ppcs pruned every replica pair")
        best = 0
        for a, b in cands:
            if not c1.is_faulty(a) and not c2.is_faulty(b):
                best = max(best, 1)
                continue
            child = state.copy()
            child.record_failure(a, b)
            best = max(best, 1 + worst(child))
        memo[key] = best
        return best

    return worst(PruneState(c1, c2))


# -------------------------------------------------------------- list-pair runs
class ListPairFunction(enum.Enum):
    SF_MIN = "min"
    SF_MAX = "max"


def repeat(n: int, items: list) -> list:
    """The first n entries of ``items`` repeated cyclically."""
    return [items[i % len(items)] for i in range(n)]


def sf_min(c1: ClusterConfig, c2: ClusterConfig) -> tuple[list, list]:
    n = min(c1.n, c2.n)
    return repeat(n, c1.members), repeat(n, c2.members)


def sf_max(c1: ClusterConfig, c2: ClusterConfig) -> tuple[list, list]:
    n = max(c1.n, c2.n)
    return repeat(n, c1.members), repeat(n, c2.members)


def list_pair(sf: ListPairFunction, c1: ClusterConfig, c2: ClusterConfig) -> tuple[list, list]:
    return sf_min(c1, c2) if sf is ListPairFunction.SF_MIN else sf_max(c1, c2)


def random_permutation_pair(s1: list, s2: list, coin: SharedCoin,
                            faulty: frozenset = frozenset()) -> ListPair:
    if len(s1) != len(s2):
        raise ConfigurationError(f"list lengths differ: {len(s1)} != {len(s2)}")
    p1 = coin.shuffle(s1)
    p2 = coin.shuffle(s2)
    return ListPair(tuple(p1), tuple(p2), tuple(r in faulty for r in p1), tuple(r in faulty for r in p2))


def list_faults(s: list, cluster: ClusterConfig) -> int:
    return sum(1 for r in s if cluster.is_faulty(r))


def check_plcs_robust(c1: ClusterConfig, c2: ClusterConfig, sf: ListPairFunction) -> tuple[list, list]:
    s1, s2 = list_pair(sf, c1, c2)
    m1, m2 = list_faults(s1, c1), list_faults(s2, c2)
    if len(s1) <= m1 + m2:
        raise ConfigurationError(
            f"list pair of length {len(s1)} holds {m1} + {m2} faulty entries; "
            "a non-faulty position is not guaranteed"
        )
    return s1, s2


def plcs(sim: Simulation, value: bytes, sf: ListPairFunction = ListPairFunction.SF_MIN) -> TrialStats:
    _require_sync(sim, "plcs")
    c1, c2 = sim.c1, sim.c2
    s1, s2 = check_plcs_robust(c1, c2, sf)
    sim.agree(value)
    pair = random_permutation_pair(s1, s2, sim.coin(c1.id), c1.faulty | c2.faulty)
    for r1, r2 in zip(pair.p1, pair.p2):
        if cs_step(sim, r1, r2, value).success:
            return sim.finish()
    raise InvariantViolation("plcs exhausted its list pair without confirmation")


# ------------------------------------------------------------------ asynchrony
class Protocol(enum.Enum):
    PCS = "pcs"
    PPCS = "ppcs"
    PLCS_MIN = "plcs-min"
    PLCS_MAX = "plcs-max"


class _PairSource:
    def __init__(self, protocol: Protocol, sim: Simulation) -> None:
        self.protocol = protocol
        self.sim = sim
        self.coin = sim.coin(sim.c1.id)
        self.prune = PruneState(sim.c1, sim.c2)
        self.queue: list = []
        if protocol in (Protocol.PLCS_MIN, Protocol.PLCS_MAX):
            sf = ListPairFunction.SF_MIN if protocol is Protocol.PLCS_MIN else ListPairFunction.SF_MAX
            self.lists = list_pair(sf, sim.c1, sim.c2)

    def next(self) -> tuple:
        c1, c2 = self.sim.c1, self.sim.c2
        if self.protocol is Protocol.PCS:
            return c1.replica(self.coin.draw(c1.n)), c2.replica(self.coin.draw(c2.n))
        if self.protocol is Protocol.PPCS:
            cands = self.prune.candidates()
            if not cands:
                # timeouts on an unreliable link prove nothing; start over
                self.sim.log("prune:reset")
                self.prune = PruneState(c1, c2)
                cands = self.prune.candidates()
            return cands[self.coin.draw(len(cands))]
        if not self.queue:
            pair = random_permutation_pair(*self.lists, self.coin)
            self.queue = list(zip(pair.p1, pair.p2))
        return self.queue.pop(0)

    def failed(self, pair: tuple) -> None:
        if self.protocol is Protocol.PPCS:
            self.prune.record_failure(*pair)


def async_drive(sim: Simulation, protocol: Protocol, value: bytes, delta: int = 4,
                parallel_rounds: int = 1, max_pulses: Optional[int] = None) -> TrialStats:
    """Keep starting cs-steps until the sending cluster confirms.

    Step ``i`` (0-based) is given until ``delta * 2**i`` pulses after the
    agree decision; ``parallel_rounds`` steps start together, and each
    expired deadline starts the next step.  A late proof still confirms.
    """
    if delta < 1 or parallel_rounds < 1:
        raise ConfigurationError("delta and parallel_rounds must be positive")
    if protocol in (Protocol.PLCS_MIN, Protocol.PLCS_MAX):
        sf = ListPairFunction.SF_MIN if protocol is Protocol.PLCS_MIN else ListPairFunction.SF_MAX
        check_plcs_robust(sim.c1, sim.c2, sf)
    limit = max_pulses if max_pulses is not None else sim.max_pulses
    sim.agree(value)
    t0 = sim.pulse
    source = _PairSource(protocol, sim)
    outstanding: list = []
    index = 0

    def launch() -> None:
        nonlocal index
        r1, r2 = source.next()
        deadline = t0 + delta * 2 ** index
        sim.log(f"step:{index}:deadline:{deadline}", str(r1), str(r2))
        start_cs_step(sim, r1, r2, value)
        outstanding.append((deadline, (r1, r2)))
        index += 1

    for _ in range(parallel_rounds):
        launch()
    confirmed = sim.confirmed
    while not confirmed():
        deadline, pair = outstanding[0]
        target = deadline if limit is None else min(deadline, limit)
        sim.run_until(target, stop=confirmed)
        if confirmed() or (limit is not None and sim.pulse >= limit):
            break
        outstanding.pop(0)
        source.failed(pair)
        launch()
    return sim.finish()


def run_protocol(sim: Simulation, protocol: Protocol, value: bytes,
                 max_iters: Optional[int] = None) -> TrialStats:
    """Synchronous entry point used by the harness."""
    if protocol is Protocol.PCS:
        return pcs(sim, value, max_iters)
    if protocol is Protocol.PPCS:
        return ppcs(sim, value, max_iters)
    if protocol is Protocol.PLCS_MIN:
        return plcs(sim, value, ListPairFunction.SF_MIN)
    return plcs(sim, value, ListPairFunction.SF_MAX)
