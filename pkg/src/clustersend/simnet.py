"""Deterministic pulse-driven simulation of two clusters and the link between them.

Timeline of one pulse ``p``: drivers act (instruct senders), handlers of
messages delivered during ``p - 1`` have already run, and every message
sent during ``p`` whose sampled delay is ``d`` is delivered at the end of
pulse ``p + d``.  Synchronous mode always uses ``d = 0``, so a message sent
in a pulse is received in that pulse and handled at the start of the next.
Local consensus is atomic and free of network traffic.

All randomness is derived from the run seed: one shared coin per cluster,
one generator for the network and one for the adversary.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional

from .core import (
    ClusterConfig,
    ClusterState,
    ConfigurationError,
    MessageKind,
    ProtocolMessage,
    ProtocolMisuseError,
    ReplicaId,
    digest,
    make_proof,
    make_send,
    proof_payload,
    send_payload,
    verify_certificate,
)


def derive_seed(seed: int, *labels: str) -> int:
    text = "|".join([str(seed), *labels]).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "big")


class Mode(enum.Enum):
    SYNC = "sync"
    ASYNC = "async"


@dataclass(frozen=True)
class NetworkConfig:
    """Inter-cluster link behaviour.

    ``reliability_schedule`` holds ``(start, end, drop_prob)`` phases over
    half-open pulse intervals; outside every phase ``drop_prob`` applies.
    Delays are uniform over ``0..delay_max`` pulses.
    """

    mode: Mode = Mode.SYNC
    drop_prob: float = 0.0
    dup_prob: float = 0.0
    delay_max: int = 4
    reliability_schedule: tuple = ()

    def __post_init__(self) -> None:
        if self.mode is Mode.SYNC:
            object.__setattr__(self, "drop_prob", 0.0)
            object.__setattr__(self, "dup_prob", 0.0)
            object.__setattr__(self, "delay_max", 0)
            object.__setattr__(self, "reliability_schedule", ())
        for p in (self.drop_prob, self.dup_prob):
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"probability {p} outside [0, 1]")
        if self.delay_max < 0:
            raise ConfigurationError("delay_max must be non-negative")
        phases = tuple(tuple(ph) for ph in self.reliability_schedule)
        for start, end, p in phases:
            if start > end or not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"bad reliability phase {(start, end, p)}")
        object.__setattr__(self, "reliability_schedule", phases)

    def drop_at(self, pulse: int) -> float:
        for start, end, p in self.reliability_schedule:
            if start <= pulse < end:
                return p
        return self.drop_prob

    def label(self) -> str:
        if self.mode is Mode.SYNC:
            return "sync"
        return f"async(drop={self.drop_prob:g};dup={self.dup_prob:g};delay<={self.delay_max})"


SYNC = NetworkConfig()


class AdversaryKind(enum.Enum):
    SILENT = "silent"
    DROP_OUTBOUND = "drop-outbound"
    DROP_INBOUND = "drop-inbound"
    WORST_CASE = "worst-case"
    RANDOMIZED = "randomized"


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: AdversaryKind = AdversaryKind.WORST_CASE
    seed: int = 0
    honest_prob: float = 0.3
    inject_prob: float = 0.3


class Reaction(enum.Enum):
    HONEST = "honest"
    IGNORE = "ignore"
    CONSENSUS_ONLY = "consensus-only"


class Adversary:
    """Decisions of faulty replicas.  Never consulted for non-faulty ones."""

    _REACTIONS = (Reaction.HONEST, Reaction.IGNORE, Reaction.CONSENSUS_ONLY)

    def __init__(self, strategy: AdversaryStrategy, seed: int) -> None:
        self.strategy = strategy
        self.kind = strategy.kind
        self.rng = random.Random(derive_seed(seed, "adversary", str(strategy.seed)))

    def transmits_send(self) -> bool:
        if self.kind is AdversaryKind.DROP_INBOUND:
            return True
        if self.kind is AdversaryKind.RANDOMIZED:
            return self.rng.random() < self.strategy.honest_prob
        return False

    def on_send(self) -> Reaction:
        if self.kind is AdversaryKind.DROP_OUTBOUND:
            return Reaction.CONSENSUS_ONLY
        if self.kind is AdversaryKind.RANDOMIZED:
            if self.rng.random() < self.strategy.honest_prob:
                return Reaction.HONEST
            return self.rng.choice(self._REACTIONS[1:])
        return Reaction.IGNORE

    def on_proof(self) -> bool:
        if self.kind is AdversaryKind.RANDOMIZED:
            return self.rng.random() < self.strategy.honest_prob
        return False

    def injects(self) -> bool:
        return self.kind is AdversaryKind.RANDOMIZED and self.rng.random() < self.strategy.inject_prob


class SharedCoin:
    """Per-cluster common randomness.

    Every non-faulty replica of the cluster seeds the same generator, so
    :meth:`replica_view` reproduces exactly the draws of the cluster coin.
    """

    def __init__(self, seed: int, cluster: str) -> None:
        self.cluster = cluster
        self.seed = derive_seed(seed, "coin", cluster)
        self._rng = random.Random(self.seed)
        self.draws = 0

    def draw(self, bound: int) -> int:
        if bound < 1:
            raise ValueError("coin range must be positive")
        self.draws += 1
        return self._rng.randrange(bound)

    def shuffle(self, items: Iterable) -> list:
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.draw(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def replica_view(self) -> "SharedCoin":
        view = SharedCoin.__new__(SharedCoin)
        view.cluster = self.cluster
        view.seed = self.seed
        view._rng = random.Random(self.seed)
        view.draws = 0
        return view


def coin_draw(coin: SharedCoin, bound: int) -> int:
    return coin.draw(bound)


class TraceEvent(NamedTuple):
    pulse: int
    kind: str
    src: str
    dst: str
    digest: str


@dataclass
class TrialStats:
    cs_steps: int = 0
    inter_cluster_msgs: int = 0
    consensus_c1: int = 0
    consensus_c2: int = 0
    pulses: int = 0
    confirmed: bool = False
    adversary_msgs: int = 0


@dataclass
class Trace:
    events: list
    decisions: dict
    stats: TrialStats
    clusters: tuple = field(default=())

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"pulse": e.pulse, "kind": e.kind, "from": e.src, "to": e.dst, "digest": e.digest}) + "\n"
            for e in self.events
        )


class Simulation:
    """One run between cluster ``c1`` (sender side) and ``c2`` (receiver side)."""

    def __init__(
        self,
        c1: ClusterConfig,
        c2: ClusterConfig,
        network: NetworkConfig = SYNC,
        adversary: AdversaryStrategy = AdversaryStrategy(),
        seed: int = 0,
        record: bool = True,
        max_pulses: Optional[int] = None,
    ) -> None:
        if c1.id == c2.id:
            raise ConfigurationError("clusters must be disjoint")
        self.c1 = c1
        self.c2 = c2
        self.network = network
        self.seed = seed
        self.record = record
        self.max_pulses = max_pulses
        self.events: list = []
        log = self._log if record else None
        self.states = {c1.id: ClusterState(c1, log), c2.id: ClusterState(c2, log)}
        self.coins = {c1.id: SharedCoin(seed, c1.id), c2.id: SharedCoin(seed, c2.id)}
        self._net_rng = random.Random(derive_seed(seed, "network"))
        self.adversary = Adversary(adversary, seed)
        self.pulse = 0
        self.start_pulse = 0
        self.stats = TrialStats()
        self._queue: dict = {}
        self.value: Optional[bytes] = None
        self.send_message: Optional[ProtocolMessage] = None

    # ----------------------------------------------------------------- trace
    def _log(self, kind: str, src: str, dst: str, payload: bytes) -> None:
        self.events.append(TraceEvent(self.pulse, kind, src, dst, digest(payload)))

    def log(self, kind: str, src: str = "", dst: str = "", payload: bytes = b"") -> None:
        if self.record:
            self._log(kind, src, dst, payload)

    def config(self, cluster: str) -> ClusterConfig:
        return self.states[cluster].config

    def coin(self, cluster: str) -> SharedCoin:
        return self.coins[cluster]

    # --------------------------------------------------------------- network
    def send_inter_cluster(self, src: ReplicaId, dst: ReplicaId, msg: ProtocolMessage,
                           injected: bool = False) -> None:
        if src.cluster == dst.cluster:
            raise ConfigurationError("inter-cluster send within one cluster")
        if injected:
            self.stats.adversary_msgs += 1
        else:
            self.stats.inter_cluster_msgs += 1
        rec = self.record
        if rec:
            self._log("inject" if injected else "send:" + msg.kind.value, str(src), str(dst), msg.payload)
        net = self.network
        if net.mode is Mode.SYNC:
            self._enqueue(self.pulse, src, dst, msg)
            return
        rng = self._net_rng
        if rng.random() < net.drop_at(self.pulse):
            if rec:
                self._log("drop", str(src), str(dst), msg.payload)
            return
        copies = 2 if rng.random() < net.dup_prob else 1
        if copies == 2 and rec:
            self._log("dup", str(src), str(dst), msg.payload)
        for _ in range(copies):
            self._enqueue(self.pulse + rng.randint(0, net.delay_max), src, dst, msg)

    def _enqueue(self, at: int, src, dst, msg) -> None:
        bucket = self._queue.get(at)
        if bucket is None:
            self._queue[at] = [(src, dst, msg)]
        else:
            bucket.append((src, dst, msg))

    def pending(self) -> int:
        return sum(len(b) for b in self._queue.values())

    def advance_pulse(self) -> int:
        """Deliver what is due this pulse, move to the next pulse and run handlers."""
        due = self._queue.pop(self.pulse, ())
        if due and self.record:
            for src, dst, msg in due:
                self._log("deliver:" + msg.kind.value, str(src), str(dst), msg.payload)
        self.pulse += 1
        for src, dst, msg in due:
            self._handle(src, dst, msg)
        return self.pulse

    def run_until(self, target: int, stop: Optional[Callable[[], bool]] = None) -> int:
        """Advance to pulse ``target``, skipping idle stretches.

        Stops early once ``stop()`` holds after a pulse.
        """
        if self.max_pulses is not None:
            target = min(target, self.max_pulses)
        while self.pulse < target:
            if self._queue:
                nxt = min(self._queue)
                if nxt > self.pulse:
                    self.pulse = min(nxt, target)
                    continue
            else:
                self.pulse = target
                break
            self.advance_pulse()
            if stop is not None and stop():
                break
        return self.pulse

    # --------------------------------------------------------------- protocol
    def agree(self, value: bytes) -> ProtocolMessage:
        """Local consensus in the sending cluster on sending ``value``."""
        value = bytes(value)
        state = self.states[self.c1.id]
        cert = state.local_consensus(send_payload(value, self.c2.id), "agreed", value)
        self.value = value
        self.send_message = make_send(value, self.c2.id, cert)
        self.start_pulse = self.pulse
        return self.send_message

    def agreed(self, value: bytes) -> bool:
        return self.states[self.c1.id].has_consensus(send_payload(value, self.c2.id))

    def confirmed(self, value: Optional[bytes] = None) -> bool:
        if value is None:
            value = self.value
            if value is None:
                return False
        state = self.states[self.c1.id]
        send = self.send_message
        if send is None or send.value != value:
            return False
        return state.has_consensus(proof_payload(send))

    def instruct_send(self, r1: ReplicaId, r2: ReplicaId) -> None:
        if self.send_message is None:
            raise ProtocolMisuseError("no agree decision on a value to send")
        if self.record:
            self._log("instruct", str(r1), str(r2), self.send_message.payload)
        if self.c1.is_faulty(r1):
            adv = self.adversary
            if adv.injects():
                self._inject(r1)
            if not adv.transmits_send():
                if self.record:
                    self._log("adv:withhold", str(r1), str(r2), self.send_message.payload)
                return
        self.send_inter_cluster(r1, r2, self.send_message)

    def _verify(self, verifier: ReplicaId, cluster: ClusterConfig, cert, expected: bytes) -> bool:
        ok = verify_certificate(cluster, cert) and cert.payload == expected
        if self.record:
            self._log("verify:ok" if ok else "verify:fail", str(verifier), cluster.id,
                      cert.payload if isinstance(getattr(cert, "payload", None), bytes) else b"")
        return ok

    def _handle(self, src: ReplicaId, dst: ReplicaId, msg: ProtocolMessage) -> None:
        if msg.kind is MessageKind.SEND:
            self._on_send(src, dst, msg)
        elif msg.kind is MessageKind.PROOF:
            self._on_proof(src, dst, msg)

    def _on_send(self, src: ReplicaId, dst: ReplicaId, msg: ProtocolMessage) -> None:
        state = self.states[dst.cluster]
        origin = self.states.get(msg.cert.cluster)
        reaction = Reaction.HONEST
        if state.config.is_faulty(dst):
            if self.adversary.injects():
                self._inject(dst)
            reaction = self.adversary.on_send()
            if reaction is Reaction.IGNORE:
                if self.record:
                    self._log("adv:ignore", str(dst), str(src), msg.payload)
                return
        if origin is None or msg.target != dst.cluster or origin.config.id == dst.cluster:
            self.log("reject", str(dst), str(src), msg.payload)
            return
        if not self._verify(dst, origin.config, msg.cert, send_payload(msg.value, msg.target)):
            return
        cert = state.local_consensus(proof_payload(msg), "received", msg.value, dst)
        if reaction is Reaction.CONSENSUS_ONLY:
            if self.record:
                self._log("adv:withhold", str(dst), str(src), cert.payload)
            return
        self.send_inter_cluster(dst, src, make_proof(msg, cert))

    def _on_proof(self, src: ReplicaId, dst: ReplicaId, msg: ProtocolMessage) -> None:
        state = self.states[dst.cluster]
        if state.config.is_faulty(dst):
            if self.adversary.injects():
                self._inject(dst)
            if not self.adversary.on_proof():
                if self.record:
                    self._log("adv:ignore", str(dst), str(src), msg.payload)
                return
        inner = msg.inner
        remote = self.states.get(msg.cert.cluster)
        if inner is None or remote is None or inner.cert.cluster != dst.cluster or inner.target != remote.config.id:
            self.log("reject", str(dst), str(src), msg.payload)
            return
        # the proof must certify our own, agreed SEND message
        if not state.has_consensus(inner.cert.payload) or inner.cert.payload != send_payload(inner.value, inner.target):
            self.log("reject", str(dst), str(src), msg.payload)
            return
        if not self._verify(dst, remote.config, msg.cert, proof_payload(inner)):
            return
        state.local_consensus(msg.cert.payload, "confirmed", inner.value, dst)

    def _inject(self, faulty: ReplicaId) -> None:
        """A faulty replica sends a forged or replayed message to the other cluster."""
        rng = self.adversary.rng
        own = self.states[faulty.cluster]
        other_id = self.c2.id if faulty.cluster == self.c1.id else self.c1.id
        other = self.states[other_id].config
        dst = other.replica(rng.randrange(other.n))
        signers = own.config.faulty
        if faulty.cluster == self.c1.id:
            if self.send_message is not None and rng.random() < 0.5:
                msg = self.send_message
            else:
                forged_value = b"forged-" + str(rng.randrange(1 << 16)).encode()
                payload = send_payload(forged_value, other_id)
                msg = make_send(forged_value, other_id, own.sign(payload, signers))
        else:
            send = self.send_message
            if send is None:
                return
            payload = proof_payload(send)
            if own.has_consensus(payload) and rng.random() < 0.5:
                msg = make_proof(send, own.certificates[payload])
            else:
                msg = make_proof(send, own.sign(payload, signers))
        self.send_inter_cluster(faulty, dst, msg, injected=True)

    # ----------------------------------------------------------------- results
    def finish(self) -> TrialStats:
        st = self.stats
        st.consensus_c1 = self.states[self.c1.id].consensus_steps
        st.consensus_c2 = self.states[self.c2.id].consensus_steps
        st.pulses = self.pulse - self.start_pulse
        st.confirmed = self.confirmed()
        return st

    def decisions(self) -> dict:
        out = {}
        for state in self.states.values():
            for r, d in state.decisions.items():
                out[str(r)] = d.snapshot()
        return out

    def trace(self) -> Trace:
        return Trace(list(self.events), self.decisions(), self.finish(), (self.c1, self.c2))


def _replica_cluster(name: str) -> str:
    return name.rsplit(":", 1)[0]


def check_safety(sim: Simulation) -> list[str]:
    """Replay the event log and report every violated safety property.

    Checks: agree before any receive, receive everywhere before any confirm,
    set-once decisions, and that every accepted certificate matches a payload
    its cluster reached consensus on earlier in the run.
    """
    if not sim.record:
        raise ValueError("safety checks need a recorded trace")
    c1, c2 = sim.c1, sim.c2
    nf1 = {str(r) for r in c1.nonfaulty}
    nf2 = {str(r) for r in c2.nonfaulty}
    decided: dict = {}
    agreed_payloads = {c1.id: set(), c2.id: set()}
    problems = []
    for ev in sim.events:
        kind = ev.kind
        if kind == "consensus":
            agreed_payloads[ev.dst].add(ev.digest)
        elif kind.startswith("decide:"):
            slot = kind[7:]
            key = (ev.src, slot)
            prev = decided.get(key)
            if prev is not None and prev != ev.digest:
                problems.append(f"pulse {ev.pulse}: {ev.src} changed {slot} decision")
            decided[key] = ev.digest
            if slot == "received":
                missing = [r for r in nf1 if (r, "agreed") not in decided]
                if missing:
                    problems.append(f"pulse {ev.pulse}: {ev.src} received before agree at {sorted(missing)}")
            elif slot == "confirmed":
                missing = [r for r in nf2 if (r, "received") not in decided]
                if missing:
                    problems.append(f"pulse {ev.pulse}: {ev.src} confirmed before receive at {sorted(missing)}")
        elif kind == "verify:ok":
            if ev.digest not in agreed_payloads.get(ev.dst, ()):
                problems.append(f"pulse {ev.pulse}: {ev.src} accepted a certificate of {ev.dst} "
                                "for a payload that cluster never agreed on")
    confirmed = [r for r in nf1 if (r, "confirmed") in decided]
    if confirmed and len(confirmed) != len(nf1):
        problems.append("confirm decided by some but not all non-faulty sending replicas")
    return problems
