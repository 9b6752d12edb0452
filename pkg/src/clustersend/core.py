"""Domain types shared by the analysis, simulator and protocol layers.

A cluster is a fixed, ordered set of replicas with a designated faulty
subset.  Certificates are signer sets; a certificate is valid for a
cluster when at least ``f + 1`` distinct members signed it, which
guarantees a non-faulty signer.  Non-faulty replicas only sign payloads
their cluster reached local consensus on, so a valid certificate can never
be minted for anything else (see :meth:`ClusterState.sign`).
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional


class ConfigurationError(ValueError):
    """Raised for cluster or run configurations outside the system model."""


class ProtocolMisuseError(RuntimeError):
    """Raised when a protocol operation is invoked without its precondition."""


class InvariantViolation(RuntimeError):
    """Raised when a state that the model rules out is reached."""


class ForgeryError(PermissionError):
    """Raised when a non-faulty replica is asked to sign an unagreed payload."""


class ReplicaId(NamedTuple):
    """A replica, ordered by ``(cluster, index)``."""

    cluster: str
    index: int

    def __str__(self) -> str:
        return f"{self.cluster}:{self.index}"


@dataclass(frozen=True)
class ClusterConfig:
    id: str
    n: int
    faulty: frozenset = frozenset()

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError(f"cluster {self.id}: n must be positive, got {self.n}")
        object.__setattr__(self, "faulty", frozenset(self.faulty))
        for r in self.faulty:
            if not isinstance(r, ReplicaId) or r.cluster != self.id or not 0 <= r.index < self.n:
                raise ConfigurationError(f"cluster {self.id}: {r!r} is not a member")
        if self.n <= 2 * self.f:
            raise ConfigurationError(
                f"cluster {self.id}: n={self.n} must exceed 2f={2 * self.f}"
            )

    @classmethod
    def build(cls, id: str, n: int, faulty_indices: Iterable[int] = ()) -> "ClusterConfig":
        return cls(id, n, frozenset(ReplicaId(id, i) for i in faulty_indices))

    @property
    def f(self) -> int:
        return len(self.faulty)

    @property
    def nf(self) -> int:
        return self.n - self.f

    @property
    def members(self) -> list[ReplicaId]:
        """List(C): the replicas in their predetermined (index) order."""
        return [ReplicaId(self.id, i) for i in range(self.n)]

    def replica(self, index: int) -> ReplicaId:
        if not 0 <= index < self.n:
            raise ConfigurationError(f"cluster {self.id} has no replica {index}")
        return ReplicaId(self.id, index)

    def contains(self, r: ReplicaId) -> bool:
        return r.cluster == self.id and 0 <= r.index < self.n

    def is_faulty(self, r: ReplicaId) -> bool:
        return r in self.faulty

    @property
    def nonfaulty(self) -> list[ReplicaId]:
        return [r for r in self.members if r not in self.faulty]

    def faulty_flags(self) -> tuple[bool, ...]:
        return tuple(ReplicaId(self.id, i) in self.faulty for i in range(self.n))


@dataclass(frozen=True)
class Certificate:
    payload: bytes
    cluster: str
    signers: frozenset

    @property
    def digest(self) -> str:
        return digest(self.payload)


def digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


def certify(cluster: ClusterConfig, payload: bytes, signers: Iterable[ReplicaId]) -> Certificate:
    """Bundle ``signers`` into a certificate for ``payload``.

    Validity is not decided here; see :func:`verify_certificate`.
    """
    signers = frozenset(signers)
    for r in signers:
        if not cluster.contains(r):
            raise ConfigurationError(f"signer {r} is not a member of cluster {cluster.id}")
    return Certificate(bytes(payload), cluster.id, signers)


def verify_certificate(cluster: ClusterConfig, cert: object) -> bool:
    if not isinstance(cert, Certificate) or not isinstance(cert.payload, bytes):
        return False
    if cert.cluster != cluster.id:
        return False
    try:
        if not all(cluster.contains(r) for r in cert.signers):
            return False
    except (AttributeError, TypeError):
        return False
    return len(cert.signers) >= cluster.f + 1


class MessageKind(enum.Enum):
    SEND = "send"
    PROOF = "proof"


@dataclass(frozen=True)
class ProtocolMessage:
    """SEND carries a value for ``target`` certified by the sending cluster;
    PROOF carries a complete SEND message certified by the receiving cluster."""

    kind: MessageKind
    value: bytes
    target: str
    cert: Certificate
    inner: Optional["ProtocolMessage"] = None

    @property
    def payload(self) -> bytes:
        return self.cert.payload


def send_payload(value: bytes, target: str) -> bytes:
    return b"send\x00" + target.encode() + b"\x00" + bytes(value)


def proof_payload(send: ProtocolMessage) -> bytes:
    return b"proof\x00" + send.cert.cluster.encode() + b"\x00" + send.payload


def make_send(value: bytes, target: str, cert: Certificate) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.SEND, bytes(value), target, cert)


def make_proof(send: ProtocolMessage, cert: Certificate) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.PROOF, send.value, send.target, cert, inner=send)


class DecisionConflict(InvariantViolation):
    pass


_SLOTS = ("agreed", "received", "confirmed")


@dataclass
class DecisionState:
    """Set-once decision slots of one replica."""

    agreed: Optional[bytes] = None
    received: Optional[bytes] = None
    confirmed: Optional[bytes] = None

    def decide(self, slot: str, value: bytes) -> bool:
        """Install ``value`` in ``slot``; returns True if the slot was empty."""
        if slot not in _SLOTS:
            raise ValueError(f"unknown decision slot {slot!r}")
        current = getattr(self, slot)
        if current is None:
            setattr(self, slot, value)
            return True
        if current != value:
            raise DecisionConflict(f"{slot} already decided {current!r}, refusing {value!r}")
        return False

    def snapshot(self) -> tuple:
        return (self.agreed, self.received, self.confirmed)


@dataclass
class ClusterState:
    """Mutable per-simulation state of one cluster.

    ``on_event`` receives ``(kind, src, dst, payload)`` tuples for the trace.
    """

    config: ClusterConfig
    on_event: Optional[Callable[[str, str, str, bytes], None]] = None
    consensus_steps: int = 0
    decisions: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.decisions = {r: DecisionState() for r in self.config.nonfaulty}

    def has_consensus(self, payload: bytes) -> bool:
        return payload in self.certificates

    def local_consensus(self, payload: bytes, slot: Optional[str] = None,
                        value: Optional[bytes] = None, initiator: Optional[ReplicaId] = None) -> Certificate:
        """Atomically agree on ``payload`` at every non-faulty replica.

        Costs one consensus step the first time a payload is agreed on and
        nothing afterwards.  When ``slot`` is given, every non-faulty
        replica decides ``value`` in that slot.
        """
        existing = self.certificates.get(payload)
        if existing is not None:
            return existing
        self.consensus_steps += 1
        cert = Certificate(payload, self.config.id, frozenset(self.decisions))
        self.certificates[payload] = cert
        emit = self.on_event
        if emit is not None:
            emit("consensus", str(initiator) if initiator else self.config.id, self.config.id, payload)
        if slot is not None:
            for r, state in self.decisions.items():
                if state.decide(slot, value) and emit is not None:
                    emit("decide:" + slot, str(r), "", value)
        return cert

    def sign(self, payload: bytes, signers: Iterable[ReplicaId]) -> Certificate:
        """Collect signatures the way the adversary interface allows.

        Faulty replicas sign anything; non-faulty replicas only sign payloads
        this cluster has consensus on.
        """
        signers = frozenset(signers)
        agreed = self.has_consensus(payload)
        for r in signers:
            if not self.config.contains(r):
                raise ConfigurationError(f"signer {r} is not a member of cluster {self.config.id}")
            if not agreed and not self.config.is_faulty(r):
                raise ForgeryError(f"non-faulty {r} refuses to sign an unagreed payload")
        return Certificate(payload, self.config.id, signers)


def local_consensus(state: ClusterState, payload: bytes) -> Certificate:
    return state.local_consensus(payload)
