import pytest

from clustersend.core import (
    Certificate,
    ClusterConfig,
    ClusterState,
    ConfigurationError,
    DecisionConflict,
    DecisionState,
    ForgeryError,
    MessageKind,
    ReplicaId,
    certify,
    local_consensus,
    make_proof,
    make_send,
    proof_payload,
    send_payload,
    verify_certificate,
)


@pytest.fixture
def c4():
    return ClusterConfig.build("C1", 4, [3])


def test_replica_ordering_and_str():
    ids = [ReplicaId("C2", 0), ReplicaId("C1", 3), ReplicaId("C1", 1)]
    assert sorted(ids) == [ReplicaId("C1", 1), ReplicaId("C1", 3), ReplicaId("C2", 0)]
    assert str(ReplicaId("C1", 2)) == "C1:2"


def test_cluster_counts(c4):
    assert (c4.n, c4.f, c4.nf) == (4, 1, 3)
    assert c4.members == [ReplicaId("C1", i) for i in range(4)]
    assert c4.nonfaulty == [ReplicaId("C1", i) for i in range(3)]
    assert c4.faulty_flags() == (False, False, False, True)


def test_member_list_is_stable(c4):
    assert c4.members == ClusterConfig.build("C1", 4, [3]).members


@pytest.mark.parametrize("n,faulty", [(2, [0]), (4, [0, 1]), (0, [])])
def test_cluster_requires_n_above_2f(n, faulty):
    with pytest.raises(ConfigurationError):
        ClusterConfig.build("C", n, faulty)


def test_cluster_rejects_foreign_faulty():
    with pytest.raises(ConfigurationError):
        ClusterConfig("C1", 3, frozenset({ReplicaId("C2", 0)}))
    with pytest.raises(ConfigurationError):
        ClusterConfig.build("C1", 3, [5])


def test_certify_threshold(c4):
    r = c4.members
    assert verify_certificate(c4, certify(c4, b"p", {r[0], r[1]}))
    assert not verify_certificate(c4, certify(c4, b"p", {r[0]}))


def test_certify_rejects_outsider(c4):
    with pytest.raises(ConfigurationError):
        certify(c4, b"p", {ReplicaId("C2", 0)})


def test_verify_rejects_malformed(c4):
    assert not verify_certificate(c4, None)
    assert not verify_certificate(c4, Certificate(b"p", "C2", frozenset(c4.members)))
    assert not verify_certificate(c4, Certificate(b"p", "C1", frozenset({ReplicaId("C2", 0), ReplicaId("C2", 1)})))
    assert not verify_certificate(c4, Certificate(b"p", "C1", frozenset({"junk", 3})))


def test_local_consensus_is_idempotent(c4):
    events = []
    state = ClusterState(c4, lambda *e: events.append(e))
    cert = local_consensus(state, b"p")
    assert state.consensus_steps == 1
    assert cert.signers == frozenset(c4.nonfaulty)
    assert verify_certificate(c4, cert)
    assert local_consensus(state, b"p") is cert
    assert state.consensus_steps == 1
    local_consensus(state, b"q")
    assert state.consensus_steps == 2
    assert [e[0] for e in events] == ["consensus", "consensus"]


def test_local_consensus_installs_decision(c4):
    state = ClusterState(c4)
    state.local_consensus(b"p", "agreed", b"v")
    assert all(d.agreed == b"v" for d in state.decisions.values())
    assert ReplicaId("C1", 3) not in state.decisions


def test_nonfaulty_replicas_refuse_to_forge(c4):
    state = ClusterState(c4)
    faulty = ReplicaId("C1", 3)
    lone = state.sign(b"x", {faulty})
    assert not verify_certificate(c4, lone)
    with pytest.raises(ForgeryError):
        state.sign(b"x", {faulty, ReplicaId("C1", 0)})
    state.local_consensus(b"x")
    assert verify_certificate(c4, state.sign(b"x", {faulty, ReplicaId("C1", 0)}))


def test_decisions_are_set_once():
    d = DecisionState()
    assert d.decide("received", b"v")
    assert not d.decide("received", b"v")
    with pytest.raises(DecisionConflict):
        d.decide("received", b"w")
    with pytest.raises(ValueError):
        d.decide("bogus", b"v")
    assert d.snapshot() == (None, b"v", None)


def test_message_payloads(c4):
    state = ClusterState(c4)
    cert = state.local_consensus(send_payload(b"v", "C2"))
    send = make_send(b"v", "C2", cert)
    assert send.kind is MessageKind.SEND and send.payload == send_payload(b"v", "C2")
    proof = make_proof(send, Certificate(proof_payload(send), "C2", frozenset()))
    assert proof.kind is MessageKind.PROOF and proof.inner is send
    assert proof_payload(send).startswith(b"proof\x00C1\x00send\x00C2\x00")
    # values are opaque bytes: distinct values never share a payload
    assert send_payload(b"a\x00C3", "C2") != send_payload(b"a", "C2\x00C3")
