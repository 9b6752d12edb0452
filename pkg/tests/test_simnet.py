import json

import pytest

from clustersend.core import ClusterConfig, ConfigurationError, ProtocolMisuseError, ReplicaId
from clustersend.protocols import cs_step
from clustersend.simnet import (
    AdversaryKind,
    AdversaryStrategy,
    Mode,
    NetworkConfig,
    SharedCoin,
    Simulation,
    check_safety,
    coin_draw,
)


def clusters(f1=(), f2=()):
    return ClusterConfig.build("C1", 4, f1), ClusterConfig.build("C2", 4, f2)


def R(c, i):
    return ReplicaId(c, i)


def test_sync_forces_reliable_link():
    net = NetworkConfig(Mode.SYNC, drop_prob=0.9, dup_prob=0.9, delay_max=7)
    assert (net.drop_prob, net.dup_prob, net.delay_max) == (0.0, 0.0, 0)


def test_network_validation():
    with pytest.raises(ConfigurationError):
        NetworkConfig(Mode.ASYNC, drop_prob=1.5)
    with pytest.raises(ConfigurationError):
        NetworkConfig(Mode.ASYNC, reliability_schedule=((5, 2, 0.1),))
    net = NetworkConfig(Mode.ASYNC, 0.1, 0.0, 2, ((0, 10, 1.0),))
    assert net.drop_at(3) == 1.0 and net.drop_at(10) == 0.1


def test_same_cluster_send_rejected():
    sim = Simulation(*clusters())
    msg = sim.agree(b"v")
    with pytest.raises(ConfigurationError):
        sim.send_inter_cluster(R("C1", 0), R("C1", 1), msg)


def test_empty_pulse():
    sim = Simulation(*clusters())
    assert sim.advance_pulse() == 1
    assert sim.events == []


def test_sync_delivery_schedule():
    sim = Simulation(*clusters())
    sim.agree(b"v")
    sim.instruct_send(R("C1", 0), R("C2", 0))
    assert sim.stats.inter_cluster_msgs == 1
    sim.advance_pulse()  # SEND delivered at end of pulse 0, handled at pulse 1
    assert sim.states["C2"].decisions[R("C2", 0)].received == b"v"
    assert sim.stats.inter_cluster_msgs == 2
    assert not sim.confirmed(b"v")
    sim.advance_pulse()
    assert sim.confirmed(b"v")
    assert check_safety(sim) == []


def test_cs_step_requires_agree():
    sim = Simulation(*clusters())
    with pytest.raises(ProtocolMisuseError):
        cs_step(sim, R("C1", 0), R("C2", 0), b"v")
    with pytest.raises(ProtocolMisuseError):
        sim.instruct_send(R("C1", 0), R("C2", 0))


def test_worst_case_faulty_receiver_sends_no_proof():
    sim = Simulation(*clusters(f2=[0]))
    sim.agree(b"v")
    out = cs_step(sim, R("C1", 0), R("C2", 0), b"v")
    assert not out.success and out.messages_sent == 1
    kinds = [e.kind for e in sim.events]
    assert "adv:ignore" in kinds and "send:proof" not in kinds


def test_drop_inbound_consensus_only_adversaries():
    sim = Simulation(*clusters(f1=[0]), adversary=AdversaryStrategy(AdversaryKind.DROP_INBOUND))
    sim.agree(b"v")
    out = cs_step(sim, R("C1", 0), R("C2", 0), b"v")
    # the faulty sender forwards SEND but drops the proof it receives
    assert not out.success and out.messages_sent == 2
    assert all(d.received == b"v" for d in sim.states["C2"].decisions.values())
    sim = Simulation(*clusters(f2=[0]), adversary=AdversaryStrategy(AdversaryKind.DROP_OUTBOUND))
    sim.agree(b"v")
    out = cs_step(sim, R("C1", 0), R("C2", 0), b"v")
    assert not out.success
    # C2 reached consensus but the proof was withheld
    assert sim.states["C2"].consensus_steps == 1


def test_certain_drop():
    net = NetworkConfig(Mode.ASYNC, drop_prob=1.0)
    sim = Simulation(*clusters(), network=net)
    sim.agree(b"v")
    sim.instruct_send(R("C1", 0), R("C2", 0))
    sim.run_until(50)
    assert sim.stats.inter_cluster_msgs == 1
    assert not sim.confirmed() and sim.pending() == 0


def test_duplication_does_not_change_outcome():
    net = NetworkConfig(Mode.ASYNC, drop_prob=0.0, dup_prob=1.0, delay_max=0)
    sim = Simulation(*clusters(), network=net)
    sim.agree(b"v")
    sim.instruct_send(R("C1", 0), R("C2", 0))
    sim.run_until(10)
    assert sim.confirmed()
    assert sim.states["C1"].consensus_steps == 2 and sim.states["C2"].consensus_steps == 1
    assert sum(1 for e in sim.events if e.kind == "deliver:send") == 2
    assert check_safety(sim) == []


def test_coin():
    coin = SharedCoin(5, "C1")
    assert coin_draw(coin, 1) == 0
    again = SharedCoin(5, "C1")
    again.draw(1)
    assert [coin.draw(10) for _ in range(20)] == [again.draw(10) for _ in range(20)]
    with pytest.raises(ValueError):
        coin.draw(0)


def test_coin_views_agree():
    coin = SharedCoin(9, "C1")
    views = [coin.replica_view() for _ in range(3)]
    draws = [[v.draw(7) for _ in range(30)] for v in views]
    assert draws[0] == draws[1] == draws[2] == [coin.draw(7) for _ in range(30)]
    assert SharedCoin(9, "C2").shuffle(range(10)) != SharedCoin(9, "C1").shuffle(range(10))


def test_trace_replay_and_export():
    def run():
        net = NetworkConfig(Mode.ASYNC, 0.3, 0.3, 3)
        sim = Simulation(*clusters([1], [2]), network=net,
                         adversary=AdversaryStrategy(AdversaryKind.RANDOMIZED, 4), seed=8)
        sim.agree(b"v")
        for i in range(4):
            sim.instruct_send(R("C1", i), R("C2", 3 - i))
            sim.run_until(sim.pulse + 3)
        sim.run_until(sim.pulse + 20)
        return sim.trace()

    a, b = run(), run()
    assert a.events == b.events and a.decisions == b.decisions
    lines = a.to_jsonl().splitlines()
    assert json.loads(lines[0]).keys() == {"pulse", "kind", "from", "to", "digest"}


def test_injected_forgeries_never_verify():
    for seed in range(40):
        sim = Simulation(*clusters([0], [1]), seed=seed,
                         adversary=AdversaryStrategy(AdversaryKind.RANDOMIZED, inject_prob=1.0))
        sim.agree(b"v")
        for i in range(4):
            sim.instruct_send(R("C1", 0), R("C2", i))
            sim.run_until(sim.pulse + 3)
        assert sim.stats.adversary_msgs > 0
        assert check_safety(sim) == []
        # no C2 replica ever decided a forged value
        for d in sim.states["C2"].decisions.values():
            assert d.received in (None, b"v")


def test_safety_checker_flags_bad_trace():
    sim = Simulation(*clusters())
    # C2 decides receive with no agree in C1
    sim.states["C2"].local_consensus(b"x", "received", b"v")
    problems = check_safety(sim)
    assert any("before agree" in p for p in problems)
    with pytest.raises(ValueError):
        check_safety(Simulation(*clusters(), record=False))
