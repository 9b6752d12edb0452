"""Verification suites run by ``clustersend verify``.

Each suite returns a :class:`SuiteResult`; a suite passes only if every
check in it holds.  Exact suites compare rationals for equality, Monte
Carlo suites use :func:`clustersend.harness.within_band`.
"""

from __future__ import annotations

import itertools
import math
import random
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Callable

from . import analysis
from .core import ClusterConfig, ConfigurationError
from .harness import RunSpec, run_campaign, simulate_csv, sweep_csv, within_band
from .protocols import (
    ListPairFunction,
    Protocol,
    PruneState,
    async_drive,
    check_plcs_robust,
    list_faults,
    ppcs,
    ppcs_worst_case,
    run_protocol,
    sf_max,
)
from .simnet import (
    AdversaryKind,
    AdversaryStrategy,
    Mode,
    NetworkConfig,
    Simulation,
    check_safety,
    derive_seed,
)


@dataclass
class SuiteResult:
    name: str
    passed: bool = True
    checks: int = 0
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    def check(self, ok: bool, what: str) -> None:
        self.checks += 1
        if not ok:
            self.passed = False
            if len(self.failures) < 20:
                self.failures.append(what)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.checks} checks in {self.seconds:.2f}s"


def _timed(name: str, body: Callable[[SuiteResult], None]) -> SuiteResult:
    res = SuiteResult(name)
    t0 = time.perf_counter()
    body(res)
    res.seconds = time.perf_counter() - t0
    return res


def suite_fc(max_n: int = 8) -> SuiteResult:
    """Recursion, closed form and product form agree; rows sum to n!^2."""
    def body(res: SuiteResult) -> None:
        for n in range(max_n + 1):
            for m1 in range(n + 1):
                for m2 in range(n + 1):
                    total = 0
                    for k in range(n + 2):
                        rec = analysis.fc_recursive(n, m1, m2, k)
                        total += rec
                        if k in analysis.feasible_k(n, m1, m2):
                            closed = analysis.fc_closed(n, m1, m2, k)
                            prod = analysis.fc_product(n, m1, m2, k)
                            res.check(rec == closed == prod, f"FC({n},{m1},{m2},{k}): {rec} {closed} {prod}")
                        else:
                            res.check(rec == 0, f"FC({n},{m1},{m2},{k}) = {rec} outside the feasible range")
                    res.check(total == factorial(n) ** 2, f"sum_k FC({n},{m1},{m2},k) = {total}")
    return _timed("fc", body)


def suite_pt(max_n: int = 6) -> SuiteResult:
    def body(res: SuiteResult) -> None:
        for n in range(1, max_n + 1):
            for m1 in range(n):
                for m2 in range(n - m1):
                    exact = analysis.pt_exact(n, m1, m2)
                    brute = analysis.pt_bruteforce(n, m1, m2)
                    res.check(exact == brute, f"PT({n},{m1},{m2}): {exact} != {brute}")
                    res.check(exact <= Fraction(n, n - m1 - m2), f"PT({n},{m1},{m2}) above n/(n-m1-m2)")
    return _timed("pt", body)


def suite_appf(max_f: int = 12) -> SuiteResult:
    def body(res: SuiteResult) -> None:
        for f in range(max_f + 1):
            closed = analysis.pt_equal_half(f)
            res.check(analysis.pt_exact(2 * f + 1, f, f) == closed, f"PT(2f+1,f,f) identity at f={f}")
            res.check(closed < 4, f"PT(2f+1,f,f) >= 4 at f={f}")
        res.check(analysis.pt_bruteforce(3, 1, 1) == Fraction(5, 2), "PT(3,1,1) != 5/2")
        res.check(analysis.pt_bruteforce(5, 2, 2) == Fraction(19, 6), "PT(5,2,2) != 19/6")
    return _timed("appf", body)


PCS_CONFIGS = ((3, 1), (4, 1), (7, 3), (7, 2), (10, 3))


def suite_pcs(trials: int = 20_000, seed: int = 1) -> SuiteResult:
    """Worst-case adversary Monte Carlo against n1 n2 / (nf1 nf2)."""
    def body(res: SuiteResult) -> None:
        for n, f in PCS_CONFIGS:
            spec = RunSpec(Protocol.PCS, n, f, n, f, trials=trials, seed=seed, check=False,
                           max_iters=10 ** 6)
            steps = [r.stats.cs_steps for r in run_campaign(spec)]
            mean, sd = statistics.fmean(steps), statistics.stdev(steps)
            exact = analysis.pcs_expected_steps(n, f, n, f)
            res.check(within_band(mean, sd, trials, float(exact)),
                      f"pcs n={n} f={f}: mean {mean:.4f} vs {float(exact):.4f}")
            bound = 4 if n <= 3 * f else Fraction(9, 4)
            res.check(exact <= bound, f"pcs n={n} f={f}: expectation {exact} above {bound}")
    return _timed("pcs", body)


def cluster_shapes(max_n: int):
    for n in range(1, max_n + 1):
        for f in range((n - 1) // 2 + 1):
            yield n, f


def suite_ppcs(max_n: int = 5, sim_trials: int = 20) -> SuiteResult:
    """Exhaustive worst case over every choice order and every faulty placement."""
    def body(res: SuiteResult) -> None:
        for n1, f1 in cluster_shapes(max_n):
            for n2, f2 in cluster_shapes(max_n):
                bound = (f1 + 1) * (f2 + 1)
                attained = False
                for p1 in itertools.combinations(range(n1), f1):
                    for p2 in itertools.combinations(range(n2), f2):
                        c1 = ClusterConfig.build("C1", n1, p1)
                        c2 = ClusterConfig.build("C2", n2, p2)
                        worst = ppcs_worst_case(c1, c2)
                        res.check(worst <= bound, f"ppcs {c1.faulty}/{c2.faulty}: worst {worst} > {bound}")
                        attained |= worst == bound
                        for t in range(sim_trials):
                            sim = Simulation(c1, c2, seed=t, record=False)
                            prune = PruneState(c1, c2)
                            st = ppcs(sim, b"v", prune=prune)
                            res.check(st.confirmed and st.cs_steps <= bound and prune.is_sound(),
                                      f"ppcs run ({n1},{p1},{n2},{p2}) seed {t}: {st}")
                res.check(attained, f"ppcs ({n1},{f1},{n2},{f2}): bound {bound} never attained")
    return _timed("ppcs", body)


def suite_plcs(trials: int = 20_000, seed: int = 2, max_n: int = 13) -> SuiteResult:
    def body(res: SuiteResult) -> None:
        # worst case with sf_min under min(n1, n2) > f1 + f2
        for n1, f1, n2, f2 in ((4, 1, 4, 1), (5, 2, 3, 0), (7, 2, 5, 2), (9, 4, 5, 0)):
            spec = RunSpec(Protocol.PLCS_MIN, n1, f1, n2, f2, trials=trials // 10, seed=seed, check=False)
            c1, c2 = spec.clusters()
            s1 = min(n1, n2)
            bound = list_faults(c1.members[:s1], c1) + list_faults(c2.members[:s1], c2) + 1
            rows = run_campaign(spec)
            res.check(all(r.stats.confirmed and r.stats.cs_steps <= bound for r in rows),
                      f"plcs-min ({n1},{f1},{n2},{f2}) exceeded {bound} steps")
        # sf_max with n > 3f on both sides
        for n1, f1, n2, f2 in ((4, 1, 4, 1), (7, 2, 4, 1), (10, 3, 7, 2)):
            spec = RunSpec(Protocol.PLCS_MAX, n1, f1, n2, f2, trials=trials, seed=seed, check=False)
            steps = [r.stats.cs_steps for r in run_campaign(spec)]
            mean, sd = statistics.fmean(steps), statistics.stdev(steps)
            c1, c2 = spec.clusters()
            s1, s2 = sf_max(c1, c2)
            exact = analysis.plcs_expected_steps(len(s1), list_faults(s1, c1), list_faults(s2, c2))
            res.check(within_band(mean, sd, trials, float(exact)), f"plcs-max {n1},{n2}: {mean} vs {exact}")
            res.check(mean <= 3, f"plcs-max ({n1},{f1},{n2},{f2}): mean {mean} > 3")
        # analytic rows over a grid of cluster sizes
        for n1, f1 in cluster_shapes(max_n):
            for n2, f2 in cluster_shapes(max_n):
                for bound, ok in plcs_row_bounds(n1, f1, n2, f2):
                    res.check(ok, f"plcs row {bound} fails at ({n1},{f1},{n2},{f2})")
    return _timed("plcs", body)


def sf_max_fault_counts(n1: int, f1: int, n2: int, f2: int):
    """Every (n, f(S1), f(S2)) that sf_max can produce, up to symmetry.

    Only the repeated prefix of the shorter cluster matters, so each
    possible number of faulty replicas inside that prefix is one case.
    """
    n = max(n1, n2)
    if n1 >= n2:
        q, r = divmod(n, n2)
        for j in range(max(0, f2 - (n2 - r)), min(f2, r) + 1):
            yield n, f1, q * f2 + j
    else:
        q, r = divmod(n, n1)
        for j in range(max(0, f1 - (n1 - r)), min(f1, r) + 1):
            yield n, q * f1 + j, f2


def sf_min_fault_counts(n1: int, f1: int, n2: int, f2: int):
    n = min(n1, n2)
    for m1 in range(max(0, f1 - (n1 - n)), min(f1, n) + 1):
        for m2 in range(max(0, f2 - (n2 - n)), min(f2, n) + 1):
            yield n, m1, m2


def plcs_row_bounds(n1: int, f1: int, n2: int, f2: int):
    """(bound, holds) for each Plcs expectation row whose condition applies."""
    out = []
    mx, mn = max(f1, f2), min(n1, n2)
    if mn > 2 * mx:
        vals = [analysis.pt_exact(*c) for c in sf_min_fault_counts(n1, f1, n2, f2)]
        out.append((4, all(v < 4 for v in vals)))
    if mn > 3 * mx:
        vals = [analysis.pt_exact(*c) for c in sf_min_fault_counts(n1, f1, n2, f2)]
        out.append((Fraction(9, 4), all(v <= Fraction(9, 4) for v in vals)))
    if n1 > 3 * f1 and n2 > 3 * f2:
        ok = True
        for n, m1, m2 in sf_max_fault_counts(n1, f1, n2, f2):
            ok &= n > m1 + m2 and analysis.pt_exact(n, m1, m2) <= 3
            ok &= (n > 3 * m1 and n > 2 * m2) or (n > 2 * m1 and n > 3 * m2)
        out.append((3, ok))
    return out


def random_fuzz_spec(rng: random.Random):
    """One randomized (clusters, network, adversary, protocol) configuration."""
    def cluster(cid: str) -> ClusterConfig:
        n = rng.randint(1, 7)
        f = rng.randint(0, (n - 1) // 2)
        return ClusterConfig.build(cid, n, rng.sample(range(n), f))

    c1, c2 = cluster("C1"), cluster("C2")
    if rng.random() < 0.3:
        net = NetworkConfig()
    else:
        sched = ()
        if rng.random() < 0.3:
            sched = ((0, rng.randint(1, 60), min(1.0, rng.random() * 2)),)
        net = NetworkConfig(Mode.ASYNC, rng.uniform(0, 0.5), rng.uniform(0, 0.5), rng.randint(0, 8), sched)
    adversary = AdversaryStrategy(rng.choice(list(AdversaryKind)), seed=rng.randrange(1 << 16))
    protos = [Protocol.PCS, Protocol.PPCS]
    for p, lists in ((Protocol.PLCS_MIN, ListPairFunction.SF_MIN), (Protocol.PLCS_MAX, ListPairFunction.SF_MAX)):
        try:
            check_plcs_robust(c1, c2, lists)
            protos.append(p)
        except ConfigurationError:
            pass
    return c1, c2, net, adversary, rng.choice(protos)


def fuzz_trace(seed: int):
    """Run one randomized trace; return (simulation, violations)."""
    rng = random.Random(derive_seed(seed, "fuzz"))
    c1, c2, net, adversary, proto = random_fuzz_spec(rng)
    sim = Simulation(c1, c2, net, adversary, seed=seed, max_pulses=1 << 20)
    problems = []
    if net.mode is Mode.SYNC:
        if proto is Protocol.PPCS:
            prune = PruneState(c1, c2)
            ppcs(sim, b"v", prune=prune)
            if not prune.is_sound():
                problems.append("pruning excluded a non-faulty replica or pair")
        else:
            run_protocol(sim, proto, b"v")
        st = sim.finish()
        if adversary.kind is not AdversaryKind.RANDOMIZED and st.inter_cluster_msgs > 2 * st.cs_steps:
            problems.append(f"{st.inter_cluster_msgs} messages for {st.cs_steps} steps")
        if proto is not Protocol.PCS and not st.confirmed:
            problems.append("synchronous run did not confirm")
    else:
        async_drive(sim, proto, b"v", delta=rng.randint(1, 16), parallel_rounds=rng.randint(1, 4))
    st = sim.finish()
    if st.consensus_c1 > 2 or st.consensus_c2 > 1:
        problems.append(f"consensus steps ({st.consensus_c1}, {st.consensus_c2})")
    problems.extend(check_safety(sim))
    return sim, problems


def suite_safety(traces: int = 2000, seed: int = 3) -> SuiteResult:
    def body(res: SuiteResult) -> None:
        for i in range(traces):
            _, problems = fuzz_trace(seed * 1_000_003 + i)
            res.check(not problems, f"trace {i}: {problems[:3]}")
    return _timed("safety", body)


def backoff_deadlines(sim: Simulation) -> list[int]:
    """Deadlines announced in a trace, in step order."""
    out = []
    for ev in sim.events:
        if ev.kind.startswith("step:"):
            out.append(int(ev.kind.rsplit(":", 1)[1]))
    return out


def check_backoff(deadlines: list[int], t0: int, delta: int) -> bool:
    return all(d == t0 + delta * 2 ** i for i, d in enumerate(deadlines))


def suite_async(trials: int = 100, seed: int = 4, unreliable: int = 50, delta: int = 4) -> SuiteResult:
    """Liveness after an unreliable phase, with exponential deadlines."""
    def body(res: SuiteResult) -> None:
        net = NetworkConfig(Mode.ASYNC, 0.0, 0.1, 4, ((0, unreliable, 1.0),))
        c1 = ClusterConfig.build("C1", 4, [0])
        c2 = ClusterConfig.build("C2", 4, [3])
        for proto in Protocol:
            for t in range(trials):
                sim = Simulation(c1, c2, net, seed=seed * 7919 + t, max_pulses=1 << 20)
                st = async_drive(sim, proto, b"v", delta=delta)
                dl = backoff_deadlines(sim)
                res.check(st.confirmed, f"{proto.value} trial {t} never confirmed")
                res.check(check_backoff(dl, sim.start_pulse, delta) and len(dl) == st.cs_steps,
                          f"{proto.value} trial {t}: deadlines {dl}")
                res.check(not check_safety(sim), f"{proto.value} trial {t}: safety")
    return _timed("async", body)


def figure_formulas(f: int) -> dict:
    """Independent float evaluation of the plotted closed forms."""
    return {
        "pcs_2f1": 4 - (4 * f + 3) / (f + 1) ** 2,
        "plcs_2f1": 4 - 2 / (f + 1) - math.factorial(f) ** 2 / math.factorial(2 * f),
        "pcs_3f1": (3 * f + 1) ** 2 / (2 * f + 1) ** 2,
        "msgs_pcs_3f1": 2 * (3 * f + 1) ** 2 / (2 * f + 1) ** 2,
        "pbs_cs_3f1": 2 * f + 1,
        "geobft_3f1": f + 1,
        "chainspace_3f1": (3 * f + 1) ** 2,
    }


def same_to_digits(a: float, b: float, digits: int = 12) -> bool:
    return f"{a:.{digits}g}" == f"{b:.{digits}g}" or math.isclose(a, b, rel_tol=10 ** (1 - digits))


def suite_sweep(f_max: int = 20) -> SuiteResult:
    def body(res: SuiteResult) -> None:
        text = sweep_csv(0, f_max)
        lines = text.strip().split("\n")
        header = lines[0].split(",")
        res.check(len(lines) == f_max + 2, "sweep row count")
        for line in lines[1:]:
            row = dict(zip(header, line.split(",")))
            f = int(row["f"])
            for key, want in figure_formulas(f).items():
                res.check(same_to_digits(float(row[key]), want), f"sweep f={f} {key}: {row[key]} vs {want}")
            res.check(same_to_digits(float(row["msgs_plcs_3f1"]), 2 * float(row["plcs_3f1"])),
                      f"sweep f={f} msgs_plcs_3f1")
    return _timed("sweep", body)


def suite_determinism(seed: int = 5) -> SuiteResult:
    def body(res: SuiteResult) -> None:
        specs = [
            RunSpec(Protocol.PCS, 4, 1, 4, 1, trials=200, seed=seed),
            RunSpec(Protocol.PLCS_MAX, 7, 2, 4, 1, trials=200, seed=seed),
            RunSpec(Protocol.PPCS, 5, 2, 3, 1, trials=200, seed=seed,
                    network=NetworkConfig(Mode.ASYNC, 0.3, 0.2, 6),
                    adversary=AdversaryStrategy(AdversaryKind.RANDOMIZED, 9)),
        ]
        for spec in specs:
            a, _ = simulate_csv(spec, workers=1)
            b, _ = simulate_csv(spec, workers=1)
            res.check(a == b, f"{spec.protocol.value}: CSV differs between identical runs")
    return _timed("determinism", body)


SUITES = {
    "fc": suite_fc,
    "pt": suite_pt,
    "appf": suite_appf,
    "pcs": suite_pcs,
    "ppcs": suite_ppcs,
    "plcs": suite_plcs,
    "safety": suite_safety,
    "async": suite_async,
    "sweep": suite_sweep,
    "determinism": suite_determinism,
}
