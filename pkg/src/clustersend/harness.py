"""Monte Carlo campaigns, CSV output and the analytic sweep.

A :class:`RunSpec` describes one campaign.  Trial ``i`` runs with seed
``seed + i`` in its own :class:`~clustersend.simnet.Simulation`, so trials
can be spread over worker processes and merged back in index order without
changing a byte of the output.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from . import analysis
from .core import ClusterConfig, ConfigurationError, InvariantViolation
from .protocols import (
    ListPairFunction,
    Protocol,
    async_drive,
    check_plcs_robust,
    list_pair,
    list_faults,
    run_protocol,
)
from .simnet import (
    AdversaryKind,
    AdversaryStrategy,
    Mode,
    NetworkConfig,
    Simulation,
    TrialStats,
    check_safety,
)

CSV_HEADER = (
    "protocol", "n1", "f1", "n2", "f2", "network", "trial", "steps",
    "inter_cluster_msgs", "consensus_c1", "consensus_c2", "pulses", "confirmed",
)

WORKERS_ENV = "CLUSTERSEND_WORKERS"
VALUE = b"v"
ASYNC_PULSE_CAP = 2 ** 48


class PlcsRobustnessWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RunSpec:
    """One simulation campaign.

    Faulty replicas default to the lowest indices of each cluster, which is
    the adversarial placement for truncating list-pair functions; pass
    ``faulty1`` / ``faulty2`` to choose others.
    """

    protocol: Protocol = Protocol.PCS
    n1: int = 4
    f1: int = 1
    n2: int = 4
    f2: int = 1
    network: NetworkConfig = NetworkConfig()
    adversary: AdversaryStrategy = AdversaryStrategy()
    trials: int = 1000
    seed: int = 0
    delta: int = 8
    parallel_rounds: int = 1
    max_pulses: Optional[int] = None
    max_iters: Optional[int] = None
    faulty1: Optional[tuple] = None
    faulty2: Optional[tuple] = None
    check: bool = True

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigurationError("trials must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        c1, c2 = self.clusters()  # validates n > 2f
        if self.protocol in (Protocol.PLCS_MIN, Protocol.PLCS_MAX):
            try:
                check_plcs_robust(c1, c2, _sf(self.protocol))
            except ConfigurationError as exc:
                warnings.warn(f"{self.protocol.value}: {exc}", PlcsRobustnessWarning, stacklevel=3)
        if self.network.mode is Mode.ASYNC and self.max_pulses is None:
            # idle pulses are skipped, so a huge cap only bounds the step count
            # (about log2(cap / delta)) on a link that stays lossy forever
            object.__setattr__(self, "max_pulses", ASYNC_PULSE_CAP)

    def clusters(self) -> tuple[ClusterConfig, ClusterConfig]:
        idx1 = self.faulty1 if self.faulty1 is not None else range(self.f1)
        idx2 = self.faulty2 if self.faulty2 is not None else range(self.f2)
        c1 = ClusterConfig.build("C1", self.n1, idx1)
        c2 = ClusterConfig.build("C2", self.n2, idx2)
        if c1.f != self.f1 or c2.f != self.f2:
            raise ConfigurationError("faulty index lists disagree with f1/f2")
        return c1, c2

    def network_label(self) -> str:
        return self.network.label()

    @classmethod
    def from_mapping(cls, data: dict) -> "RunSpec":
        """Build from a plain mapping such as a parsed JSON config file."""
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        net = NetworkConfig(
            mode=Mode(data.pop("network", "sync")),
            drop_prob=float(data.pop("drop", 0.0)),
            dup_prob=float(data.pop("dup", 0.0)),
            delay_max=int(data.pop("delay_max", 4)),
            reliability_schedule=tuple(tuple(p) for p in data.pop("reliability_schedule", ())),
        )
        adv = AdversaryStrategy(
            kind=AdversaryKind(data.pop("adversary", "worst-case")),
            seed=int(data.pop("adversary_seed", 0)),
        )
        kwargs = {"network": net, "adversary": adv}
        if "protocol" in data:
            kwargs["protocol"] = Protocol(data.pop("protocol"))
        for key in ("faulty1", "faulty2"):
            if data.get(key) is not None:
                kwargs[key] = tuple(data.pop(key))
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(data)
        return cls(**kwargs)


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    return data


def _sf(protocol: Protocol) -> ListPairFunction:
    return ListPairFunction.SF_MIN if protocol is Protocol.PLCS_MIN else ListPairFunction.SF_MAX


@dataclass
class TrialResult:
    index: int
    stats: TrialStats
    violations: list = field(default_factory=list)
    trace_jsonl: str = ""


def run_trial(spec: RunSpec, index: int) -> TrialResult:
    c1, c2 = spec.clusters()
    sim = Simulation(c1, c2, spec.network, spec.adversary, seed=spec.seed + index,
                     record=spec.check, max_pulses=spec.max_pulses)
    violations = []
    try:
        if spec.network.mode is Mode.SYNC:
            stats = run_protocol(sim, spec.protocol, VALUE, spec.max_iters)
        else:
            stats = async_drive(sim, spec.protocol, VALUE, spec.delta, spec.parallel_rounds, spec.max_pulses)
    except InvariantViolation as exc:
        stats = sim.finish()
        violations.append(f"invariant: {exc}")
    if spec.check:
        violations.extend(check_safety(sim))
        if stats.consensus_c1 > 2 or stats.consensus_c2 > 1:
            violations.append(f"consensus steps ({stats.consensus_c1}, {stats.consensus_c2}) exceed (2, 1)")
    trace = sim.trace().to_jsonl() if violations else ""
    return TrialResult(index, stats, violations, trace)


def _run_chunk(args) -> list:
    spec, start, stop = args
    return [run_trial(spec, i) for i in range(start, stop)]


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV}={raw!r} is not an integer") from None


def run_campaign(spec: RunSpec, workers: Optional[int] = None) -> list[TrialResult]:
    workers = default_workers() if workers is None else workers
    if workers <= 1 or spec.trials < 2 * workers:
        return _run_chunk((spec, 0, spec.trials))
    size = math.ceil(spec.trials / (workers * 4))
    chunks = [(spec, s, min(s + size, spec.trials)) for s in range(0, spec.trials, size)]
    results: list = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_chunk, chunks):  # map preserves chunk order
            results.extend(part)
    return results


def csv_rows(spec: RunSpec, results: list[TrialResult]) -> list[tuple]:
    label = spec.network_label()
    return [
        (
            spec.protocol.value, spec.n1, spec.f1, spec.n2, spec.f2, label, r.index,
            r.stats.cs_steps, r.stats.inter_cluster_msgs, r.stats.consensus_c1,
            r.stats.consensus_c2, r.stats.pulses, "true" if r.stats.confirmed else "false",
        )
        for r in results
    ]


def write_csv(rows: list[tuple], out=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def simulate_csv(spec: RunSpec, workers: Optional[int] = None) -> tuple[str, list[TrialResult]]:
    results = run_campaign(spec, workers)
    return write_csv(csv_rows(spec, results)), results


# -------------------------------------------------------------------- statistics
def within_band(mean: float, sd: float, trials: int, analytic: float) -> bool:
    """``|mean - analytic| <= 3 sd / sqrt(trials)``, and within 2% from 1e5 trials on."""
    err = abs(mean - analytic)
    if err > 3 * sd / math.sqrt(trials) + 1e-12:
        return False
    if trials >= 100_000 and err > 0.02 * abs(analytic):
        return False
    return True


def analytic_expectation(spec: RunSpec) -> Optional[Fraction]:
    """Exact expected step count under synchrony, when one is known."""
    c1, c2 = spec.clusters()
    if spec.protocol is Protocol.PCS:
        return analysis.pcs_expected_steps(c1.n, c1.f, c2.n, c2.f)
    if spec.protocol is Protocol.PPCS:
        return None  # only bounded: below the Pcs expectation
    s1, s2 = list_pair(_sf(spec.protocol), c1, c2)
    m1, m2 = list_faults(s1, c1), list_faults(s2, c2)
    if m1 + m2 >= len(s1):
        return None
    return analysis.plcs_expected_steps(len(s1), m1, m2)


def worst_case_bound(spec: RunSpec) -> Optional[int]:
    c1, c2 = spec.clusters()
    if spec.protocol is Protocol.PCS:
        return None
    if spec.protocol is Protocol.PPCS:
        return (c1.f + 1) * (c2.f + 1)
    s1, s2 = list_pair(_sf(spec.protocol), c1, c2)
    return list_faults(s1, c1) + list_faults(s2, c2) + 1


@dataclass(frozen=True)
class SweepRow:
    protocol: str
    n1: int
    f1: int
    n2: int
    f2: int
    analytic_expected: Optional[float]
    empirical_mean: float
    empirical_max: int
    trials: int
    ci95: float
    ok: bool


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)


def summarize(spec: RunSpec, results: list[TrialResult]) -> SweepRow:
    steps = [r.stats.cs_steps for r in results]
    mean = statistics.fmean(steps)
    sd = statistics.stdev(steps) if len(steps) > 1 else 0.0
    ci95 = 1.96 * sd / math.sqrt(len(steps))
    exact = analytic_expectation(spec) if spec.network.mode is Mode.SYNC else None
    bound = worst_case_bound(spec)
    ok = all(r.stats.confirmed for r in results) or spec.protocol is Protocol.PCS
    if exact is not None:
        ok = ok and within_band(mean, sd, len(steps), float(exact))
    elif spec.protocol is Protocol.PPCS and spec.network.mode is Mode.SYNC:
        c1, c2 = spec.clusters()
        pcs_mean = float(analysis.pcs_expected_steps(c1.n, c1.f, c2.n, c2.f))
        ok = ok and mean <= pcs_mean + 3 * sd / math.sqrt(len(steps))
    if bound is not None and spec.network.mode is Mode.SYNC:
        ok = ok and max(steps) <= bound
    return SweepRow(spec.protocol.value, spec.n1, spec.f1, spec.n2, spec.f2,
                    None if exact is None else float(exact), mean, max(steps), len(steps), ci95, ok)


# ------------------------------------------------------------------------ sweep
SWEEP_HEADER = (
    "f", "pcs_2f1", "plcs_2f1", "pcs_3f1", "plcs_3f1", "msgs_pcs_3f1", "msgs_plcs_3f1",
    "pbs_cs_3f1", "geobft_3f1", "chainspace_3f1",
)


def sweep_values(f: int) -> dict:
    """Exact curve values for one ``f`` of the equal-cluster comparison."""
    n2, n3 = 2 * f + 1, 3 * f + 1
    ref = analysis.reference_curves(n3, f, n3, f)
    pcs3 = analysis.pcs_expected_steps(n3, f, n3, f)
    plcs3 = analysis.pt_exact(n3, f, f)
    return {
        "f": f,
        "pcs_2f1": analysis.pcs_expected_steps(n2, f, n2, f),
        "plcs_2f1": analysis.pt_equal_half(f),
        "pcs_3f1": pcs3,
        "plcs_3f1": plcs3,
        "msgs_pcs_3f1": 2 * pcs3,
        "msgs_plcs_3f1": 2 * plcs3,
        "pbs_cs_3f1": ref.pbs_cs,
        "geobft_3f1": ref.geobft_opt,
        "chainspace_3f1": ref.chainspace,
    }


def sweep_csv(f_min: int = 0, f_max: int = 20, empirical_trials: int = 0, seed: int = 0) -> str:
    """Analytic curves per ``f`` at 12 significant digits.

    With ``empirical_trials > 0`` the Pcs and Plcs-min means for
    ``n = 2f + 1`` are appended as measured columns.
    """
    header = list(SWEEP_HEADER)
    if empirical_trials:
        header += ["emp_pcs_2f1", "emp_plcs_2f1"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for f in range(f_min, f_max + 1):
        vals = sweep_values(f)
        row = [f] + [analysis.fmt_decimal(vals[k]) for k in SWEEP_HEADER[1:]]
        if empirical_trials:
            n = 2 * f + 1
            for proto in (Protocol.PCS, Protocol.PLCS_MIN):
                spec = RunSpec(proto, n, f, n, f, trials=empirical_trials, seed=seed, check=False)
                res = run_campaign(spec)
                row.append(analysis.fmt_decimal(statistics.fmean(r.stats.cs_steps for r in res)))
        writer.writerow(row)
    return buf.getvalue()


def with_overrides(spec: RunSpec, **changes) -> RunSpec:
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(spec, **changes) if changes else spec

