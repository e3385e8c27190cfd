"""Monte Carlo experiments: snapshot-gap and collapse sweeps, sampled-deviator Nash checks,
and simulation-versus-SDE marginal comparison."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .diffusion import DEFAULT_DT, limit_bound, marginal_samples, simulate_sde
from .engine import Scenario, arrivals_by, run, run_coupled
from .errors import DeviatorNotArrived, EmptySample, HtnError
from .metrics import nash_gap, run_metrics
from .model import Model

QUANTILES = (("median", 0.5), ("p90", 0.9))
_Z95 = 1.959963984540054


@dataclass
class ExperimentPlan:
    model: Model
    policy: str
    n_list: Sequence[int]
    replications: int = 1
    horizon: float = 5.0
    metric_horizon: Optional[float] = None
    seed: int = 0
    deviators: int = 10
    eps: float = 0.1
    dt: float = DEFAULT_DT
    n_paths: int = 1000
    comparison_times: Sequence[float] = (2.0, 5.0)
    workers: Optional[int] = None

    def __post_init__(self):
        self.n_list = [int(n) for n in self.n_list]
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be nonempty and strictly increasing")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.metric_horizon is None:
            self.metric_horizon = self.horizon

    @property
    def T(self) -> float:
        return self.metric_horizon


@dataclass
class Report:
    kind: str
    policy: str
    rows: List[Tuple[str, int, str, str, float]] = field(default_factory=list)
    runs: List[dict] = field(default_factory=list)
    failures: List[Tuple[int, int, str, str]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add(self, metric: str, n: int, cls, quantile: str, value: float) -> None:
        self.rows.append((metric, int(n), "" if cls is None else str(cls), quantile, float(value)))

    def value(self, metric: str, n: int, cls=None, quantile: str = "median") -> float:
        key = "" if cls is None else str(cls)
        for m, nn, c, q, v in self.rows:
            if m == metric and nn == n and c == key and q == quantile:
                return v
        raise KeyError((metric, n, cls, quantile))

    def summary(self) -> str:
        lines = [f"{self.kind} experiment, policy={self.policy}"]
        lines.extend(self.notes)
        if self.failures:
            lines.append(f"{len(self.failures)} replication(s) failed and were excluded:")
            lines.extend(f"  n={n} rep={r} {s}: {e}" for n, r, s, e in self.failures)
        width = max((len(m) for m, *_ in self.rows), default=6)
        for m, n, c, q, v in self.rows:
            lines.append(f"  {m:<{width}}  n={n:<6d} class={c or '-':<3} {q:<8} {v:.6g}")
        return "\n".join(lines) + "\n"


def default_workers() -> int:
    env = os.environ.get("HTN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn: Callable, tasks: Iterable, workers: Optional[int]) -> list:
    tasks = list(tasks)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _quantiles(values) -> List[Tuple[str, float]]:
    v = np.sort(np.asarray(values, dtype=float))
    return [(name, float(np.quantile(v, q))) for name, q in QUANTILES] + [("mean", float(v.mean()))]


def binomial_interval(successes: int, trials: int) -> Tuple[float, float]:
    """95% normal-approximation interval, clipped to [0, 1]."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    half = _Z95 * math.sqrt(p * (1 - p) / trials)
    return max(0.0, p - half), min(1.0, p + half)


def violation_fraction(gaps: Sequence[float], eps: float) -> float:
    gaps = np.asarray(gaps, dtype=float)
    return float((gaps > eps).mean()) if gaps.size else 0.0


def ks_distance(samples_a, samples_b) -> float:
    """Two-sample Kolmogorov-Smirnov distance, exact over the pooled sample points."""
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    pooled = np.concatenate((a, b))
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.abs(fa - fb).max())


# --- snapshot principle and state-space collapse ---------------------------------


def _reference_task(args):
    plan, n, rep = args
    try:
        tr = run(plan.model, plan.policy, Scenario.reference(), n, plan.horizon, plan.seed, rep)
        return n, rep, run_metrics(tr, plan.T), None
    except HtnError as exc:
        return n, rep, None, f"{type(exc).__name__}: {exc}"


def metrics_row(n: int, rep: int, policy: str, scenario: str, m: dict) -> dict:
    row = {"replication": rep, "scenario": scenario, "n": n, "policy": policy}
    for k, g in enumerate(m["gamma"], start=1):
        row[f"gamma_{k}"] = float(g)
    row["ssc"] = float(m["ssc"])
    for k, q in enumerate(m["max_Qhat"], start=1):
        row[f"max_Qhat_{k}"] = float(q)
    for k, c in enumerate(m["reneg_count"], start=1):
        row[f"reneg_count_{k}"] = int(c)
    return row


def rsp_experiment(plan: ExperimentPlan) -> Report:
    """Reference-scenario sweep over ``n``: snapshot gap, collapse metric, queue maxima, reneging."""
    N = plan.model.N
    report = Report("rsp", plan.policy)
    report.notes.append(
        f"replications={plan.replications} horizon={plan.horizon} metric_horizon={plan.T} seed={plan.seed}"
    )
    tasks = [(plan, n, rep) for n in plan.n_list for rep in range(plan.replications)]
    results = _map(_reference_task, tasks, plan.workers)
    for n in plan.n_list:
        ok = []
        for nn, rep, m, err in results:
            if nn != n:
                continue
            if err is not None:
                report.failures.append((n, rep, "ref", err))
                continue
            ok.append(m)
            report.runs.append(metrics_row(n, rep, plan.policy, "ref", m))
        if not ok:
            continue
        for i in range(N):
            for name, key in (("gamma", "gamma"), ("max_Qhat", "max_Qhat"), ("reneg_count", "reneg_count")):
                for q, v in _quantiles([m[key][i] for m in ok]):
                    report.add(name, n, i + 1, q, v)
        for q, v in _quantiles([m["ssc"] for m in ok]):
            report.add("ssc", n, None, q, v)
    return report


# --- sampled-deviator Nash check ---------------------------------------------------


def sample_deviators(ref, plan: ExperimentPlan, n: int, rep: int) -> List[Tuple[int, int]]:
    """Stratified by class (round robin); ``j`` uniform over class arrivals by the game horizon."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(plan.seed), spawn_key=(rep, n, 7))))
    N = plan.model.N
    counts = [arrivals_by(ref, i, plan.horizon) for i in range(1, N + 1)]
    out = []
    for k in range(plan.deviators):
        i = k % N + 1
        j = int(rng.integers(1, counts[i - 1] + 1)) if counts[i - 1] else 1
        out.append((i, j))
    return out


def _nash_task(args):
    plan, n, rep = args
    try:
        ref = run(plan.model, plan.policy, Scenario.reference(), n, plan.horizon, plan.seed, rep)
    except HtnError as exc:
        return n, rep, None, f"{type(exc).__name__}: {exc}"
    gaps = []
    for dev in sample_deviators(ref, plan, n, rep):
        try:
            _, dtr = run_coupled(plan.model, plan.policy, n, plan.horizon, plan.seed, rep, dev, reference=ref)
            gap = nash_gap(ref, dtr, dev, plan.horizon, plan.model)
        except DeviatorNotArrived:
            gap = 0.0
        except HtnError as exc:
            return n, rep, None, f"{type(exc).__name__} at deviator {dev}: {exc}"
        gaps.append((dev[0], dev[1], gap))
    return n, rep, gaps, None


def nash_experiment(plan: ExperimentPlan) -> Report:
    report = Report("nash", plan.policy)
    report.notes.append(
        f"deviators per replication={plan.deviators} replications={plan.replications} "
        f"eps={plan.eps} horizon={plan.horizon} seed={plan.seed}"
    )
    tasks = [(plan, n, rep) for n in plan.n_list for rep in range(plan.replications)]
    results = _map(_nash_task, tasks, plan.workers)
    for n in plan.n_list:
        gaps = []
        by_class = {}
        for nn, rep, g, err in results:
            if nn != n:
                continue
            if err is not None:
                report.failures.append((n, rep, "nash", err))
                continue
            for i, j, gap in g:
                gaps.append(gap)
                by_class.setdefault(i, []).append(gap)
                report.runs.append({"n": n, "replication": rep, "class": i, "j": j, "gap": gap})
        if not gaps:
            continue
        viol = int(sum(g > plan.eps for g in gaps))
        lo, hi = binomial_interval(viol, len(gaps))
        report.add("nash_violation_fraction", n, None, "value", viol / len(gaps))
        report.add("nash_violation_fraction", n, None, "ci95_low", lo)
        report.add("nash_violation_fraction", n, None, "ci95_high", hi)
        report.add("nash_deviators", n, None, "count", len(gaps))
        for i in sorted(by_class):
            report.add("nash_violation_fraction", n, i, "value", violation_fraction(by_class[i], plan.eps))
            for q, v in _quantiles(by_class[i]):
                report.add("nash_gap", n, i, q, v)
            report.add("nash_gap", n, i, "max", max(by_class[i]))
    return report


# --- simulation versus limit SDE -------------------------------------------------


def scaled_state_at(trace, t: float) -> np.ndarray:
    k = trace.row_at(t)
    rho = np.asarray(trace.model.rho)
    return (trace.Q[k] + trace.Psi[k] - rho * trace.n) / math.sqrt(trace.n)


def _marginal_task(args):
    plan, n, rep, t_run = args
    try:
        tr = run(plan.model, plan.policy, Scenario.reference(), n, t_run, plan.seed, rep)
        return n, rep, [scaled_state_at(tr, t) for t in plan.comparison_times], None
    except HtnError as exc:
        return n, rep, None, f"{type(exc).__name__}: {exc}"


def compare_marginals(plan: ExperimentPlan, sde_seed: Optional[int] = None) -> Report:
    """KS distances between simulated ``Xhat(t*)`` and limit-SDE ``X(t*)`` per coordinate and time."""
    limit_bound(plan.policy, plan.model)  # raises SlqLimitUndefined for SLQ with M < N
    times = list(plan.comparison_times)
    t_run = max([plan.horizon] + times)
    report = Report("compare", plan.policy)
    report.notes.append(
        f"replications={plan.replications} sde_paths={plan.n_paths} dt={plan.dt} times={times} seed={plan.seed}"
    )
    paths = simulate_sde(
        plan.policy,
        plan.model,
        dt=plan.dt,
        T=max(times),
        seed=plan.seed if sde_seed is None else sde_seed,
        n_paths=plan.n_paths,
        sample_times=times,
    )
    sde = {t: marginal_samples(paths, t) for t in times}
    tasks = [(plan, n, rep, t_run) for n in plan.n_list for rep in range(plan.replications)]
    results = _map(_marginal_task, tasks, plan.workers)
    for n in plan.n_list:
        samples = {t: [] for t in times}
        for nn, rep, xs, err in results:
            if nn != n:
                continue
            if err is not None:
                report.failures.append((n, rep, "ref", err))
                continue
            for t, x in zip(times, xs):
                samples[t].append(x)
        if not samples[times[0]]:
            continue
        for t in times:
            sim = np.array(samples[t])
            for i in range(plan.model.N):
                report.add("ks", n, i + 1, f"t={t:g}", ks_distance(sim[:, i], sde[t][:, i]))
                report.add("sim_mean", n, i + 1, f"t={t:g}", float(sim[:, i].mean()))
                report.add("sde_mean", n, i + 1, f"t={t:g}", float(sde[t][:, i].mean()))
    return report
