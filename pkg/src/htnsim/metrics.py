"""Diffusion scaling of traces and the quantities computed from it.

All suprema over continuous time are taken at step-path breakpoints, which is
exact for piecewise-constant paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .engine import FP, EventTrace
from .errors import CensoredWait, HorizonExceedsTrace
from .model import Model


@dataclass
class ScaledPath:
    """Scaled step paths on ``[0, T]``; row ``k`` holds values on ``[times[k], times[k+1])``.

    ``Bhat`` carries a linear centring term, so it is exact only at ``times``.
    ``joiners[i]`` maps to arrays ``(at, qhat_before, wthat)`` for class-``i``
    joiners with arrival time at most ``T``; ``wthat`` is NaN when unrouted.
    """

    n: int
    T: float
    times: np.ndarray
    Qhat: np.ndarray
    Rhat: np.ndarray
    Psihat: np.ndarray
    Xhat: np.ndarray
    Bhat: np.ndarray
    joiners: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class PayoffOutcome:
    i: int
    j: int
    value: float
    case: str  # "reneged" | "joined" | "post-horizon"


def scale(trace: EventTrace, T: float) -> ScaledPath:
    if T > trace.end_time:
        raise HorizonExceedsTrace(f"T={T} exceeds trace end {trace.end_time}")
    n = trace.n
    rn = math.sqrt(n)
    rows = int(np.searchsorted(trace.times, T, side="right"))
    times = trace.times[:rows]
    rho = np.asarray(trace.model.rho)
    lam = np.asarray(trace.model.lam)
    Qhat = trace.Q[:rows] / rn
    Psihat = (trace.Psi[:rows] - rho * n) / rn
    Xhat = Qhat + Psihat
    tol = 4e-9 * rn + 1e-12
    gap = np.abs(Qhat.sum(axis=1) - np.maximum(Xhat.sum(axis=1), 0.0))
    if (gap > tol).any():
        k = int(np.argmax(gap))
        raise RuntimeError(f"1.Qhat != (1.Xhat)^+ at t={times[k]} (gap {gap[k]})")

    joiners = {}
    for i, recs in trace.customers.items():
        sel = [r for r in recs if r.joined and r.at <= T]
        at = np.array([r.at for r in sel])
        qb = np.array([r.q_observed for r in sel], dtype=float) / rn
        wt = np.array([np.nan if r.rt is None else r.rt - r.at for r in sel]) * rn
        joiners[i] = (at, qb, wt)

    return ScaledPath(
        n=n,
        T=T,
        times=times,
        Qhat=Qhat,
        Rhat=trace.R[:rows] / rn,
        Psihat=Psihat,
        Xhat=Xhat,
        Bhat=(trace.B[:rows] - n * lam * times[:, None]) / rn,
        joiners=joiners,
    )


def rsp_gap(scaled: ScaledPath, model: Model, T: float) -> np.ndarray:
    """Per-class worst snapshot error ``|Qhat(AT-) + 1/sqrt(n) - lambda_i * WThat|`` over joiners by ``T``."""
    inv = 1.0 / math.sqrt(scaled.n)
    out = np.zeros(model.N)
    for i in range(1, model.N + 1):
        at, qb, wt = scaled.joiners.get(i, (np.empty(0),) * 3)
        keep = at <= T
        if not keep.any():
            continue
        if np.isnan(wt[keep]).any():
            raise CensoredWait(f"class-{i} joiner arriving by T={T} has no realized wait")
        out[i - 1] = np.max(np.abs(qb[keep] + inv - model.lam[i - 1] * wt[keep]))
    return out


def payoff(trace: EventTrace, customer: Tuple[int, int], T_bar: float, model: Model) -> PayoffOutcome:
    """Cost of ``customer`` in ``trace``: ``r_i`` for leaving, ``h_i(sqrt(n) WT)`` for joining, 0 after ``T_bar``."""
    i, j = customer
    rec = trace.record(i, j)
    if rec is None:
        if T_bar > trace.end_time:
            raise CensoredWait(f"customer {customer} not in trace and T_bar exceeds trace end")
        return PayoffOutcome(i, j, 0.0, "post-horizon")
    if rec.at > T_bar:
        return PayoffOutcome(i, j, 0.0, "post-horizon")
    c = model.classes[i - 1]
    if not rec.joined:
        return PayoffOutcome(i, j, c.r, "reneged")
    if rec.rt is None:
        raise CensoredWait(f"customer {customer} joined but was never routed")
    return PayoffOutcome(i, j, c.h(math.sqrt(trace.n) * (rec.rt - rec.at)), "joined")


def nash_gap(ref_trace: EventTrace, dev_trace: EventTrace, customer: Tuple[int, int], T_bar: float, model: Model) -> float:
    """Cost under the threshold rule minus cost under its negation; violation iff above epsilon."""
    return payoff(ref_trace, customer, T_bar, model).value - payoff(dev_trace, customer, T_bar, model).value


def modulus(times, values, window: float, T: float) -> float:
    """Modulus of continuity ``w_T(f, window)`` of a right-continuous step path.

    Takes the supremum of ``|f(u) - f(s)|`` over ``0 <= s < u <= s + window <= T``.
    """
    if not 0 < window <= T:
        raise ValueError("need 0 < window <= T")
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = t <= T
    t, v = t[keep], v[keep]
    if v.ndim == 1:
        v = v[:, None]
    nxt = np.append(t[1:], T)
    best = 0.0
    last_s = T - window
    for a in range(len(t) - 1):
        if t[a] > last_s:
            break
        b_hi = int(np.searchsorted(t, nxt[a] + window, side="left"))
        if b_hi <= a + 1:
            continue
        d = v[a + 1 : b_hi] - v[a]
        best = max(best, float(np.sqrt((d * d).sum(axis=1)).max()))
    return best


def ssc_metric(scaled: ScaledPath, policy: str, T: float) -> float:
    """FP: largest scaled queue among classes ``1..N-1``; SLQ: worst distance from equal queues."""
    rows = int(np.searchsorted(scaled.times, T, side="right"))
    Q = scaled.Qhat[:rows]
    if policy == FP:
        if Q.shape[1] < 2:
            return 0.0
        return float(Q[:, :-1].max())
    N = Q.shape[1]
    share = np.maximum(scaled.Xhat[:rows].sum(axis=1), 0.0) / N
    return float(np.abs(Q - share[:, None]).max())


def run_metrics(trace: EventTrace, T: float) -> dict:
    """One metrics-CSV row worth of numbers for a single trace."""
    sp = scale(trace, T)
    rows = len(sp.times)
    return {
        "gamma": rsp_gap(sp, trace.model, T),
        "ssc": ssc_metric(sp, trace.policy, T),
        "max_Qhat": sp.Qhat.max(axis=0),
        "reneg_count": trace.R[rows - 1].copy(),
    }
