"""Reflection map, limit drifts and Euler integration of the reflected limit SDEs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidStart, SlqLimitUndefined
from .model import Model

FP = "fp"
SLQ = "slq"
BOUND_TOL = 1e-12
DEFAULT_DT = 1e-3
_CHUNK = 256


@dataclass
class SkorohodResult:
    y: np.ndarray
    g: np.ndarray


@dataclass
class SdePath:
    kind: str
    dt: float
    t: np.ndarray
    X: np.ndarray
    L: np.ndarray
    Q: np.ndarray
    Psi: np.ndarray


def skorohod_map(f, bound: float) -> SkorohodResult:
    """Push ``1.f`` below ``bound`` by a minimal nondecreasing regulator acting on the last coordinate.

    ``f`` holds the sample values of a step path, shape ``(m, N)``.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    excess = np.maximum(f.sum(axis=1) - bound, 0.0)
    g = np.maximum.accumulate(excess)
    y = f.copy()
    y[:, -1] -= g
    return SkorohodResult(y=y, g=g)


def drift_fp(y, mu) -> np.ndarray:
    """Limit drift under fixed priority; works on one state or a stack of states."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    b = -mu * y
    pos = np.maximum(y.sum(axis=-1), 0.0)
    b[..., -1] += mu[-1] * pos
    return b


def drift_slq(y, mu) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    share = np.maximum(y.sum(axis=-1), 0.0) / y.shape[-1]
    return -mu * (y - share[..., None])


def limit_queues(X, kind: str):
    """Queue and in-service components of a limit state path ``X`` (shape ``(m, N)``)."""
    X = np.asarray(X, dtype=float)
    pos = np.maximum(X.sum(axis=-1), 0.0)
    Q = np.zeros_like(X)
    if kind == FP:
        Q[..., -1] = pos
    elif kind == SLQ:
        Q[...] = (pos / X.shape[-1])[..., None]
    else:
        raise ValueError(f"kind must be 'fp' or 'slq', got {kind!r}")
    return Q, X - Q


def covariance_diag(model: Model) -> np.ndarray:
    return np.array([c.lam * (c.c2_ia + 1.0) for c in model.classes])


def bm_increment(model: Model, dt: float, draw_source: np.random.Generator, lambda_hat=None, noise: bool = True) -> np.ndarray:
    """One increment of the Brownian motion with drift ``lambda_hat`` and covariance ``diag(lambda_i (C2_i + 1))``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    lh = np.asarray(model.lam_hat if lambda_hat is None else lambda_hat, dtype=float)
    inc = lh * dt
    if noise:
        inc = inc + np.sqrt(dt * covariance_diag(model)) * draw_source.standard_normal(model.N)
    return inc


def limit_bound(kind: str, model: Model) -> float:
    if kind == FP:
        return model.theta[-1]
    if kind == SLQ:
        if model.M is None or model.M < model.N:
            raise SlqLimitUndefined(
                f"SLQ diffusion limit is identified only when theta_N is the unique minimum (M = N); "
                f"here M={model.M}, N={model.N}"
            )
        return model.N * model.theta[-1]
    raise ValueError(f"kind must be 'fp' or 'slq', got {kind!r}")


def path_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def simulate_sde(
    kind: str,
    model: Model,
    x0: Optional[Sequence[float]] = None,
    dt: float = DEFAULT_DT,
    T: float = 1.0,
    seed: int = 0,
    n_paths: int = 1,
    *,
    sample_times: Optional[Sequence[float]] = None,
    noise: bool = True,
    lambda_hat: Optional[Sequence[float]] = None,
    zero_drift: bool = False,
    first_path: int = 0,
) -> List[SdePath]:
    """Euler scheme with a one-step reflection after every increment.

    Path ``p`` uses the noise stream keyed by ``(seed, first_path + p)``, so any
    subset of paths can be regenerated on its own. States are recorded at every
    grid point, or only at the grid points nearest to ``sample_times``.
    ``noise=False``, ``lambda_hat`` and ``zero_drift`` are deterministic test modes.
    """
    bound = limit_bound(kind, model)
    N = model.N
    x0 = np.zeros(N) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (N,):
        raise InvalidStart(f"x0 must have {N} coordinates")
    if x0.sum() > bound + BOUND_TOL:
        raise InvalidStart(f"1.x0 = {x0.sum()} exceeds the bound {bound}")
    if not (dt > 0 and T > 0):
        raise ValueError("dt and T must be positive")
    steps = int(round(T / dt))
    if sample_times is None:
        rec_idx = np.arange(steps + 1)
    else:
        rec_idx = np.array([int(round(t / dt)) for t in sample_times])
        if (rec_idx < 0).any() or (rec_idx > steps).any():
            raise ValueError("sample_times must lie in [0, T]")
    want = np.zeros(steps + 1, dtype=bool)
    want[rec_idx] = True
    order = {k: pos for pos, k in enumerate(sorted(set(rec_idx.tolist())))}

    mu = np.asarray(model.mu)
    lh = np.asarray(model.lam_hat if lambda_hat is None else lambda_hat, dtype=float)
    scale = np.sqrt(dt * covariance_diag(model))
    drift = drift_fp if kind == FP else drift_slq
    gens = [path_generator(seed, first_path + p) for p in range(n_paths)] if noise else []

    X = np.tile(x0, (n_paths, 1))
    L = np.zeros(n_paths)
    n_rec = len(order)
    Xs = np.empty((n_rec, n_paths, N))
    Ls = np.empty((n_rec, n_paths))
    if want[0]:
        Xs[order[0]] = X
        Ls[order[0]] = L

    k = 0
    while k < steps:
        chunk = min(_CHUNK, steps - k)
        if noise:
            Z = np.stack([g.standard_normal((chunk, N)) for g in gens], axis=1)
        for c in range(chunk):
            inc = lh * dt
            if not zero_drift:
                inc = inc + drift(X, mu) * dt
            Xn = X + inc
            if noise:
                Xn += scale * Z[c]
            dL = np.maximum(Xn.sum(axis=1) - bound, 0.0)
            Xn[:, -1] -= dL
            L = L + dL
            X = Xn
            k += 1
            if want[k]:
                Xs[order[k]] = X
                Ls[order[k]] = L

    t = np.array(sorted(order)) * dt
    paths = []
    for p in range(n_paths):
        Xp = Xs[:, p, :].copy()
        Qp, Psip = limit_queues(Xp, kind)
        paths.append(SdePath(kind=kind, dt=dt, t=t, X=Xp, L=Ls[:, p].copy(), Q=Qp, Psi=Psip))
    return paths


def marginal_samples(paths: List[SdePath], t: float) -> np.ndarray:
    """``X(t)`` across paths, shape ``(n_paths, N)``."""
    out = []
    for p in paths:
        k = int(np.argmin(np.abs(p.t - t)))
        if not math.isclose(p.t[k], t, abs_tol=p.dt / 2):
            raise ValueError(f"time {t} was not recorded")
        out.append(p.X[k])
    return np.array(out)
