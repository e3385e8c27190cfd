"""Model configuration: class parameters, critical load, thresholds and the join rule."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .errors import (
    ConfigError,
    CriticalLoadViolation,
    InvalidHazard,
    InvalidRate,
    NonMonotoneTheta,
    NonPositiveParam,
    RangeError,
)

SCHEMA_VERSION = 1
LOAD_TOL = 1e-9
INVERSE_TOL = 1e-12
THETA_TIE_TOL = 1e-12

JOIN = True
LEAVE = False


@dataclass(frozen=True)
class HazardSpec:
    """Waiting cost ``h``: continuous, strictly increasing, ``h(0) = 0``.

    ``linear``: ``a*x``; ``power``: ``a*x**p``; ``table``: piecewise linear
    through ``knots`` (first knot ``(0, 0)``), extended past the last knot
    with the slope of the final segment.
    """

    family: str
    a: float = 1.0
    p: float = 1.0
    knots: tuple = ()

    def __post_init__(self):
        if self.family in ("linear", "power"):
            if not (self.a > 0 and math.isfinite(self.a)):
                raise InvalidHazard(f"{self.family} hazard needs a > 0, got a={self.a}")
            if self.family == "power" and not (self.p > 0 and math.isfinite(self.p)):
                raise InvalidHazard(f"power hazard needs p > 0, got p={self.p}")
        elif self.family == "table":
            ks = self.knots
            if len(ks) < 2:
                raise InvalidHazard("table hazard needs at least two knots")
            if ks[0] != (0.0, 0.0):
                raise InvalidHazard(f"first knot must be (0, 0), got {ks[0]}")
            for (x0, y0), (x1, y1) in zip(ks, ks[1:]):
                if not (x1 > x0 and y1 > y0):
                    raise InvalidHazard(
                        f"knots must be strictly increasing in both coordinates: {(x0, y0)} -> {(x1, y1)}"
                    )
        else:
            raise InvalidHazard(f"unknown hazard family {self.family!r}")

    @classmethod
    def from_config(cls, raw: dict) -> "HazardSpec":
        _reject_unknown(raw, {"family", "params"}, "hazard")
        family = raw.get("family")
        params = raw.get("params") or {}
        if family == "linear":
            _reject_unknown(params, {"a"}, "hazard.params")
            return cls("linear", a=float(params.get("a", 1.0)))
        if family == "power":
            _reject_unknown(params, {"a", "p"}, "hazard.params")
            return cls("power", a=float(params.get("a", 1.0)), p=float(params["p"]))
        if family == "table":
            _reject_unknown(params, {"knots"}, "hazard.params")
            knots = tuple((float(x), float(y)) for x, y in params["knots"])
            return cls("table", knots=knots)
        raise InvalidHazard(f"unknown hazard family {family!r}")

    def to_config(self) -> dict:
        if self.family == "linear":
            return {"family": "linear", "params": {"a": self.a}}
        if self.family == "power":
            return {"family": "power", "params": {"a": self.a, "p": self.p}}
        return {"family": "table", "params": {"knots": [list(k) for k in self.knots]}}

    @property
    def sup(self) -> float:
        """Largest value the inverse is defined for."""
        if self.family == "table":
            return self.knots[-1][1]
        return math.inf

    def __call__(self, x: float) -> float:
        if x <= 0:
            return 0.0
        if self.family == "linear":
            return self.a * x
        if self.family == "power":
            return self.a * x**self.p
        ks = self.knots
        lo, hi = 0, len(ks) - 1
        if x >= ks[hi][0]:
            lo = hi - 1
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ks[mid][0] <= x:
                    lo = mid
                else:
                    hi = mid
        (x0, y0), (x1, y1) = ks[lo], ks[lo + 1]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def inverse(self, y: float) -> float:
        if y < 0:
            raise RangeError(f"hazard inverse undefined for negative value {y}")
        if self.family == "linear":
            return y / self.a
        if self.family == "power":
            return (y / self.a) ** (1.0 / self.p)
        if y > self.sup:
            raise RangeError(f"value {y} exceeds the hazard table maximum {self.sup}")
        lo, hi = 0.0, self.knots[-1][0]
        while hi - lo > INVERSE_TOL:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class IaDist:
    """Unit-mean inter-arrival law: exponential, deterministic or uniform of width ``param``."""

    kind: str = "exponential"
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind == "uniform":
            if self.param is None or not (0 < self.param < 2):
                raise NonPositiveParam(f"uniform inter-arrival width must lie in (0, 2), got {self.param}")
        elif self.kind not in ("exponential", "deterministic"):
            raise ConfigError(f"unknown inter-arrival kind {self.kind!r}")

    @property
    def c2(self) -> float:
        if self.kind == "exponential":
            return 1.0
        if self.kind == "deterministic":
            return 0.0
        return self.param**2 / 12.0

    def to_config(self) -> dict:
        return {"kind": self.kind, "param": self.param}


@dataclass(frozen=True)
class ClassParams:
    lam: float
    lam_hat: float
    mu: float
    r: float
    h: HazardSpec
    ia_dist: IaDist = field(default_factory=IaDist)

    @property
    def c2_ia(self) -> float:
        return self.ia_dist.c2


@dataclass(frozen=True)
class Model:
    """A validated N-class model. Build it with :func:`validate`."""

    classes: tuple
    rho: tuple
    theta: tuple
    M: Optional[int]

    @property
    def N(self) -> int:
        return len(self.classes)

    @property
    def lam(self) -> tuple:
        return tuple(c.lam for c in self.classes)

    @property
    def lam_hat(self) -> tuple:
        return tuple(c.lam_hat for c in self.classes)

    @property
    def mu(self) -> tuple:
        return tuple(c.mu for c in self.classes)

    @property
    def theta_ordered(self) -> bool:
        return self.M is not None

    def to_config(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "classes": [
                {
                    "lambda": c.lam,
                    "lambda_hat": c.lam_hat,
                    "mu": c.mu,
                    "r": c.r,
                    "hazard": c.h.to_config(),
                    "ia_dist": c.ia_dist.to_config(),
                }
                for c in self.classes
            ],
        }


def _reject_unknown(raw: Any, allowed: set, where: str) -> None:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(unknown)}")


def _positive(value: Any, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise NonPositiveParam(f"{name} must be positive, got {value!r}")
    return v


def _class_from_config(raw: dict, k: int) -> ClassParams:
    where = f"classes[{k}]"
    _reject_unknown(raw, {"lambda", "lambda_hat", "mu", "r", "hazard", "ia_dist"}, where)
    for key in ("lambda", "mu", "r", "hazard"):
        if key not in raw:
            raise ConfigError(f"{where} is missing {key!r}")
    ia_raw = raw.get("ia_dist") or {"kind": "exponential"}
    _reject_unknown(ia_raw, {"kind", "param"}, f"{where}.ia_dist")
    param = ia_raw.get("param")
    return ClassParams(
        lam=_positive(raw["lambda"], f"{where}.lambda"),
        lam_hat=float(raw.get("lambda_hat", 0.0)),
        mu=_positive(raw["mu"], f"{where}.mu"),
        r=_positive(raw["r"], f"{where}.r"),
        h=HazardSpec.from_config(raw["hazard"]),
        ia_dist=IaDist(ia_raw.get("kind", "exponential"), None if param is None else float(param)),
    )


def _theta_of(c: ClassParams) -> float:
    return c.lam * c.h.inverse(c.r)


def _ties(a: float, b: float) -> bool:
    return abs(a - b) <= THETA_TIE_TOL * max(1.0, abs(a), abs(b))


def validate(raw_config: dict | Model, require_ordered: bool = False) -> Model:
    """Check a parsed config and derive ``rho``, ``theta`` and ``M``.

    ``require_ordered`` enforces ``theta_1 >= ... >= theta_N`` (needed for SLQ);
    otherwise ``M`` is left as ``None`` when the ordering fails.
    """
    if isinstance(raw_config, Model):
        raw_config = raw_config.to_config()
    _reject_unknown(raw_config, {"classes", "schema_version"}, "config")
    version = raw_config.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    raw_classes = raw_config.get("classes")
    if not isinstance(raw_classes, list) or not raw_classes:
        raise ConfigError("config needs a nonempty 'classes' list")

    classes = tuple(_class_from_config(c, k) for k, c in enumerate(raw_classes))
    rho = tuple(c.lam / c.mu for c in classes)
    total = math.fsum(rho)
    if abs(total - 1.0) > LOAD_TOL:
        raise CriticalLoadViolation(f"sum of rho_i = {total!r}, must equal 1 (within {LOAD_TOL})")

    theta = tuple(_theta_of(c) for c in classes)
    for i, t in enumerate(theta, start=1):
        if not t > 0:
            raise NonPositiveParam(f"theta_{i} = {t} must be positive")

    bad = [
        (i, i + 1)
        for i in range(1, len(theta))
        if theta[i] > theta[i - 1] and not _ties(theta[i], theta[i - 1])
    ]
    if bad and require_ordered:
        raise NonMonotoneTheta(
            f"classes must be labeled with theta non-increasing; violated at index pairs {bad}", bad
        )
    M = None
    if not bad:
        M = min(i for i, t in enumerate(theta, start=1) if _ties(t, theta[-1]))
    return Model(classes=classes, rho=rho, theta=theta, M=M)


def load_config(path: str | Path, require_ordered: bool = False) -> Model:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate(raw, require_ordered=require_ordered)


def theta(model: Model, i: int) -> float:
    """Diffusion-scale queue threshold of class ``i`` (1-based)."""
    return _theta_of(model.classes[i - 1])


def arrival_rate_n(model: Model, i: int, n: int) -> float:
    c = model.classes[i - 1]
    rate = n * c.lam + math.sqrt(n) * c.lam_hat
    if not rate > 0:
        raise InvalidRate(f"class {i} arrival rate at n={n} is {rate}, must be positive")
    return rate


def join_decision(model: Model, i: int, q: int, n: int) -> bool:
    """Threshold rule: join iff the waiting cost predicted from ``q`` does not exceed ``r_i``."""
    c = model.classes[i - 1]
    return c.h(q / (math.sqrt(n) * c.lam)) <= c.r


def join_cutoff(model: Model, i: int, n: int) -> int:
    """Largest queue length ``q`` at which a class-``i`` arrival still joins."""
    q = max(0, int(math.floor(math.sqrt(n) * model.theta[i - 1])))
    while not join_decision(model, i, q, n) and q > 0:
        q -= 1
    while join_decision(model, i, q + 1, n):
        q += 1
    return q


def model_from_arrays(
    lam: Sequence[float],
    mu: Sequence[float],
    r: Sequence[float],
    lam_hat: Optional[Sequence[float]] = None,
    hazard: Optional[dict] = None,
    ia_dist: Optional[dict] = None,
    require_ordered: bool = False,
) -> Model:
    """Convenience constructor for the common all-classes-alike case."""
    lam_hat = lam_hat if lam_hat is not None else [0.0] * len(lam)
    hazard = hazard or {"family": "linear", "params": {"a": 1.0}}
    ia_dist = ia_dist or {"kind": "exponential", "param": None}
    raw = {
        "schema_version": SCHEMA_VERSION,
        "classes": [
            {"lambda": l, "lambda_hat": lh, "mu": m, "r": rr, "hazard": hazard, "ia_dist": ia_dist}
            for l, lh, m, rr in zip(lam, lam_hat, mu, r)
        ],
    }
    return validate(raw, require_ordered=require_ordered)
