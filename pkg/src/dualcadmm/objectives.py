"""
Per-agent convex objectives with closed-form proximal operators.

Every objective supports ``prox(obj, v, lam)`` which returns

    argmin_y  f(y) + 1/(2*lam) * ||y - v||^2

and ``evaluate(obj, v)``.  Conjugates are never formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class ObjectiveError(ValueError):
    """Malformed objective data or a dimension mismatch."""


@dataclass(frozen=True)
class L1:
    """``weight * ||x||_1``; ``dim`` is optional for standalone use."""

    weight: float = 1.0
    dim: int | None = None

    def __post_init__(self):
        if self.weight < 0:
            raise ObjectiveError("l1 weight must be nonnegative")


@dataclass(eq=False)
class Quadratic:
    """``0.5 x'Px + q'x + c`` with symmetric positive semidefinite ``P``."""

    P: np.ndarray
    q: np.ndarray | None = None
    c: float = 0.0
    _factors: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[0] != P.shape[1]:
            raise ObjectiveError(f"P must be square, got shape {P.shape}")
        if not np.allclose(P, P.T, rtol=0, atol=1e-12 * (1 + np.abs(P).max())):
            raise ObjectiveError("P must be symmetric")
        P = 0.5 * (P + P.T)
        if P.size and np.linalg.eigvalsh(P).min() < -1e-8:
            raise ObjectiveError("P has a negative eigenvalue; objective is not convex")
        q = np.zeros(P.shape[0]) if self.q is None else np.asarray(self.q, dtype=float)
        if q.shape != (P.shape[0],):
            raise ObjectiveError("q does not match P")
        self.P, self.q, self.c = P, q, float(self.c)

    @property
    def dim(self):
        return self.P.shape[0]

    def _factor(self, lam):
        # prox is called with a fixed lam every outer iteration
        fac = self._factors.get(lam)
        if fac is None:
            fac = cho_factor(np.eye(self.dim) + lam * self.P)
            self._factors[lam] = fac
        return fac


@dataclass(eq=False)
class IndicatorPoint:
    value: np.ndarray

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float))

    @property
    def dim(self):
        return self.value.shape[0]


@dataclass(eq=False)
class IndicatorBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape:
            raise ObjectiveError("box bounds differ in shape")
        if np.any(self.lo > self.hi):
            raise ObjectiveError("box needs lo <= hi")

    @property
    def dim(self):
        return self.lo.shape[0]


@dataclass(eq=False)
class SeparableSum:
    """Sum of objectives acting on disjoint, covering index ranges.

    ``parts`` is a sequence of ``(objective, (start, stop))`` pairs.
    """

    parts: list

    def __post_init__(self):
        parts = []
        pos = 0
        for obj, rng in sorted(self.parts, key=lambda p: p[1][0]):
            start, stop = int(rng[0]), int(rng[1])
            if start != pos or stop <= start:
                raise ObjectiveError("separable sum ranges must be contiguous and cover 0..n")
            d = getattr(obj, "dim", None)
            if d is not None and d != stop - start:
                raise ObjectiveError(f"part of dimension {d} placed on range {start}:{stop}")
            parts.append((obj, slice(start, stop)))
            pos = stop
        self.parts = parts

    @property
    def dim(self):
        return self.parts[-1][1].stop


Objective = Union[L1, Quadratic, IndicatorPoint, IndicatorBox, SeparableSum]


def zero_objective(n: int) -> Quadratic:
    return Quadratic(np.zeros((n, n)))


def _vec(obj, v):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = getattr(obj, "dim", None)
    if v.ndim != 1 or (d is not None and v.shape[0] != d):
        raise ObjectiveError(f"vector of shape {v.shape} does not match objective dimension {d}")
    return v


def prox(obj: Objective, v, lam: float) -> np.ndarray:
    """Proximal operator of ``obj`` with step ``lam > 0``."""
    if not lam > 0:
        raise ObjectiveError(f"prox step must be positive, got {lam}")
    return _prox(obj, _vec(obj, v), lam)


def _prox(obj, v, lam):
    if isinstance(obj, L1):
        thresh = lam * obj.weight
        return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)
    if isinstance(obj, Quadratic):
        # (I + lam P) y = v - lam q
        return cho_solve(obj._factor(lam), v - lam * obj.q)
    if isinstance(obj, IndicatorPoint):
        return obj.value.copy()
    if isinstance(obj, IndicatorBox):
        return np.clip(v, obj.lo, obj.hi)
    if isinstance(obj, SeparableSum):
        out = np.empty_like(v)
        for part, sl in obj.parts:
            out[sl] = _prox(part, v[sl], lam)
        return out
    raise TypeError(f"unknown objective {obj!r}")


def evaluate(obj: Objective, v, tol=1e-9) -> float:
    """Objective value, ``inf`` outside an indicator's domain.

    Membership uses the tolerance ``tol * (1 + ||v||)``.
    """
    v = _vec(obj, v)
    return _eval(obj, v, tol * (1.0 + np.linalg.norm(v)))


def _eval(obj, v, slack):
    if isinstance(obj, L1):
        return obj.weight * float(np.abs(v).sum())
    if isinstance(obj, Quadratic):
        return float(0.5 * v @ obj.P @ v + obj.q @ v + obj.c)
    if isinstance(obj, IndicatorPoint):
        return 0.0 if np.linalg.norm(v - obj.value) <= slack else np.inf
    if isinstance(obj, IndicatorBox):
        ok = np.all(v >= obj.lo - slack) and np.all(v <= obj.hi + slack)
        return 0.0 if ok else np.inf
    if isinstance(obj, SeparableSum):
        return float(sum(_eval(part, v[sl], slack) for part, sl in obj.parts))
    raise TypeError(f"unknown objective {obj!r}")


class LocalModel(NamedTuple):
    """Smooth model of an objective on the piece containing a point.

    Coordinates where ``fixed`` is set sit on a kink or bound and are held at
    ``value``; on the free coordinates the objective agrees locally with
    ``lin @ x + 0.5 * x @ hess @ x`` up to a constant.
    """

    fixed: np.ndarray
    value: np.ndarray
    lin: np.ndarray
    hess: np.ndarray


def local_model(obj: Objective, x) -> LocalModel:
    x = _vec(obj, x)
    n = x.shape[0]
    fixed = np.zeros(n, dtype=bool)
    value = x.copy()
    lin = np.zeros(n)
    hess = np.zeros((n, n))
    _fill_model(obj, x, fixed, value, lin, hess, slice(0, n))
    return LocalModel(fixed, value, lin, hess)


def _fill_model(obj, x, fixed, value, lin, hess, sl):
    xs = x[sl]
    if isinstance(obj, L1):
        zero = xs == 0.0
        fixed[sl] = zero
        value[sl] = np.where(zero, 0.0, xs)
        lin[sl] = obj.weight * np.sign(xs)
    elif isinstance(obj, Quadratic):
        lin[sl] = obj.q
        hess[sl, sl] = obj.P
    elif isinstance(obj, IndicatorPoint):
        fixed[sl] = True
        value[sl] = obj.value
    elif isinstance(obj, IndicatorBox):
        at_lo, at_hi = xs <= obj.lo, xs >= obj.hi
        fixed[sl] = at_lo | at_hi
        value[sl] = np.where(at_lo, obj.lo, np.where(at_hi, obj.hi, xs))
    elif isinstance(obj, SeparableSum):
        base = sl.start
        for part, psl in obj.parts:
            _fill_model(part, x, fixed, value, lin, hess,
                        slice(base + psl.start, base + psl.stop))
    else:
        raise TypeError(f"unknown objective {obj!r}")


def objective_dim(obj: Objective) -> int | None:
    return getattr(obj, "dim", None)


# --- serialization -------------------------------------------------------

def objective_to_dict(obj: Objective) -> dict:
    if isinstance(obj, L1):
        out = {"type": "l1", "weight": obj.weight}
        if obj.dim is not None:
            out["dim"] = obj.dim
        return out
    if isinstance(obj, Quadratic):
        return {"type": "quadratic", "P": obj.P.tolist(), "q": obj.q.tolist(), "c": obj.c}
    if isinstance(obj, IndicatorPoint):
        return {"type": "point", "value": obj.value.tolist()}
    if isinstance(obj, IndicatorBox):
        return {"type": "box", "lo": obj.lo.tolist(), "hi": obj.hi.tolist()}
    if isinstance(obj, SeparableSum):
        return {"type": "sum", "parts": [
            {"objective": objective_to_dict(p), "start": sl.start, "stop": sl.stop}
            for p, sl in obj.parts
        ]}
    raise TypeError(f"unknown objective {obj!r}")


def objective_from_dict(data: dict) -> Objective:
    kind = data.get("type")
    if kind == "l1":
        dim = data.get("dim")
        return L1(float(data.get("weight", 1.0)), None if dim is None else int(dim))
    if kind == "quadratic":
        P = np.asarray(data["P"], dtype=float)
        return Quadratic(P, data.get("q"), float(data.get("c", 0.0)))
    if kind == "zero":
        return zero_objective(int(data["dim"]))
    if kind == "point":
        return IndicatorPoint(data["value"])
    if kind == "box":
        return IndicatorBox(data["lo"], data["hi"])
    if kind == "sum":
        return SeparableSum([
            (objective_from_dict(p["objective"]), (p["start"], p["stop"]))
            for p in data["parts"]
        ])
    raise ObjectiveError(f"unknown objective type {kind!r}")
