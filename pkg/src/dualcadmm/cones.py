"""
Closed convex cones and their exact Euclidean projections.

Supported cones are the zero cone, the nonnegative orthant, the second-order
cone, Cartesian products of these, and the polar of any of them.  Second-order
cone vectors follow the ``(z, t)`` convention: the last entry is ``t`` and the
cone is ``{(z, t) : ||z||_2 <= t}``.

The projection onto the polar cone is always computed through the Moreau
decomposition ``v = proj_K(v) + proj_polar(v)``, so the two projections add up
to ``v`` bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import math

import numpy as np


class ConeDimensionError(ValueError):
    """Raised when a vector does not match the ambient dimension of a cone."""


@dataclass(frozen=True)
class Zero:
    dim: int

    def __post_init__(self):
        _check_leaf_dim(self.dim)


@dataclass(frozen=True)
class NonnegOrthant:
    dim: int

    def __post_init__(self):
        _check_leaf_dim(self.dim)


@dataclass(frozen=True)
class SecondOrder:
    dim: int

    def __post_init__(self):
        _check_leaf_dim(self.dim)


@dataclass(frozen=True)
class Product:
    parts: tuple
    offsets: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("product cone needs at least one part")
        object.__setattr__(self, "parts", parts)
        offsets = [0]
        for part in parts:
            offsets.append(offsets[-1] + cone_dim(part))
        object.__setattr__(self, "offsets", tuple(offsets))

    @property
    def dim(self):
        return self.offsets[-1]

    def blocks(self):
        for part, lo, hi in zip(self.parts, self.offsets[:-1], self.offsets[1:]):
            yield part, slice(lo, hi)


@dataclass(frozen=True)
class Polar:
    """The polar cone of ``base``.  ``Polar(Polar(K))`` behaves as ``K``."""

    base: object

    @property
    def dim(self):
        return cone_dim(self.base)


Cone = Union[Zero, NonnegOrthant, SecondOrder, Product, Polar]


def _check_leaf_dim(dim):
    if int(dim) != dim or dim < 1:
        raise ValueError(f"cone dimension must be a positive integer, got {dim!r}")


def cone_dim(cone: Cone) -> int:
    """Total ambient dimension of ``cone``."""
    return cone.dim


def polar_of(cone: Cone) -> Cone:
    """Return a description of the polar cone, unwrapping double polars."""
    if isinstance(cone, Polar):
        return cone.base
    return Polar(cone)


def _as_vector(cone, v):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != cone.dim:
        raise ConeDimensionError(
            f"vector of shape {v.shape} does not match cone dimension {cone.dim}"
        )
    return v


def _project_soc(v):
    z, t = v[:-1], v[-1]
    nz = math.sqrt(z @ z)
    if nz <= t:
        return v.copy()
    if nz <= -t:
        # includes the boundary ||z|| == -t, where the closed form tends to 0
        return np.zeros_like(v)
    alpha = 0.5 * (nz + t)
    out = np.empty_like(v)
    out[:-1] = (alpha / nz) * z
    out[-1] = alpha
    return out


def _project(cone, v):
    if isinstance(cone, Zero):
        return np.zeros_like(v)
    if isinstance(cone, NonnegOrthant):
        return np.maximum(v, 0.0)
    if isinstance(cone, SecondOrder):
        return _project_soc(v)
    if isinstance(cone, Product):
        out = np.empty_like(v)
        for part, sl in cone.blocks():
            out[sl] = _project(part, v[sl])
        return out
    if isinstance(cone, Polar):
        return v - _project(cone.base, v)
    raise TypeError(f"unknown cone {cone!r}")


def project_cone(cone: Cone, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``cone``.

    Raises
    ------
    ConeDimensionError
        If ``len(v)`` differs from ``cone_dim(cone)``.
    """
    return _project(cone, _as_vector(cone, v))


def project_polar(cone: Cone, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the polar of ``cone``."""
    v = _as_vector(cone, v)
    return v - _project(cone, v)


def dist_cone(cone: Cone, v) -> float:
    v = _as_vector(cone, v)
    return float(np.linalg.norm(v - _project(cone, v)))


def dist_polar(cone: Cone, v) -> float:
    v = _as_vector(cone, v)
    return float(np.linalg.norm(_project(cone, v)))


def contains(cone: Cone, v, tol=1e-10) -> bool:
    """Membership test with tolerance ``tol * (1 + ||v||)``."""
    v = _as_vector(cone, v)
    return dist_cone(cone, v) <= tol * (1.0 + np.linalg.norm(v))


def _jacobian_soc(v):
    m = v.shape[0]
    z, t = v[:-1], v[-1]
    nz = math.sqrt(z @ z)
    if nz <= t:
        return np.eye(m)
    if nz <= -t:
        return np.zeros((m, m))
    zb = z / nz
    a = 0.5 * (nz + t) / nz
    J = np.empty((m, m))
    J[:-1, :-1] = a * np.eye(m - 1) + (0.5 - a) * np.outer(zb, zb)
    J[:-1, -1] = 0.5 * zb
    J[-1, :-1] = 0.5 * zb
    J[-1, -1] = 0.5
    return J


def _jacobian(cone, v):
    m = v.shape[0]
    if isinstance(cone, Zero):
        return np.zeros((m, m))
    if isinstance(cone, NonnegOrthant):
        return np.diag((v > 0).astype(float))
    if isinstance(cone, SecondOrder):
        return _jacobian_soc(v)
    if isinstance(cone, Product):
        J = np.zeros((m, m))
        for part, sl in cone.blocks():
            J[sl, sl] = _jacobian(part, v[sl])
        return J
    if isinstance(cone, Polar):
        return np.eye(m) - _jacobian(cone.base, v)
    raise TypeError(f"unknown cone {cone!r}")


def projection_jacobian(cone: Cone, v) -> np.ndarray:
    """An element of the generalized Jacobian of ``project_cone(cone, .)`` at ``v``.

    Away from the kinks of the projection this is the ordinary derivative.
    """
    return _jacobian(cone, _as_vector(cone, v))


# --- serialization -------------------------------------------------------

_LEAVES = {"zero": Zero, "nonneg": NonnegOrthant, "soc": SecondOrder}


def cone_to_dict(cone: Cone) -> dict:
    if isinstance(cone, Product):
        return {"type": "product", "parts": [cone_to_dict(p) for p in cone.parts]}
    if isinstance(cone, Polar):
        return {"type": "polar", "cone": cone_to_dict(cone.base)}
    for name, cls in _LEAVES.items():
        if isinstance(cone, cls):
            return {"type": name, "dim": cone.dim}
    raise TypeError(f"unknown cone {cone!r}")


def cone_from_dict(data: dict) -> Cone:
    kind = data.get("type")
    if kind in _LEAVES:
        return _LEAVES[kind](int(data["dim"]))
    if kind == "product":
        return Product(tuple(cone_from_dict(p) for p in data["parts"]))
    if kind == "polar":
        return Polar(cone_from_dict(data["cone"]))
    raise ValueError(f"unknown cone type {kind!r}")
