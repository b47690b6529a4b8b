"""Supports, quaternion algebra, finite rotation symmetry groups, projections.

Quaternions are plain float64 arrays [w, x, y, z] with the scalar part first,
Hamilton product convention.  A unit quaternion q and its antipode -q encode
the same rotation (double cover), so rotation-valued comparisons always go
through the absolute inner product.

Symmetry groups are built by closing a small generator set under
multiplication and deduplicating antipodes, one fixed sign representative per
element.  The identity is always element 0, which makes the lowest-index
tie-break in `canonicalize` idempotent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, GroupClosureError

__all__ = [
    "DiscreteSet",
    "Sphere",
    "RotationGroup",
    "Manifold",
    "SymmetryGroup",
    "quat_mul",
    "quat_conj",
    "quat_from_axis_angle",
    "random_quaternion",
    "geodesic_distance",
    "canonicalize",
    "lift",
    "project",
    "build_symmetry_group",
    "ambient_dim",
]

_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class DiscreteSet:
    """Finite point support in ambient coordinates, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("DiscreteSet needs a 2-D array with at least 2 points")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("DiscreteSet points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Sphere:
    """Unit n-sphere embedded in R^(n+1)."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("Sphere needs intrinsic dimension n >= 1")

    @property
    def ambient_dim(self) -> int:
        return self.n + 1


@dataclass(frozen=True, eq=False)
class RotationGroup:
    """SO(3) in unit-quaternion coordinates, optionally modulo a finite symmetry."""

    symmetry: "SymmetryGroup | None" = None

    @property
    def ambient_dim(self) -> int:
        return 4


Manifold = DiscreteSet | Sphere | RotationGroup


def ambient_dim(manifold: Manifold) -> int:
    return manifold.ambient_dim


@dataclass(frozen=True, eq=False)
class SymmetryGroup:
    """Finite subgroup of SO(3) as sign-fixed unit quaternions, identity first."""

    name: str
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        elems = np.asarray(self.elements, dtype=np.float64)
        if elems.ndim != 2 or elems.shape[1] != 4:
            raise ValueError("SymmetryGroup elements must be an (m, 4) array")
        if not np.allclose(elems[0], _IDENTITY, atol=1e-9):
            raise ValueError("SymmetryGroup must list the identity first")
        elems.setflags(write=False)
        object.__setattr__(self, "elements", elems)

    def __len__(self) -> int:
        return self.elements.shape[0]


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of unit quaternions, renormalized; broadcasts."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], math.sin(half) * axis / norm])


def random_quaternion(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Uniform (Haar) unit quaternions via normalized 4-dim Gaussians."""
    shape = (4,) if n is None else (n, 4)
    q = rng.standard_normal(shape)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def geodesic_distance(a: np.ndarray, b: np.ndarray):
    """Rotation distance 2 arccos(|<a, b>|) in radians; sign-flip invariant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.abs(np.sum(a * b, axis=-1))
    out = 2.0 * np.arccos(np.clip(dot, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def _fix_sign(q: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """One representative per antipodal pair: Re >= 0, ties by first nonzero > 0."""
    if q[0] > tol:
        return q
    if q[0] < -tol:
        return -q
    for c in q[1:]:
        if abs(c) > tol:
            return q if c > 0 else -q
    return q


def canonicalize(q: np.ndarray, group: SymmetryGroup) -> np.ndarray:
    """Deterministic orbit representative: argmax_g |Re(qg)|, sign-fixed.

    Ties go to the lowest group-element index; the identity sits at index 0,
    which makes the map idempotent.
    """
    q = np.asarray(q, dtype=np.float64)
    orbit = quat_mul(q[None, :], group.elements)
    best = int(np.argmax(np.abs(orbit[:, 0])))
    return _fix_sign(orbit[best])


def lift(q_canon: np.ndarray, group: SymmetryGroup, rng: np.random.Generator) -> np.ndarray:
    """Right-multiply by a uniformly drawn group element."""
    g = group.elements[rng.integers(len(group))]
    return quat_mul(q_canon, g)


def project(x: np.ndarray, manifold: Manifold) -> np.ndarray:
    """Nearest-point projection onto the support; handles single rows or batches."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != manifold.ambient_dim:
        raise ValueError(
            f"point dimension {x.shape[-1]} does not match ambient {manifold.ambient_dim}"
        )
    if isinstance(manifold, DiscreteSet):
        d2 = np.sum((x[..., None, :] - manifold.points) ** 2, axis=-1)
        nearest = np.argmin(d2, axis=-1)  # ties: lowest index
        return manifold.points[nearest]
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms < 1e-12):
        raise DegenerateInputError("cannot project a zero vector onto a sphere")
    return x / norms


_PHI = (1.0 + math.sqrt(5.0)) / 2.0


def _generators(name: str, m: int | None) -> list[np.ndarray]:
    if name == "cyclic_z":
        if m is None or m < 1:
            raise ValueError("cyclic_z needs the fold count m >= 1")
        return [quat_from_axis_angle([0.0, 0.0, 1.0], 2.0 * math.pi / m)]
    if name == "tetrahedral":
        return [
            quat_from_axis_angle([0.0, 0.0, 1.0], math.pi),
            quat_from_axis_angle([1.0, 1.0, 1.0], 2.0 * math.pi / 3.0),
        ]
    if name == "octahedral":
        return [
            quat_from_axis_angle([0.0, 0.0, 1.0], math.pi / 2.0),
            quat_from_axis_angle([1.0, 1.0, 1.0], 2.0 * math.pi / 3.0),
        ]
    if name == "icosahedral":
        # 5-fold axis through an icosahedron vertex, 2-fold through an edge
        # midpoint; the cardinality invariant below validates the closure.
        return [
            quat_from_axis_angle([0.0, 1.0, _PHI], 2.0 * math.pi / 5.0),
            quat_from_axis_angle([0.0, 0.0, 1.0], math.pi),
        ]
    raise ValueError(f"unknown symmetry group {name!r}")


_EXPECTED_ORDER = {"tetrahedral": 12, "octahedral": 24, "icosahedral": 60}


def build_symmetry_group(name: str, m: int | None = None) -> SymmetryGroup:
    """Close the generator set under multiplication, dedup antipodal pairs."""
    elems = [_IDENTITY.copy()]
    for g in _generators(name, m):
        _insert(elems, g)

    for _ in range(12):
        added = False
        current = list(elems)
        for a in current:
            for b in current:
                if _insert(elems, quat_mul(a, b)):
                    added = True
        if len(elems) > 360:
            raise GroupClosureError(f"{name}: closure exceeded 360 elements")
        if not added:
            break
    else:
        raise GroupClosureError(f"{name}: no fixed point within iteration bound")

    arr = np.array(elems)
    # Stable deterministic order with the identity first: sort by descending
    # rounded coordinates (identity has the unique maximal Re).
    r = np.round(arr, 12)
    order = np.lexsort((-r[:, 3], -r[:, 2], -r[:, 1], -r[:, 0]))
    arr = arr[order]

    expected = m if name == "cyclic_z" else _EXPECTED_ORDER[name]
    if arr.shape[0] != expected:
        raise GroupClosureError(
            f"{name}: closure produced {arr.shape[0]} elements, expected {expected}"
        )
    return SymmetryGroup(name=name, elements=arr)


def _insert(elems: list[np.ndarray], q: np.ndarray) -> bool:
    """Add q to the list if no element matches it up to sign; returns True if added."""
    q = _fix_sign(q / np.linalg.norm(q))
    arr = np.asarray(elems)
    if np.max(np.abs(arr @ q)) > 1.0 - 1e-9:
        return False
    elems.append(q)
    return True
