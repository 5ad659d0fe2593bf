"""Construction and analysis of 3x3 linear transforms.

Transforms are plain float64 numpy arrays of shape (3, 3); rows index the
output axis and columns the input axis, so a point maps as ``q = A @ p``
and a cloud stored row-wise maps as ``Q = P @ A.T``.

The module builds exact rotations (Euler angles, fixed extrinsic axes,
product order R_x * R_y * R_z) and reflections (Householder matrices from
a spherical-coordinate unit normal), and measures how far an arbitrary
transform is from an isometry via the spectral norm of ``A.T @ A - I``
together with its analytic gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Transform3 = np.ndarray  # (3, 3) float64, row-major

#: Default absolute gap below which the dominant eigenvalue of A^T A - I is
#: treated as multiple and the penalty gradient is only a subgradient.
DEGENERACY_TOL = 1e-8

_JACOBI_TOL = 1e-12
_TWO_PI = 2.0 * math.pi


class DegenerateSpectrum(Exception):
    """Dominant eigenvalue of A^T A - I is not simple within tolerance.

    Carries a valid ``subgradient`` (built from one dominant eigenvector)
    so callers can fall back to a subgradient step and flag it.
    """

    def __init__(self, message: str, subgradient: np.ndarray):
        super().__init__(message)
        self.subgradient = subgradient


@dataclass(frozen=True)
class EulerAngles:
    """Rotation angles about the fixed x, y, z axes, each in [-pi, pi]."""

    theta_x: float
    theta_y: float
    theta_z: float

    def __post_init__(self):
        for name in ("theta_x", "theta_y", "theta_z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            if not -math.pi <= v <= math.pi:
                raise ValueError(f"{name} must lie in [-pi, pi], got {v!r}")


@dataclass(frozen=True)
class ReflectionAxis:
    """Unit normal of a reflection plane, in spherical coordinates.

    azimuth in [-pi, pi], polar in [0, pi]. The normal is
    v = (sin polar * cos azimuth, sin polar * sin azimuth, cos polar).
    At polar 0 or pi the azimuth is redundant.
    """

    azimuth: float
    polar: float

    def __post_init__(self):
        if not (math.isfinite(self.azimuth) and math.isfinite(self.polar)):
            raise ValueError("reflection angles must be finite")
        if not -math.pi <= self.azimuth <= math.pi:
            raise ValueError(f"azimuth must lie in [-pi, pi], got {self.azimuth!r}")
        if not 0.0 <= self.polar <= math.pi:
            raise ValueError(f"polar must lie in [0, pi], got {self.polar!r}")

    @classmethod
    def from_angles(cls, azimuth: float, polar: float) -> "ReflectionAxis":
        """Canonicalize arbitrary finite angles into the declared ranges.

        The Householder matrix depends on the normal only up to sign, so a
        negative polar angle folds onto a positive one with the azimuth
        shifted by pi; azimuth wraps modulo 2*pi.
        """
        if not (math.isfinite(azimuth) and math.isfinite(polar)):
            raise ValueError("reflection angles must be finite")
        polar = math.remainder(polar, _TWO_PI)
        if polar < 0.0:
            polar = -polar
            azimuth += math.pi
        if polar > math.pi:
            polar = _TWO_PI - polar
            azimuth += math.pi
        azimuth = math.remainder(azimuth, _TWO_PI)
        return cls(azimuth=azimuth, polar=polar)

    def unit_vector(self) -> np.ndarray:
        sp = math.sin(self.polar)
        return np.array(
            [sp * math.cos(self.azimuth), sp * math.sin(self.azimuth), math.cos(self.polar)],
            dtype=np.float64,
        )


def euler_to_rotation(angles: EulerAngles) -> Transform3:
    """Rotation matrix R_x(theta_x) @ R_y(theta_y) @ R_z(theta_z).

    Fixed extrinsic axes, right-hand rule about each axis. The result is
    in SO(3) up to floating-point roundoff.
    """
    cx, sx = math.cos(angles.theta_x), math.sin(angles.theta_x)
    cy, sy = math.cos(angles.theta_y), math.sin(angles.theta_y)
    cz, sz = math.cos(angles.theta_z), math.sin(angles.theta_z)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return rx @ ry @ rz


def householder_reflection(axis: ReflectionAxis) -> Transform3:
    """Reflection I - 2 v v^T across the plane with unit normal v."""
    v = axis.unit_vector()
    return np.eye(3) - 2.0 * np.outer(v, v)


def compose(a: Transform3, b: Transform3) -> Transform3:
    """Matrix product a @ b (apply b first, then a)."""
    return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)


def is_orthogonal(a: Transform3, tol: float) -> bool:
    """True iff max-abs entry of A^T A - I is at most tol."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    a = np.asarray(a, dtype=np.float64)
    return float(np.max(np.abs(a.T @ a - np.eye(3)))) <= tol


def _jacobi_eigh_3x3(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns.
    Convergence: off-diagonal magnitude below 1e-12 relative to the
    matrix scale (absolute for matrices of scale <= 1).
    """
    a = np.array(m, dtype=np.float64)
    v = np.eye(3)
    scale = max(1.0, float(np.max(np.abs(a))))
    threshold = _JACOBI_TOL * scale
    for _ in range(30):
        off = max(abs(a[0, 1]), abs(a[0, 2]), abs(a[1, 2]))
        if off <= threshold:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if abs(apq) <= threshold * 1e-3:
                continue
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            j = np.eye(3)
            j[p, p] = c
            j[q, q] = c
            j[p, q] = s
            j[q, p] = -s
            a = j.T @ a @ j
            v = v @ j
    return np.diag(a).copy(), v


def _dominant_eigenpair(m: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Dominant-by-magnitude eigenpair of a symmetric matrix plus its gap.

    Returns (lambda, vector, gap) where gap is the margin between the
    largest and second-largest absolute eigenvalues.
    """
    evals, evecs = _jacobi_eigh_3x3(m)
    order = np.argsort(-np.abs(evals))
    lam = float(evals[order[0]])
    vec = evecs[:, order[0]].copy()
    gap = float(abs(evals[order[0]]) - abs(evals[order[1]]))
    return lam, vec, gap


def spectral_norm_penalty(a: Transform3) -> float:
    """Spectral norm of A^T A - I: the largest absolute eigenvalue.

    Zero exactly when A is orthogonal; strictly positive otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    m = a.T @ a - np.eye(3)
    evals, _ = _jacobi_eigh_3x3(m)
    return float(np.max(np.abs(evals)))


def spectral_norm_penalty_grad(a: Transform3, degeneracy_tol: float = DEGENERACY_TOL) -> Transform3:
    """Analytic gradient of spectral_norm_penalty with respect to A.

    With (lambda, v) the dominant eigenpair of M = A^T A - I, the gradient
    is 2 * sign(lambda) * (A v) v^T. Raises DegenerateSpectrum when the
    dominant eigenvalue is not simple within degeneracy_tol; the exception
    carries the same formula evaluated at one dominant eigenvector, which
    is a valid subgradient.
    """
    a = np.asarray(a, dtype=np.float64)
    m = a.T @ a - np.eye(3)
    lam, vec, gap = _dominant_eigenpair(m)
    sign = 1.0 if lam >= 0.0 else -1.0
    grad = 2.0 * sign * np.outer(a @ vec, vec)
    if gap <= degeneracy_tol:
        raise DegenerateSpectrum(
            f"dominant eigenvalue gap {gap:.3e} within tolerance {degeneracy_tol:.3e}",
            subgradient=grad,
        )
    return grad


def transform_to_list(a: Transform3) -> list[float]:
    """Row-major 9-element list, the JSON wire form of a transform."""
    return [float(x) for x in np.asarray(a, dtype=np.float64).reshape(9)]


def transform_from_list(values: list[float]) -> Transform3:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (9,):
        raise ValueError(f"expected 9 values, got shape {arr.shape}")
    return arr.reshape(3, 3)
