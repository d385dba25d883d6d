"""Shared geometric primitives: point clouds, rigid transforms, small eigenproblems.

Everything here is a pure function over immutable values, safe to call from
any number of workers. Rotations follow the convention p' = R @ p + t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCloud, NotSymmetric


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 3)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points in meters, stored as an (N, 3) float64 array.

    May be empty. Construction rejects NaN/Inf coordinates so downstream code
    never has to re-check finiteness.
    """

    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def __post_init__(self):
        pts = _as_points(self.points)
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return len(self) == 0


ORTHONORMALITY_TOL = 1e-9


@dataclass(frozen=True)
class SE3:
    """Rigid transform: 3x3 rotation (orthonormal, det +1) plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("transform contains non-finite entries")
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-7:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-7:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "SE3":
        return SE3(np.eye(3), np.zeros(3))

    @staticmethod
    def from_rt(R, t) -> "SE3":
        return SE3(np.asarray(R, dtype=np.float64), np.asarray(t, dtype=np.float64))

    @staticmethod
    def rot_z(angle_rad: float, translation=None) -> "SE3":
        c, s = math.cos(angle_rad), math.sin(angle_rad)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return SE3(R, np.zeros(3) if translation is None else translation)

    def compose(self, other: "SE3") -> "SE3":
        """Return self * other (apply ``other`` first, then ``self``)."""
        return SE3(self.rotation @ other.rotation,
                   self.rotation @ other.translation + self.translation)

    def inverse(self) -> "SE3":
        Rt = self.rotation.T
        return SE3(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def centroid(cloud: PointCloud) -> np.ndarray:
    """Arithmetic mean of the cloud's points. Raises EmptyCloud if empty."""
    if cloud.is_empty:
        raise EmptyCloud("centroid of an empty cloud is undefined")
    return cloud.points.mean(axis=0)


def apply_transform(transform: SE3, cloud: PointCloud) -> PointCloud:
    """Map every point p to R @ p + t, preserving order and length."""
    if cloud.is_empty:
        return cloud
    return PointCloud(transform.apply(cloud.points))


# ---------------------------------------------------------------------------
# Symmetric 3x3 eigen-decomposition: closed form (Cardano) with Jacobi fallback
# ---------------------------------------------------------------------------

def _jacobi_eig3(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations; robust for clustered eigenvalues."""
    A = M.copy()
    V = np.eye(3)
    scale = max(1.0, np.max(np.abs(M)))
    for _ in range(60):
        off = math.sqrt(A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2)
        if off < 1e-15 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            if abs(A[p, q]) < 1e-18 * scale:
                continue
            theta = 0.5 * (A[q, q] - A[p, p]) / A[p, q]
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            J = np.eye(3)
            J[p, p] = J[q, q] = c
            J[p, q] = s
            J[q, p] = -s
            A = J.T @ A @ J
            V = V @ J
    return np.diag(A).copy(), V


def eig_sym3(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a symmetric 3x3 matrix.

    Returns (eigenvalues sorted descending, eigenvectors as columns). The
    closed-form Cardano route is used when well separated; a deterministic
    Jacobi iteration takes over whenever the closed-form eigenvectors fail a
    residual check (clustered eigenvalues lose accuracy in the cross-product
    construction well before the exact-degeneracy threshold).
    """
    M = np.asarray(M, dtype=np.float64).reshape(3, 3)
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > 1e-9 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-9")
    M = 0.5 * (M + M.T)

    m = np.trace(M) / 3.0
    K = M - m * np.eye(3)
    q = np.linalg.det(K) / 2.0
    p = np.sum(K * K) / 6.0
    if p < 1e-30:
        vals = np.full(3, m)
        return vals, np.eye(3)

    # Cardano: eigenvalues of K are 2*sqrt(p)*cos(phi + 2k*pi/3)
    sp = math.sqrt(p)
    disc = max(p ** 3 - q * q, 0.0)
    phi = math.atan2(math.sqrt(disc), q) / 3.0
    c, s = math.cos(phi), math.sin(phi)
    lam = np.array([
        m + 2.0 * sp * c,
        m - sp * (c + math.sqrt(3.0) * s),
        m - sp * (c - math.sqrt(3.0) * s),
    ])
    order = np.argsort(lam)[::-1]
    lam = lam[order]

    def eigvec(l: float) -> np.ndarray | None:
        A = M - l * np.eye(3)
        crosses = [np.cross(A[i], A[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
        norms = [np.linalg.norm(cst) for cst in crosses]
        best = int(np.argmax(norms))
        if norms[best] < 1e-14 * scale * scale:
            return None
        return crosses[best] / norms[best]

    v1 = eigvec(lam[0])
    v2 = eigvec(lam[1])
    ok = v1 is not None and v2 is not None
    if ok:
        v2 = v2 - np.dot(v2, v1) * v1
        n2 = np.linalg.norm(v2)
        ok = n2 > 1e-9
    if ok:
        v2 = v2 / n2
        v3 = np.cross(v1, v2)
        V = np.column_stack([v1, v2, v3])
        resid = np.max(np.abs(M @ V - V * lam[None, :]))
        ok = resid <= 1e-9 * scale
    if not ok:
        vals, V = _jacobi_eig3(M)
        order = np.argsort(vals)[::-1]
        lam = vals[order]
        V = V[:, order]

    # Deterministic sign: largest-magnitude component of each vector positive.
    for i in range(3):
        j = int(np.argmax(np.abs(V[:, i])))
        if V[j, i] < 0:
            V[:, i] = -V[:, i]
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    return lam, V


# ---------------------------------------------------------------------------
# so(3)/se(3) calculus for the pose-graph solver. Tangent vectors are ordered
# [rotation; translation] and poses are perturbed on the left: T <- Exp(d) * T.
# ---------------------------------------------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    W = skew(w)
    if theta < 1e-10:
        return np.eye(3) + W + 0.5 * (W @ W)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = math.acos(tr)
    if theta < 1e-10:
        # First-order: R ~ I + skew(w)
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if theta > math.pi - 1e-6:
        # Near pi the off-diagonal formula degenerates; recover the axis from
        # the dominant diagonal of (R + I) / 2.
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / math.sqrt(max(B[k, k], 1e-18))
        axis = axis / np.linalg.norm(axis)
        # Fix the sign using the skew part where it is still informative.
        w_skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(w_skew, axis) < 0:
            axis = -axis
        return axis * theta
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * theta / (2.0 * math.sin(theta))


def so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    W = skew(w)
    if theta < 1e-8:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    t2 = theta * theta
    a = (1.0 - math.cos(theta)) / t2
    b = (theta - math.sin(theta)) / (t2 * theta)
    return np.eye(3) + a * W + b * (W @ W)


def so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    W = skew(w)
    if theta < 1e-8:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    half = theta / 2.0
    cot = 1.0 / math.tan(half)
    coef = (1.0 - half * cot) / (theta * theta)
    return np.eye(3) - 0.5 * W + coef * (W @ W)


def se3_exp(xi: np.ndarray) -> SE3:
    """Exponential map; xi = [w; v] with rotation block first."""
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    w, v = xi[:3], xi[3:]
    R = so3_exp(w)
    t = so3_left_jacobian(w) @ v
    return SE3(R, t)


def se3_log(T: SE3) -> np.ndarray:
    w = so3_log(T.rotation)
    v = so3_left_jacobian_inv(w) @ T.translation
    return np.concatenate([w, v])


def se3_adjoint(T: SE3) -> np.ndarray:
    """Adjoint for the [rotation; translation] tangent ordering."""
    A = np.zeros((6, 6))
    A[:3, :3] = T.rotation
    A[3:, :3] = skew(T.translation) @ T.rotation
    A[3:, 3:] = T.rotation
    return A


def se3_ad(xi: np.ndarray) -> np.ndarray:
    """Lie-algebra adjoint (ad) of xi = [w; v]."""
    w, v = xi[:3], xi[3:]
    A = np.zeros((6, 6))
    A[:3, :3] = skew(w)
    A[3:, :3] = skew(v)
    A[3:, 3:] = skew(w)
    return A


def se3_left_jacobian(xi: np.ndarray, terms: int = 40) -> np.ndarray:
    """Left Jacobian of SE(3) as a truncated ad-series.

    J = sum_{n>=0} ad^n / (n+1)!. Terms decay factorially, so forty terms
    reach machine precision for any |xi| that se3_log can produce.
    """
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    A = se3_ad(xi)
    J = np.eye(6)
    term = np.eye(6)
    for n in range(1, terms + 1):
        term = term @ A / (n + 1.0)
        J = J + term
        if np.max(np.abs(term)) < 1e-17:
            break
    return J


def se3_left_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    return np.linalg.solve(se3_left_jacobian(xi), np.eye(6))
