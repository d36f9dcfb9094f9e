"""Minimal SO(3)/SE(3) operators: hat maps, exponentials, logs, adjoints.

Conventions: twists are 6-vectors ordered (v, w); hat6 produces the 4x4
matrix [[hat3(w), v], [0, 0]]. Rotations are 3x3 orthonormal matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this rotation angle the closed-form exp/log coefficients switch to
# their Taylor expansions.
_SMALL_ANGLE = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform g = (p, R); p in meters, R in SO(3)."""

    p: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _readonly(np.reshape(self.p, 3)))
        object.__setattr__(self, "R", _readonly(np.reshape(self.R, (3, 3))))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.eye(3))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.p + self.R @ other.p, self.R @ other.R)

    def inverse(self) -> "Pose":
        Rt = self.R.T
        return Pose(-Rt @ self.p, Rt)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.p + self.R @ np.asarray(point, dtype=float)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return Pose(T[:3, 3], T[:3, :3])


def hat3(w) -> np.ndarray:
    """Skew matrix of a 3-vector: hat3(w) @ x == cross(w, x)."""
    x, y, z = np.asarray(w, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(W: np.ndarray) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def hat6(V) -> np.ndarray:
    """4x4 twist matrix of V = (v, w)."""
    V = np.asarray(V, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = hat3(V[3:])
    out[:3, 3] = V[:3]
    return out


def exp_so3(w) -> np.ndarray:
    """Rodrigues' formula for the rotation vector w (axis * angle)."""
    w = np.asarray(w, dtype=float)
    th = float(np.linalg.norm(w))
    W = hat3(w)
    if th < _SMALL_ANGLE:
        # second-order series, exact enough at th < 1e-6
        return np.eye(3) + W + 0.5 * (W @ W)
    A = np.sin(th) / th
    B = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + A * W + B * (W @ W)


def log_so3(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R, angle in [0, pi].

    Near theta = 0 the antisymmetric part is used directly; near theta = pi
    the axis is recovered from the dominant column of R + I, where the naive
    sin-based formula is singular.
    """
    R = np.asarray(R, dtype=float)
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    th = float(np.arccos(c))
    if th < _SMALL_ANGLE:
        W = 0.5 * (R - R.T)
        w = vee3(W)
        # log(R) = vee(R - R^T)/2 * (1 + th^2/6 + ...)
        return w * (1.0 + th * th / 6.0)
    if np.pi - th < 1e-4:
        # (R + R^T)/2 - cos(th) I = (1 - cos th) n n^T exactly, so its
        # dominant column gives the axis without the O(pi - th) error the
        # naive R + I extraction carries.
        B = 0.5 * (R + R.T) - c * np.eye(3)
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.linalg.norm(B[:, k])
        # antisymmetric part sin(th) n fixes the sign (either sign is valid
        # at exactly pi)
        s = vee3(0.5 * (R - R.T))
        if np.dot(axis, s) < 0.0:
            axis = -axis
        return axis * th
    return th / (2.0 * np.sin(th)) * vee3(R - R.T)


def left_jacobian(w) -> np.ndarray:
    """Left Jacobian J_l of SO(3): exp((w+dw)^) ~ exp((J_l dw)^) exp(w^)."""
    w = np.asarray(w, dtype=float)
    th = float(np.linalg.norm(w))
    W = hat3(w)
    if th < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    A = (1.0 - np.cos(th)) / (th * th)
    B = (th - np.sin(th)) / (th ** 3)
    return np.eye(3) + A * W + B * (W @ W)


def right_jacobian(w) -> np.ndarray:
    """Right Jacobian J_r(w) = J_l(-w)."""
    return left_jacobian(-np.asarray(w, dtype=float))


def right_jacobian_inv(w) -> np.ndarray:
    """Inverse right Jacobian, used to differentiate log(R0^T R)."""
    w = np.asarray(w, dtype=float)
    th = float(np.linalg.norm(w))
    W = hat3(w)
    if th < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + (W @ W) / 12.0
    c = 1.0 / (th * th) - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) + 0.5 * W + c * (W @ W)


def dleft_jacobian_apply(w, c) -> np.ndarray:
    """d/dw of left_jacobian(w) @ c, as a 3x3 matrix.

    Needed by the planner's exact linearization of the pose update.
    """
    w = np.asarray(w, dtype=float)
    c = np.asarray(c, dtype=float)
    th = float(np.linalg.norm(w))
    wc = np.cross(w, c)
    wwc = np.cross(w, wc)
    if th < _SMALL_ANGLE:
        A, B = 0.5, 1.0 / 6.0
        dA, dB = -1.0 / 12.0, -1.0 / 60.0  # A'(th)/th, B'(th)/th limits
    else:
        A = (1.0 - np.cos(th)) / (th * th)
        B = (th - np.sin(th)) / (th ** 3)
        dA = (np.sin(th) / (th * th) - 2.0 * (1.0 - np.cos(th)) / (th ** 3)) / th
        dB = ((1.0 - np.cos(th)) / (th ** 3) - 3.0 * (th - np.sin(th)) / (th ** 4)) / th
    # d(w x c)/dw = -hat3(c); d(w x (w x c))/dw = (w.c) I + w c^T - 2 c w^T
    return (
        -A * hat3(c)
        + np.outer(wc, dA * w)
        + B * (np.dot(w, c) * np.eye(3) + np.outer(w, c) - 2.0 * np.outer(c, w))
        + np.outer(wwc, dB * w)
    )


def exp_twist(xi, theta: float) -> Pose:
    """Screw motion exp(hat6(xi) * theta) as a Pose."""
    xi = np.asarray(xi, dtype=float)
    v, w = xi[:3], xi[3:]
    R = exp_so3(w * theta)
    p = left_jacobian(w * theta) @ (v * theta)
    return Pose(p, R)


def log_se3(g: Pose) -> np.ndarray:
    """Twist xi = (v, w) with exp_twist(xi, 1) == g."""
    w = log_so3(g.R)
    # J_l is invertible for |w| < pi (the log branch keeps it there)
    v = np.linalg.solve(left_jacobian(w), g.p)
    return np.concatenate([v, w])


def adjoint(g: Pose) -> np.ndarray:
    """6x6 adjoint of g on (v, w) twists: [[R, hat3(p) R], [0, R]]."""
    out = np.zeros((6, 6))
    out[:3, :3] = g.R
    out[:3, 3:] = hat3(g.p) @ g.R
    out[3:, 3:] = g.R
    return out


def adjoint_inverse(g: Pose) -> np.ndarray:
    """Adjoint of g^{-1} without forming the inverse pose explicitly."""
    Rt = g.R.T
    out = np.zeros((6, 6))
    out[:3, :3] = Rt
    out[:3, 3:] = -Rt @ hat3(g.p)
    out[3:, 3:] = Rt
    return out


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return q / np.linalg.norm(q)


def rotation_between(a, b) -> np.ndarray:
    """Minimal rotation taking unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.cross(a, b)
    s = float(np.linalg.norm(c))
    d = float(np.clip(np.dot(a, b), -1.0, 1.0))
    if s < 1e-12:
        if d > 0.0:
            return np.eye(3)
        # antipodal: rotate pi about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return exp_so3(axis * np.pi)
    return exp_so3(c / s * np.arctan2(s, d))
