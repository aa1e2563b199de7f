"""SO(3) helpers for the single-rigid-body model.

Orientation is carried as an operating rotation ``R_op`` plus a small
deviation vector ``xi`` with ``R ~= R_op (I + [xi]x)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

SMALL_ANGLE_WARN = 0.3


def skew(v) -> np.ndarray:
    """Matrix ``[v]x`` with ``skew(v) @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]]) * 0.5


@dataclass(frozen=True)
class RotationState:
    R_op: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R_op", np.asarray(self.R_op, dtype=float).reshape(3, 3))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "RotationState":
        return cls(np.eye(3), np.zeros(3))

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.R_op
        return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def approx_rotation(state: RotationState) -> np.ndarray:
    """First-order rotation ``R_op (I + [xi]x)``."""
    if np.linalg.norm(state.xi) > SMALL_ANGLE_WARN:
        log.warning("rotation deviation %.3f rad exceeds small-angle range", np.linalg.norm(state.xi))
    return state.R_op @ (np.eye(3) + skew(state.xi))


def polar_orthonormalize(M) -> np.ndarray:
    """Closest rotation to ``M`` in Frobenius norm (polar factor)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


def reset_operating_point(state: RotationState) -> RotationState:
    """Fold ``xi`` into ``R_op`` and zero it."""
    return RotationState(polar_orthonormalize(approx_rotation(state)), np.zeros(3))


def exp_so3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    th = float(np.linalg.norm(v))
    K = skew(v)
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + np.sin(th) / th * K + (1.0 - np.cos(th)) / th**2 * K @ K


def log_so3(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    cos_th = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    th = float(np.arccos(cos_th))
    if th < 1e-8:
        return 0.5 * vee(R - R.T)
    if np.pi - th < 1e-6:
        # axis from the symmetric part near a half turn
        B = 0.5 * (R + np.eye(3))
        axis = B[:, int(np.argmax(np.diag(B)))]
        axis = axis / np.linalg.norm(axis)
        return th * axis
    return th / (2.0 * np.sin(th)) * vee(R - R.T)


def rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx(R) -> tuple[float, float, float]:
    """(yaw, pitch, roll) of ``R = Rz(yaw) Ry(pitch) Rx(roll)``; logging only."""
    R = np.asarray(R, dtype=float)
    pitch = float(np.arcsin(np.clip(-R[2, 0], -1.0, 1.0)))
    yaw = float(np.arctan2(R[1, 0], R[0, 0]))
    roll = float(np.arctan2(R[2, 1], R[2, 2]))
    return yaw, pitch, roll
