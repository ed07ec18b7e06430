"""Rigid and similarity transforms, quaternion algebra and pose losses

Quaternions are stored as (w, x, y, z). A transform maps a point p to
``sigma * R(q) p + t``; rigid transforms have ``sigma == 1``.
"""

from dataclasses import dataclass
from typing import Annotated, List, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator
from scipy.spatial.transform import Rotation

IDENTITY_QUATERNION = (1.0, 0.0, 0.0, 0.0)


def _as_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError(f"Quaternion {q.tolist()} cannot be normalized")
    return q / norm


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def wxyz_to_xyzw(q) -> np.ndarray:
    return np.roll(np.asarray(q, dtype=np.float64), -1, axis=-1)


def xyzw_to_wxyz(q) -> np.ndarray:
    return np.roll(np.asarray(q, dtype=np.float64), 1, axis=-1)


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a ⊗ b of (w, x, y, z) quaternions"""
    aw, ax, ay, az = np.asarray(a, dtype=np.float64)
    bw, bx, by, bz = np.asarray(b, dtype=np.float64)
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q) -> np.ndarray:
    return Rotation.from_quat(wxyz_to_xyzw(_as_quaternion(q))).as_matrix()


def matrix_to_quat(matrix) -> np.ndarray:
    return xyzw_to_wxyz(Rotation.from_matrix(np.asarray(matrix, dtype=np.float64)).as_quat())


def quat_from_rotvec(rotvec) -> np.ndarray:
    return xyzw_to_wxyz(Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_quat())


def canonical_quaternion(q) -> np.ndarray:
    """Unit quaternion with non-negative scalar part"""
    q = _as_quaternion(q)
    return -q if q[0] < 0 else q


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion"""
    q = rng.standard_normal(4)
    return canonical_quaternion(q)


@dataclass(frozen=True, eq=False)
class Sim3Transform:
    """Similarity transform p -> sigma * R(q) p + t"""

    q: np.ndarray
    t: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q", _readonly(_as_quaternion(self.q)))
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "t", _readonly(t))
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma <= 0:
            raise ValueError(f"Scale must be positive, got {sigma}")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def identity(cls):
        return cls(IDENTITY_QUATERNION, np.zeros(3), 1.0)

    @classmethod
    def from_matrix(cls, matrix) -> "Sim3Transform":
        """Build from a 4x4 homogeneous similarity matrix"""
        m = np.asarray(matrix, dtype=np.float64)
        linear = m[:3, :3]
        det = np.linalg.det(linear)
        if det <= 0:
            raise ValueError("Matrix is not an orientation-preserving similarity")
        sigma = float(np.cbrt(det))
        return Sim3Transform(matrix_to_quat(linear / sigma), m[:3, 3], sigma)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.sigma * self.rotation
        m[:3, 3] = self.t
        return m

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return self.sigma * (p @ self.rotation.T) + self.t

    def rotate(self, vectors) -> np.ndarray:
        """Rotate direction vectors (normals); scale and translation ignored"""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "Sim3Transform":
        r_inv = self.rotation.T
        q_inv = np.array([self.q[0], -self.q[1], -self.q[2], -self.q[3]])
        t_inv = -(r_inv @ self.t) / self.sigma
        return type(self)._rebuild(q_inv, t_inv, 1.0 / self.sigma)

    def compose(self, other: "Sim3Transform") -> "Sim3Transform":
        """self ∘ other: apply ``other`` first"""
        q = quat_multiply(self.q, other.q)
        t = self.sigma * (self.rotation @ other.t) + self.t
        sigma = self.sigma * other.sigma
        if isinstance(self, RigidTransform) and isinstance(other, RigidTransform):
            return RigidTransform(q, t)
        return Sim3Transform(q, t, sigma)

    @classmethod
    def _rebuild(cls, q, t, sigma):
        if cls is RigidTransform:
            return RigidTransform(q, t)
        return cls(q, t, sigma)

    def to_dict(self) -> dict:
        return PoseModel.from_transform(self).model_dump()

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(q={np.round(self.q, 9).tolist()}, "
            f"t={np.round(self.t, 9).tolist()}, sigma={self.sigma:.9g})"
        )


@dataclass(frozen=True, eq=False, repr=False)
class RigidTransform(Sim3Transform):
    """Element of SE(3)"""

    def __post_init__(self):
        super().__post_init__()
        if abs(self.sigma - 1.0) > 1e-12:
            raise ValueError("Rigid transforms have unit scale")

    @classmethod
    def identity(cls):
        return cls(IDENTITY_QUATERNION, np.zeros(3))


@dataclass(frozen=True, eq=False, repr=False)
class Pose7DoF(Sim3Transform):
    """7-DoF object pose (q, t, sigma) with q canonicalized to w >= 0"""

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "q", _readonly(canonical_quaternion(self.q)))

    @classmethod
    def from_transform(cls, transform: Sim3Transform) -> "Pose7DoF":
        return cls(transform.q, transform.t, transform.sigma)


AnyTransform = Union[Sim3Transform, RigidTransform, Pose7DoF]


def apply(transform: AnyTransform, points) -> np.ndarray:
    """sigma * R(q) p + t for a single point or an (n, 3) array"""
    return transform.apply(points)


def compose(a: AnyTransform, b: AnyTransform) -> Sim3Transform:
    return a.compose(b)


def inverse(transform: AnyTransform) -> Sim3Transform:
    return transform.inverse()


def decompose_sim3(transform) -> Pose7DoF:
    """Split a Sim(3) element (or 4x4 matrix) into canonical (q, t, sigma)"""
    if not isinstance(transform, Sim3Transform):
        transform = Sim3Transform.from_matrix(transform)
    return Pose7DoF.from_transform(transform)


def quaternion_loss(q, q_hat) -> float:
    """1 - <q, q_hat>^2, invariant to the sign of either quaternion"""
    inner = float(np.dot(_as_quaternion(q), _as_quaternion(q_hat)))
    return float(min(1.0, max(0.0, 1.0 - inner * inner)))


def geodesic_angle(q, q_hat) -> float:
    """Rotation angle between q and q_hat in radians, in [0, pi]"""
    inner = abs(float(np.dot(_as_quaternion(q), _as_quaternion(q_hat))))
    return 2.0 * float(np.arccos(min(1.0, inner)))


def retract(transform: AnyTransform, delta) -> AnyTransform:
    """Apply a left increment (rotation vector, translation) to a transform"""
    delta = np.asarray(delta, dtype=np.float64).reshape(6)
    step = RigidTransform(quat_from_rotvec(delta[:3]), delta[3:])
    result = step.compose(transform)
    return type(transform)._rebuild(result.q, result.t, result.sigma)


def retract_sim3(transform: AnyTransform, delta) -> Sim3Transform:
    """Left increment (rotation vector, translation, log scale)"""
    delta = np.asarray(delta, dtype=np.float64).reshape(7)
    step = Sim3Transform(quat_from_rotvec(delta[:3]), delta[3:6], float(np.exp(delta[6])))
    return step.compose(transform)


# JSON encoding -------------------------------------------------------------

Vector3 = Annotated[List[float], Field(min_length=3, max_length=3)]
Vector4 = Annotated[List[float], Field(min_length=4, max_length=4)]


class PoseModel(BaseModel):
    """JSON pose encoding {"q": [w, x, y, z], "t": [x, y, z], "sigma": s}"""

    q: Vector4 = Field(default_factory=lambda: list(IDENTITY_QUATERNION), description="Unit quaternion (w, x, y, z)")
    t: Vector3 = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="Translation in millimeters")
    sigma: float = Field(1.0, gt=0, description="Isotropic scale")

    @field_validator("q")
    @classmethod
    def _normalizable(cls, q: List[float]) -> List[float]:
        norm = float(np.linalg.norm(q))
        if not np.isfinite(norm) or norm < 1e-12:
            raise ValueError(f"quaternion {q} cannot be normalized")
        return q

    @classmethod
    def from_transform(cls, transform: Sim3Transform) -> "PoseModel":
        return cls(
            q=[float(v) for v in transform.q],
            t=[float(v) for v in transform.t],
            sigma=float(transform.sigma),
        )

    def to_pose(self) -> Pose7DoF:
        return Pose7DoF(self.q, self.t, self.sigma)

    def to_rigid(self) -> RigidTransform:
        return RigidTransform(self.q, self.t)
