"""Continuous 6DoF rotation representation.

A rotation matrix R is encoded by its first two columns, stacked as
``[R11, R21, R31, R12, R22, R32]``.  The inverse map runs Gram-Schmidt on
the two 3-vectors and completes the frame with a cross product, so any
6-vector whose halves are not (near) parallel decodes to a proper rotation.

Throughout this module a "vec9" is the column-stacked 9-vector
``[c1; c2; c1 x c2]`` of a rotation matrix, i.e. the 6DoF entries followed
by the third column.  All functions broadcast over leading axes.
"""

from __future__ import annotations

import numpy as np

# Below this norm the Gram-Schmidt columns are considered degenerate.
DEGENERACY_EPS = 1e-8


class DegenerateRotationError(ValueError):
    """Raised when a 6DoF vector cannot be decoded into a rotation."""


def to_sixdof(R: np.ndarray) -> np.ndarray:
    """Stack the first two columns of rotation matrices ``(..., 3, 3)`` into ``(..., 6)``."""
    R = np.asarray(R, dtype=float)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def from_sixdof(r: np.ndarray) -> np.ndarray:
    """Decode 6DoF vectors ``(..., 6)`` into rotation matrices ``(..., 3, 3)``.

    Gram-Schmidt: normalize the first half, remove its component from the
    second half and normalize, then cross-product for the third column.
    Invariant to positive rescaling of the first half and to adding
    multiples of the first half to the second.
    """
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != 6:
        raise ValueError(f"expected trailing dimension 6, got {r.shape}")
    a = r[..., 0:3]
    b = r[..., 3:6]
    na = np.linalg.norm(a, axis=-1)
    if np.any(na < DEGENERACY_EPS):
        raise DegenerateRotationError("first column is (near) zero")
    c1 = a / na[..., None]
    c2 = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    nc2 = np.linalg.norm(c2, axis=-1)
    if np.any(nc2 < DEGENERACY_EPS):
        raise DegenerateRotationError("second column is (near) parallel to the first")
    c2 = c2 / nc2[..., None]
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def batch_from_sixdof(rs: np.ndarray) -> np.ndarray:
    """Per-joint decode of a ``(joints, 6)`` array (or any leading shape).

    Identical to calling :func:`from_sixdof` per joint, but a degenerate
    entry is reported with its flat joint index.
    """
    rs = np.asarray(rs, dtype=float)
    flat = rs.reshape(-1, 6)
    a, b = flat[:, 0:3], flat[:, 3:6]
    na = np.linalg.norm(a, axis=-1)
    bad = np.flatnonzero(na < DEGENERACY_EPS)
    if bad.size:
        raise DegenerateRotationError(f"degenerate 6DoF at joint {bad[0]}: zero first column")
    c1 = a / na[:, None]
    resid = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    bad = np.flatnonzero(np.linalg.norm(resid, axis=-1) < DEGENERACY_EPS)
    if bad.size:
        raise DegenerateRotationError(
            f"degenerate 6DoF at joint {bad[0]}: columns (near) parallel"
        )
    return from_sixdof(rs)


def vec9(R: np.ndarray) -> np.ndarray:
    """Column-stack rotation matrices ``(..., 3, 3)`` into ``(..., 9)``."""
    R = np.asarray(R, dtype=float)
    return np.concatenate([R[..., :, 0], R[..., :, 1], R[..., :, 2]], axis=-1)


def unvec9(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec9`."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 0:3], v[..., 3:6], v[..., 6:9]], axis=-1)


def _skew(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def jacobian_from_sixdof(r: np.ndarray) -> np.ndarray:
    """Jacobian ``(..., 9, 6)`` of vec9(from_sixdof(r)) with respect to r.

    Closed form from differentiating the Gram-Schmidt chain; the cross
    product row block follows from d(c1 x c2) = c1 x dc2 - c2 x dc1.
    """
    r = np.asarray(r, dtype=float)
    a = r[..., 0:3]
    b = r[..., 3:6]
    na = np.linalg.norm(a, axis=-1)
    if np.any(na < DEGENERACY_EPS):
        raise DegenerateRotationError("first column is (near) zero")
    c1 = a / na[..., None]
    proj = np.sum(c1 * b, axis=-1)
    c2r = b - proj[..., None] * c1
    nc2 = np.linalg.norm(c2r, axis=-1)
    if np.any(nc2 < DEGENERACY_EPS):
        raise DegenerateRotationError("second column is (near) parallel to the first")
    c2 = c2r / nc2[..., None]

    eye = np.broadcast_to(np.eye(3), c1.shape + (3,))
    # d c1 / d a
    dc1_da = (eye - c1[..., :, None] * c1[..., None, :]) / na[..., None, None]
    # c2raw = b - c1 (c1.b):  d/db = I - c1 c1^T, d/da via dc1
    dc2r_db = eye - c1[..., :, None] * c1[..., None, :]
    outer = c1[..., :, None] * b[..., None, :] + proj[..., None, None] * eye
    dc2r_da = -np.einsum("...ik,...kj->...ij", outer, dc1_da)
    dnorm = (eye - c2[..., :, None] * c2[..., None, :]) / nc2[..., None, None]
    dc2_da = np.einsum("...ik,...kj->...ij", dnorm, dc2r_da)
    dc2_db = np.einsum("...ik,...kj->...ij", dnorm, dc2r_db)

    s1 = _skew(c1)
    s2 = _skew(c2)
    dc3_da = np.einsum("...ik,...kj->...ij", s1, dc2_da) - np.einsum(
        "...ik,...kj->...ij", s2, dc1_da
    )
    dc3_db = np.einsum("...ik,...kj->...ij", s1, dc2_db)

    zeros = np.zeros_like(dc1_da)
    top = np.concatenate([dc1_da, zeros], axis=-1)
    mid = np.concatenate([dc2_da, dc2_db], axis=-1)
    bot = np.concatenate([dc3_da, dc3_db], axis=-1)
    return np.concatenate([top, mid, bot], axis=-2)


def vjp_from_sixdof(r: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Pull a vec9 cotangent ``(..., 9)`` back through the decode map: returns ``(..., 6)``."""
    J = jacobian_from_sixdof(r)
    cot = np.asarray(cotangent, dtype=float)
    return np.einsum("...k,...km->...m", cot, J)


def geodesic_angle(R1: np.ndarray, R2: np.ndarray) -> np.ndarray:
    """Geodesic distance between rotations in degrees, in [0, 180]."""
    R1 = np.asarray(R1, dtype=float)
    R2 = np.asarray(R2, dtype=float)
    tr = np.einsum("...ij,...ij->...", R1, R2)
    cos = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    # ||R1 - R2||_F^2 = 8 sin^2(theta/2); the arcsin form is exact at zero
    # and well conditioned for small angles, where arccos loses precision
    d2 = np.einsum("...ij,...ij->...", R1 - R2, R1 - R2)
    s = np.clip(np.sqrt(np.maximum(d2, 0.0)) / (2.0 * np.sqrt(2.0)), 0.0, 1.0)
    theta = np.where(s < 0.5, 2.0 * np.arcsin(s), np.arccos(cos))
    return np.degrees(theta)
