"""Sensor simulation and the linear measurement operator.

With zero root translation, the location of a measured joint is

    l_j = [R_a1 ... R_ak] @ [b_1; ...; b_k] = C @ kappa
        = (I_3 kron kappa^T) @ vec_rowmajor(C)

where a_1..a_k are the parents along the root->j chain and b_1..b_k the
bone vectors they rotate.  ``build_A`` assembles both this Kronecker row
block per measured joint and a global dense matrix acting on the per-joint
column-stacked vec9 layout used by the rest of the package.

The differential form subtracts the head row block from each wrist block
so the (unknown) root translation cancels from the guidance residual.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rot6d
from .skeleton import Skeleton, forward_kinematics


@dataclass
class MeasurementSet:
    """Noisy per-frame locations and 6DoF rotations of the measured joints.

    Joint order is fixed: (head, left wrist, right wrist).
    """

    locations: np.ndarray  # (frames, 3, 3) meters
    rotations: np.ndarray  # (frames, 3, 6)
    sigma_l: float
    sigma_r: float

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        self.rotations = np.asarray(self.rotations, dtype=float)
        if self.locations.ndim != 3 or self.locations.shape[1:] != (3, 3):
            raise ValueError(f"locations must be (frames, 3, 3), got {self.locations.shape}")
        if self.rotations.shape != self.locations.shape[:1] + (3, 6):
            raise ValueError(f"rotations must be (frames, 3, 6), got {self.rotations.shape}")
        if self.sigma_l < 0 or self.sigma_r < 0:
            raise ValueError("sigma values must be non-negative")

    @property
    def frames(self) -> int:
        return self.locations.shape[0]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"frames": self.frames, "sigma_l": self.sigma_l,
                                 "sigma_r": self.sigma_r}) + "\n")
            for i in range(self.frames):
                fh.write(json.dumps({"t": i, "loc": self.locations[i].tolist(),
                                     "rot": self.rotations[i].tolist()}) + "\n")

    @staticmethod
    def load(path) -> "MeasurementSet":
        with open(path) as fh:
            header = json.loads(fh.readline())
            locs, rots = [], []
            for line in fh:
                doc = json.loads(line)
                locs.append(doc["loc"])
                rots.append(doc["rot"])
        if len(locs) != header["frames"]:
            raise ValueError(f"truncated file: {len(locs)} of {header['frames']} frames")
        locs = np.array(locs, dtype=float)
        rots = np.array(rots, dtype=float)
        if not (np.isfinite(locs).all() and np.isfinite(rots).all()):
            raise ValueError("non-finite values in measurement file")
        return MeasurementSet(locs, rots, header["sigma_l"], header["sigma_r"])


def extract_measurements(poses, skeleton: Skeleton, sigma_l: float, sigma_r: float,
                         seed: int = 0) -> MeasurementSet:
    """Simulate sensors: FK locations and 6DoF rotations of the measured joints
    plus iid Gaussian noise.  Deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    m = list(skeleton.measured_joints)
    locs = poses.joint_locations(skeleton)[:, m, :]
    rots = poses.rotations[:, m, :]
    locs = locs + sigma_l * rng.standard_normal(locs.shape)
    rots = rots + sigma_r * rng.standard_normal(rots.shape)
    return MeasurementSet(locs, rots, sigma_l, sigma_r)


def _chain_to_root(skeleton: Skeleton, joint: int) -> list[int]:
    """Path joint -> ... -> first non-root ancestor (root excluded)."""
    path = []
    j = joint
    while skeleton.parents[j] >= 0:
        path.append(j)
        j = skeleton.parents[j]
    return path[::-1]


@dataclass
class LinearOperatorA:
    """The linear map from stacked rotation entries to measured-joint locations.

    ``kron_rows[k]`` is the exact ``I_3 kron kappa^T`` block of measured
    joint k, acting on the row-major vectorization of the chain block
    matrix C.  ``matrix`` is the same map assembled over the full
    ``(J * 9,)`` column-stacked vec9 layout, rows grouped 3 per measured
    joint; ``diff_matrix`` holds the root-cancelling differential rows
    (wrist minus head), shape ``(6, J * 9)``.
    """

    measured_joints: tuple[int, ...]
    chains: list[list[int]]        # rotated parents per measured joint
    kappas: list[np.ndarray]       # stacked bone vectors per measured joint
    kron_rows: list[np.ndarray]    # (3, 9 * len(chain)) per measured joint
    matrix: np.ndarray             # (3 * |m|, J * 9)
    diff_matrix: np.ndarray        # (6, J * 9)
    joint_count: int

    def apply_vec9(self, p9: np.ndarray) -> np.ndarray:
        """Measured-joint locations from vec9 rotations ``(..., J, 9)`` -> ``(..., |m|, 3)``."""
        flat = np.asarray(p9, dtype=float).reshape(p9.shape[:-2] + (-1,))
        out = flat @ self.matrix.T
        return out.reshape(p9.shape[:-2] + (len(self.measured_joints), 3))

    def apply_diff_vec9(self, p9: np.ndarray) -> np.ndarray:
        """Differential locations from vec9 rotations ``(..., J, 9)`` -> ``(..., 2, 3)``."""
        flat = np.asarray(p9, dtype=float).reshape(p9.shape[:-2] + (-1,))
        out = flat @ self.diff_matrix.T
        return out.reshape(p9.shape[:-2] + (2, 3))


def build_A(skeleton: Skeleton, measured_joints=None) -> LinearOperatorA:
    """Assemble the measurement operator for a skeleton (zero root translation)."""
    if measured_joints is None:
        measured_joints = skeleton.measured_joints
    n = skeleton.joint_count
    chains, kappas, kron_rows = [], [], []
    full = np.zeros((3 * len(measured_joints), n * 9))
    for k, j in enumerate(measured_joints):
        if not 0 <= j < n:
            raise ValueError(f"measured joint {j} not in tree")
        path = _chain_to_root(skeleton, j)
        parents = [int(skeleton.parents[c]) for c in path]
        kappa = np.concatenate([skeleton.bone_vectors[c] for c in path])
        chains.append(parents)
        kappas.append(kappa)
        kron_rows.append(np.kron(np.eye(3), kappa[None, :]))
        # Same map over the per-joint column-stacked layout: the location
        # axis i picks row i of each chain rotation, whose entry in column
        # c sits at vec9 slot 3*c + i of that joint.
        for c_idx, (p, child) in enumerate(zip(parents, path)):
            b = skeleton.bone_vectors[child]
            for i in range(3):
                for c in range(3):
                    full[3 * k + i, 9 * p + 3 * c + i] += b[c]
    head_rows = full[0:3]
    diff = np.vstack([full[3:6] - head_rows, full[6:9] - head_rows])
    return LinearOperatorA(tuple(measured_joints), chains, kappas, kron_rows, full, diff, n)


def apply_measurement_operator(A: LinearOperatorA, r: np.ndarray) -> np.ndarray:
    """Predicted measured-joint locations from per-joint 6DoF ``(..., J, 6)``."""
    R = rot6d.batch_from_sixdof(r)
    return A.apply_vec9(rot6d.vec9(R))


def differential_transform(locations: np.ndarray) -> np.ndarray:
    """Per-frame differences (lwrist - head, rwrist - head): ``(..., 3, 3)`` -> ``(..., 2, 3)``.

    Invariant to adding any constant vector to all three inputs.
    """
    loc = np.asarray(locations, dtype=float)
    if loc.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) measured locations, got {loc.shape}")
    head = loc[..., 0, :]
    return np.stack([loc[..., 1, :] - head, loc[..., 2, :] - head], axis=-2)


def chain_locations(skeleton: Skeleton, A: LinearOperatorA, rotations: np.ndarray) -> np.ndarray:
    """Reference FK at the measured joints with zero root (oracle for the operator)."""
    locs = forward_kinematics(skeleton, rotations)
    return locs[..., list(A.measured_joints), :]
